#include "upscale/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace upscale {

GridSpec::GridSpec(int nx, int ny, int nz, double dx, double dy, double dz)
    : counts_{nx, ny, nz}
    , spacing_{dx, dy, dz}
{
    for (int a = 0; a < 3; ++a) {
        if (counts_[a] < 1)
            throw std::invalid_argument(std::string("grid count along ") + kAxisName[a] + " must be >= 1");
        if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
            throw std::invalid_argument(std::string("grid spacing along ") + kAxisName[a] + " must be > 0");
    }
}

std::array<int, 3> GridSpec::coords(std::size_t idx) const
{
    const auto nx = static_cast<std::size_t>(counts_[0]);
    const auto ny = static_cast<std::size_t>(counts_[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
}

double GridSpec::face_area(int axis) const
{
    switch (axis) {
    case 0: return spacing_[1] * spacing_[2];
    case 1: return spacing_[0] * spacing_[2];
    default: return spacing_[0] * spacing_[1];
    }
}

std::string describe(const GridSpec& grid)
{
    std::ostringstream os;
    os << grid.nx() << "x" << grid.ny();
    if (!grid.is2d())
        os << "x" << grid.nz();
    return os.str();
}

GridSpec coarsen(const GridSpec& fine, const Ratio& ratio)
{
    std::array<int, 3> n{};
    for (int a = 0; a < 3; ++a) {
        if (ratio[a] < 1)
            throw DimensionMismatch(std::string("upscaling ratio along ") + kAxisName[a] + " must be >= 1");
        if (fine.n(a) % ratio[a] != 0) {
            std::ostringstream os;
            os << "fine dimension along " << kAxisName[a] << " (" << fine.n(a)
               << ") is not divisible by ratio " << ratio[a];
            throw DimensionMismatch(os.str());
        }
        n[a] = fine.n(a) / ratio[a];
    }
    return GridSpec(n[0], n[1], n[2],
                    fine.spacing(0) * ratio[0], fine.spacing(1) * ratio[1], fine.spacing(2) * ratio[2]);
}

ScalarField::ScalarField(GridSpec grid, std::vector<double> values)
    : grid_(grid)
    , values_(std::move(values))
{
    if (values_.size() != grid_.cells())
        throw DimensionMismatch("scalar field length does not match grid");
    for (double v : values_)
        if (!std::isfinite(v))
            throw std::invalid_argument("scalar field contains a non-finite value");
}

ConductivityField::ConductivityField(GridSpec grid, std::vector<std::vector<double>> components)
    : grid_(grid)
    , comp_(std::move(components))
{
    if (static_cast<int>(comp_.size()) != grid_.dim())
        throw DimensionMismatch("conductivity field needs one component per active axis");
    for (const auto& c : comp_) {
        if (c.size() != grid_.cells())
            throw DimensionMismatch("conductivity component length does not match grid");
        for (double v : c)
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument("conductivity must be strictly positive and finite");
    }
}

ConductivityField ConductivityField::isotropic(const GridSpec& grid, std::vector<double> k)
{
    std::vector<std::vector<double>> comps(static_cast<std::size_t>(grid.dim()), k);
    return ConductivityField(grid, std::move(comps));
}

ConductivityField ConductivityField::uniform(const GridSpec& grid, double k)
{
    return isotropic(grid, std::vector<double>(grid.cells(), k));
}

double ConductivityField::min_value() const
{
    double m = comp_.front().front();
    for (const auto& c : comp_)
        m = std::min(m, *std::min_element(c.begin(), c.end()));
    return m;
}

double ConductivityField::max_value() const
{
    double m = comp_.front().front();
    for (const auto& c : comp_)
        m = std::max(m, *std::max_element(c.begin(), c.end()));
    return m;
}

std::vector<Patch> partition(const ConductivityField& field, const Ratio& ratio)
{
    const GridSpec& fine = field.grid();
    const GridSpec coarse = coarsen(fine, ratio);
    const GridSpec local(ratio[0], ratio[1], ratio[2], fine.spacing(0), fine.spacing(1), fine.spacing(2));
    const int ncomp = field.components();

    std::vector<Patch> patches;
    patches.reserve(coarse.cells());
    for (int K = 0; K < coarse.nz(); ++K)
        for (int J = 0; J < coarse.ny(); ++J)
            for (int I = 0; I < coarse.nx(); ++I) {
                std::vector<std::vector<double>> comps(ncomp, std::vector<double>(local.cells()));
                for (int k = 0; k < ratio[2]; ++k)
                    for (int j = 0; j < ratio[1]; ++j)
                        for (int i = 0; i < ratio[0]; ++i) {
                            const std::size_t src = fine.index(I * ratio[0] + i, J * ratio[1] + j, K * ratio[2] + k);
                            const std::size_t dst = local.index(i, j, k);
                            for (int c = 0; c < ncomp; ++c)
                                comps[c][dst] = field.k(c, src);
                        }
                patches.push_back(Patch{{I, J, K}, ConductivityField(local, std::move(comps))});
            }
    return patches;
}

ConductivityField reassemble(std::span<const Patch> patches, const GridSpec& fine, const Ratio& ratio)
{
    const GridSpec coarse = coarsen(fine, ratio);
    if (patches.size() != coarse.cells())
        throw DimensionMismatch("patch count does not match coarse grid");
    const int ncomp = fine.dim();
    std::vector<std::vector<double>> comps(ncomp, std::vector<double>(fine.cells()));
    for (const Patch& p : patches) {
        const GridSpec& local = p.field.grid();
        if (local.counts() != ratio.r || p.field.components() != ncomp)
            throw DimensionMismatch("patch shape does not match ratio");
        const auto [I, J, K] = p.coarse_index;
        for (int k = 0; k < ratio[2]; ++k)
            for (int j = 0; j < ratio[1]; ++j)
                for (int i = 0; i < ratio[0]; ++i) {
                    const std::size_t dst = fine.index(I * ratio[0] + i, J * ratio[1] + j, K * ratio[2] + k);
                    for (int c = 0; c < ncomp; ++c)
                        comps[c][dst] = p.field.k(c, local.index(i, j, k));
                }
    }
    return ConductivityField(fine, std::move(comps));
}

ScalarField block_average(const ScalarField& values, const Ratio& ratio)
{
    const GridSpec& fine = values.grid();
    const GridSpec coarse = coarsen(fine, ratio);
    std::vector<double> sums(coarse.cells(), 0.0);
    for (int k = 0; k < fine.nz(); ++k)
        for (int j = 0; j < fine.ny(); ++j)
            for (int i = 0; i < fine.nx(); ++i)
                sums[coarse.index(i / ratio[0], j / ratio[1], k / ratio[2])] += values[fine.index(i, j, k)];
    const double inv = 1.0 / (static_cast<double>(ratio[0]) * ratio[1] * ratio[2]);
    for (double& s : sums)
        s *= inv;
    return ScalarField(coarse, std::move(sums));
}

ConductivityField diagonal_field(const CoarseModel& model)
{
    const int dim = model.coarse_grid.dim();
    if (model.tensors.size() != model.coarse_grid.cells())
        throw DimensionMismatch("coarse model needs one tensor per coarse cell");
    std::vector<std::vector<double>> comps(dim, std::vector<double>(model.tensors.size()));
    for (std::size_t c = 0; c < model.tensors.size(); ++c)
        for (int a = 0; a < dim; ++a)
            comps[a][c] = model.tensors[c](a, a);
    return ConductivityField(model.coarse_grid, std::move(comps));
}

namespace {

GridSpec swapped_grid(const GridSpec& g, int a, int b)
{
    auto n = g.counts();
    auto d = g.spacings();
    std::swap(n[a], n[b]);
    std::swap(d[a], d[b]);
    return GridSpec(n[0], n[1], n[2], d[0], d[1], d[2]);
}

std::vector<double> swap_cells(std::span<const double> src, const GridSpec& from, const GridSpec& to, int a, int b)
{
    std::vector<double> out(src.size());
    for (std::size_t idx = 0; idx < src.size(); ++idx) {
        auto c = from.coords(idx);
        std::swap(c[a], c[b]);
        out[to.index(c[0], c[1], c[2])] = src[idx];
    }
    return out;
}

void check_swap(const GridSpec& g, int a, int b)
{
    if (a < 0 || b < 0 || a >= g.dim() || b >= g.dim())
        throw std::invalid_argument("swap_axes: axis out of range for grid dimensionality");
}

} // namespace

ConductivityField swap_axes(const ConductivityField& field, int a, int b)
{
    const GridSpec& g = field.grid();
    check_swap(g, a, b);
    const GridSpec to = swapped_grid(g, a, b);
    std::vector<std::vector<double>> comps;
    for (int c = 0; c < field.components(); ++c)
        comps.push_back(swap_cells(field.component(c), g, to, a, b));
    std::swap(comps[a], comps[b]);
    return ConductivityField(to, std::move(comps));
}

ScalarField swap_axes(const ScalarField& field, int a, int b)
{
    const GridSpec& g = field.grid();
    check_swap(g, a, b);
    const GridSpec to = swapped_grid(g, a, b);
    return ScalarField(to, swap_cells(field.values(), g, to, a, b));
}

} // namespace upscale
