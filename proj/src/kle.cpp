#include "upscale/kle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace upscale {

void CovarianceModel::validate() const
{
    if (!(variance >= 0.0) || !std::isfinite(variance))
        throw std::invalid_argument("covariance variance must be >= 0");
    for (int a = 0; a < 3; ++a)
        if (!(corr_length[a] > 0.0))
            throw std::invalid_argument(std::string("correlation length along ") + kAxisName[a] + " must be > 0");
}

double CovarianceModel::operator()(const std::array<double, 3>& x, const std::array<double, 3>& y, int dim) const
{
    double s = 0.0;
    for (int a = 0; a < dim; ++a)
        s += std::abs(x[a] - y[a]) / corr_length[a];
    return variance * std::exp(-s);
}

namespace {

struct AxisEigen
{
    Eigen::VectorXd values;  // descending, clamped at 0
    Eigen::MatrixXd vectors; // matching columns
};

// Unit-variance exponential kernel on cell centers of one axis.
AxisEigen axis_decomposition(int n, double spacing, double eta)
{
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            c(i, j) = std::exp(-std::abs(i - j) * spacing / eta);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    if (es.info() != Eigen::Success)
        throw DecompositionError("1D covariance eigendecomposition failed");

    AxisEigen out;
    out.values = es.eigenvalues().reverse();
    out.vectors = es.eigenvectors().rowwise().reverse();
    const double top = out.values(0);
    for (int i = 0; i < n; ++i) {
        if (out.values(i) < -1e-10 * top)
            throw DecompositionError("covariance is not positive semidefinite (eigenvalue "
                                     + std::to_string(out.values(i)) + ")");
        out.values(i) = std::max(out.values(i), 0.0);
    }
    // Fix the sign so the first nonzero entry is positive; keeps bases reproducible.
    for (int m = 0; m < n; ++m) {
        for (int i = 0; i < n; ++i) {
            if (std::abs(out.vectors(i, m)) > 1e-12) {
                if (out.vectors(i, m) < 0)
                    out.vectors.col(m) *= -1.0;
                break;
            }
        }
    }
    return out;
}

} // namespace

KleBasis decompose(const CovarianceModel& model, const GridSpec& grid, double target_energy)
{
    model.validate();
    if (!(target_energy > 0.0 && target_energy <= 1.0))
        throw std::invalid_argument("target energy must lie in (0, 1]");

    const int dim = grid.dim();
    std::array<AxisEigen, 3> axes;
    for (int a = 0; a < 3; ++a) {
        if (a < dim) {
            axes[a] = axis_decomposition(grid.n(a), grid.spacing(a), model.corr_length[a]);
        } else {
            axes[a].values = Eigen::VectorXd::Ones(1);
            axes[a].vectors = Eigen::MatrixXd::Ones(1, 1);
        }
    }

    std::vector<KleBasis::Mode> all;
    all.reserve(grid.cells());
    for (int k = 0; k < grid.nz(); ++k)
        for (int j = 0; j < grid.ny(); ++j)
            for (int i = 0; i < grid.nx(); ++i)
                all.push_back({model.variance * axes[0].values(i) * axes[1].values(j) * axes[2].values(k), {i, j, k}});

    std::stable_sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.lambda > r.lambda; });

    double total = 0.0;
    for (const auto& m : all)
        total += m.lambda;

    KleBasis basis;
    basis.grid_ = grid;
    basis.total_energy_ = total;
    for (int a = 0; a < 3; ++a)
        basis.vectors_[a] = std::move(axes[a].vectors);

    if (total <= 0.0) {
        // Zero variance: keep a single (zero-weight) mode so sampling stays well defined.
        basis.modes_.push_back(all.front());
        basis.energy_fraction_ = 1.0;
        return basis;
    }

    double kept = 0.0;
    std::size_t n = 0;
    while (n < all.size()) {
        kept += all[n].lambda;
        ++n;
        if (kept / total >= target_energy - 1e-12)
            break;
    }
    basis.modes_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    basis.energy_fraction_ = std::min(1.0, kept / total);
    return basis;
}

std::vector<double> KleBasis::eigenfunction(int m) const
{
    const auto& [i0, j0, k0] = modes_.at(m).axis_index;
    std::vector<double> f(grid_.cells());
    for (int k = 0; k < grid_.nz(); ++k)
        for (int j = 0; j < grid_.ny(); ++j)
            for (int i = 0; i < grid_.nx(); ++i)
                f[grid_.index(i, j, k)] = vectors_[0](i, i0) * vectors_[1](j, j0) * vectors_[2](k, k0);
    return f;
}

double NormalStream::uniform_open()
{
    // 53 random bits mapped to (0, 1).
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::next()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RandomVector RandomVector::draw(int n_modes, std::uint64_t seed)
{
    RandomVector rv;
    rv.seed = seed;
    rv.xi.resize(static_cast<std::size_t>(n_modes));
    NormalStream normals(seed);
    for (double& x : rv.xi)
        x = normals.next();
    return rv;
}

ScalarField sample(const KleBasis& basis, const CovarianceModel& model, const RandomVector& xi)
{
    if (static_cast<int>(xi.xi.size()) != basis.n_modes())
        throw DimensionMismatch("random vector length " + std::to_string(xi.xi.size())
                                + " does not match basis with " + std::to_string(basis.n_modes()) + " modes");

    const GridSpec& g = basis.grid();
    const int nx = g.nx(), ny = g.ny(), nz = g.nz();

    // Coefficients on the (i, j, k) tensor-product index, then three mode products.
    std::vector<Eigen::MatrixXd> coeff(nz, Eigen::MatrixXd::Zero(nx, ny));
    for (int m = 0; m < basis.n_modes(); ++m) {
        const auto& mode = basis.modes()[m];
        const auto [i, j, k] = mode.axis_index;
        coeff[k](i, j) += std::sqrt(mode.lambda) * xi.xi[m];
    }

    const Eigen::MatrixXd& fx = basis.axis_vectors(0);
    const Eigen::MatrixXd& fy = basis.axis_vectors(1);
    const Eigen::MatrixXd& fz = basis.axis_vectors(2);

    // xy transform per z-mode slice.
    std::vector<Eigen::MatrixXd> slab(nz);
    for (int k = 0; k < nz; ++k)
        slab[k] = fx * coeff[k] * fy.transpose();

    std::vector<double> y(g.cells(), model.mean_logk);
    for (int kz = 0; kz < nz; ++kz)
        for (int k = 0; k < nz; ++k) {
            const double w = fz(kz, k);
            if (w == 0.0)
                continue;
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i)
                    y[g.index(i, j, kz)] += w * slab[k](i, j);
        }
    return ScalarField(g, std::move(y));
}

ConductivityField to_conductivity(const ScalarField& log_k, const std::array<double, 3>& multipliers)
{
    const GridSpec& g = log_k.grid();
    for (int a = 0; a < g.dim(); ++a)
        if (!(multipliers[a] > 0.0))
            throw std::invalid_argument("anisotropy multipliers must be > 0");
    std::vector<std::vector<double>> comps(g.dim(), std::vector<double>(g.cells()));
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const double kx = std::exp(log_k[c]);
        comps[0][c] = kx;
        for (int a = 1; a < g.dim(); ++a)
            comps[a][c] = multipliers[a] * kx;
    }
    return ConductivityField(g, std::move(comps));
}

} // namespace upscale
