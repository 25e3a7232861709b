#include "upscale/losses.hpp"

#include <cmath>

namespace upscale {

HeadImage::HeadImage(int dim, int r)
    : dim_(dim)
    , r_(r)
    , shape_{r + 2, r + 2, dim == 3 ? r + 2 : 1}
    , values_(static_cast<std::size_t>(shape_[0]) * shape_[1] * shape_[2], 0.0)
{
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("head image dimensionality must be 2 or 3");
}

ScalarField HeadImage::interior_field(const GridSpec& g) const
{
    if (g.nx() != r_ || g.ny() != r_ || g.nz() != (dim_ == 3 ? r_ : 1))
        throw DimensionMismatch("head image does not match patch grid");
    std::vector<double> h(g.cells());
    for (int k = 0; k < g.nz(); ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i)
                h[g.index(i, j, k)] = interior(i, j, k);
    return ScalarField(g, std::move(h));
}

HeadImage HeadImage::from_periodic(const ScalarField& heads, const PeriodicDrive& drive)
{
    const GridSpec& g = heads.grid();
    const int r = g.nx();
    const int dim = g.dim();
    if (g.ny() != r || (dim == 3 && g.nz() != r))
        throw DimensionMismatch("head images need cubic patches");
    HeadImage img(dim, r);
    const int zlo = dim == 3 ? -1 : 0;
    const int zhi = dim == 3 ? r : 0;
    // Every image entry with at most one coordinate outside [0, r) is a periodic image.
    for (int k = zlo; k <= zhi; ++k)
        for (int j = -1; j <= r; ++j)
            for (int i = -1; i <= r; ++i) {
                const std::array<int, 3> c{i, j, k};
                std::array<int, 3> w = c;
                double offset = 0.0;
                for (int a = 0; a < dim; ++a) {
                    if (w[a] < 0) {
                        w[a] += r;
                        offset -= drive.delta_h[a];
                    } else if (w[a] >= r) {
                        w[a] -= r;
                        offset += drive.delta_h[a];
                    }
                }
                img.at(i + 1, j + 1, k - zlo) = heads[g.index(w[0], w[1], w[2])] + offset;
            }
    return img;
}

namespace {

void check_image(const HeadImage& pred, const GridSpec& g)
{
    if (g.nx() != pred.r() || g.ny() != pred.r() || g.nz() != (pred.dim() == 3 ? pred.r() : 1))
        throw DimensionMismatch("head image does not match patch shape");
}

/// T / spacing for the face between patch cells a and b along `axis`.
double face_coefficient(const ConductivityField& field, int axis, std::size_t a, std::size_t b)
{
    const GridSpec& g = field.grid();
    return transmissibility(field.k(axis, a), field.k(axis, b), g.face_area(axis)) / g.spacing(axis);
}

/// Image offset of one step along an axis.
std::array<int, 3> step(int axis, int s)
{
    std::array<int, 3> d{0, 0, 0};
    d[axis] = s;
    return d;
}

} // namespace

double data_term(const HeadImage& pred, const ScalarField& label, HeadImage* grad, double scale)
{
    const GridSpec& g = label.grid();
    check_image(pred, g);
    const double inv_n = 1.0 / static_cast<double>(g.cells());
    double sum = 0.0;
    for (int k = 0; k < g.nz(); ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                const double e = pred.interior(i, j, k) - label[g.index(i, j, k)];
                sum += e * e;
                if (grad)
                    grad->interior(i, j, k) += scale * 2.0 * e * inv_n;
            }
    return sum * inv_n;
}

std::vector<double> image_residual(const HeadImage& pred, const ConductivityField& patch)
{
    const GridSpec& g = patch.grid();
    check_image(pred, g);
    const int dim = g.dim();
    const int kz0 = dim == 3 ? 1 : 0;
    std::vector<double> res(g.cells(), 0.0);
    for (int k = 0; k < g.nz(); ++k)
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                const std::size_t c = g.index(i, j, k);
                const std::array<int, 3> pc{i, j, k};
                const std::array<int, 3> ic{i + 1, j + 1, k + kz0};
                const double hc = pred.at(ic[0], ic[1], ic[2]);
                double r = 0.0;
                for (int a = 0; a < dim; ++a) {
                    for (int s : {-1, 1}) {
                        auto nb = pc;
                        nb[a] = (pc[a] + s + g.n(a)) % g.n(a);
                        const double coef = face_coefficient(patch, a, c, g.index(nb[0], nb[1], nb[2]));
                        const auto d = step(a, s);
                        r += coef * (pred.at(ic[0] + d[0], ic[1] + d[1], ic[2] + d[2]) - hc);
                    }
                }
                res[c] = r;
            }
    return res;
}

double ge_term(const HeadImage& pred, const ConductivityField& patch, HeadImage* grad, double scale)
{
    const GridSpec& g = patch.grid();
    const auto res = image_residual(pred, patch);
    const double inv_n = 1.0 / static_cast<double>(g.cells());
    double sum = 0.0;
    for (double r : res)
        sum += r * r;
    if (grad) {
        const int dim = g.dim();
        const int kz0 = dim == 3 ? 1 : 0;
        for (int k = 0; k < g.nz(); ++k)
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    const std::size_t c = g.index(i, j, k);
                    const double w = scale * 2.0 * res[c] * inv_n;
                    const std::array<int, 3> pc{i, j, k};
                    const std::array<int, 3> ic{i + 1, j + 1, k + kz0};
                    for (int a = 0; a < dim; ++a)
                        for (int s : {-1, 1}) {
                            auto nb = pc;
                            nb[a] = (pc[a] + s + g.n(a)) % g.n(a);
                            const double coef = face_coefficient(patch, a, c, g.index(nb[0], nb[1], nb[2]));
                            const auto d = step(a, s);
                            grad->at(ic[0] + d[0], ic[1] + d[1], ic[2] + d[2]) += w * coef;
                            grad->at(ic[0], ic[1], ic[2]) -= w * coef;
                        }
                }
    }
    return sum * inv_n;
}

namespace {

/**
 * Visits every (low, high) boundary pair of one axis: image coordinates of
 * the low ghost, the first interior cell, the last interior cell and the
 * high ghost, plus the patch cells on either end.
 */
template <class Fn>
void for_each_boundary_pair(const HeadImage& img, int axis, Fn&& fn)
{
    const int r = img.r();
    const int dim = img.dim();
    const int kz0 = dim == 3 ? 1 : 0;
    const int nz = dim == 3 ? r : 1;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < r; ++j)
            for (int i = 0; i < r; ++i) {
                const std::array<int, 3> pc{i, j, k};
                if (pc[axis] != 0)
                    continue;
                std::array<int, 3> ghost_lo{i + 1, j + 1, k + kz0};
                ghost_lo[axis] = 0;
                auto in_lo = ghost_lo;
                in_lo[axis] = 1;
                auto in_hi = ghost_lo;
                in_hi[axis] = r;
                auto ghost_hi = ghost_lo;
                ghost_hi[axis] = r + 1;
                auto pc_hi = pc;
                pc_hi[axis] = r - 1;
                fn(ghost_lo, in_lo, in_hi, ghost_hi, pc, pc_hi);
            }
}

double image_value(const HeadImage& img, const std::array<int, 3>& c)
{
    return img.at(c[0], c[1], c[2]);
}

void add_grad(HeadImage* grad, const std::array<int, 3>& c, double v)
{
    grad->at(c[0], c[1], c[2]) += v;
}

} // namespace

double bc_head_term(const HeadImage& pred, const PeriodicDrive& drive, HeadImage* grad, double scale)
{
    const int dim = pred.dim();
    const int r = pred.r();
    double boundary_count = 2.0;
    for (int a = 1; a < dim; ++a)
        boundary_count *= r;
    double total = 0.0;
    for (int a = 0; a < dim; ++a) {
        double sum = 0.0;
        const double dh = drive.delta_h[a];
        for_each_boundary_pair(pred, a, [&](const auto& g_lo, const auto& i_lo, const auto& i_hi, const auto& g_hi,
                                            const auto&, const auto&) {
            const double m_lo = image_value(pred, g_lo) - (image_value(pred, i_hi) - dh);
            const double m_hi = image_value(pred, g_hi) - (image_value(pred, i_lo) + dh);
            sum += m_lo * m_lo + m_hi * m_hi;
            if (grad) {
                const double w = scale * 2.0 / boundary_count;
                add_grad(grad, g_lo, w * m_lo);
                add_grad(grad, i_hi, -w * m_lo);
                add_grad(grad, g_hi, w * m_hi);
                add_grad(grad, i_lo, -w * m_hi);
            }
        });
        total += sum / boundary_count;
    }
    return total;
}

double bc_flux_term(const HeadImage& pred, const ConductivityField& patch, HeadImage* grad, double scale)
{
    const GridSpec& g = patch.grid();
    check_image(pred, g);
    const int dim = pred.dim();
    const int r = pred.r();
    double boundary_count = 2.0;
    for (int a = 1; a < dim; ++a)
        boundary_count *= r;
    double total = 0.0;
    for (int a = 0; a < dim; ++a) {
        double sum = 0.0;
        const double area = g.face_area(a);
        for_each_boundary_pair(pred, a, [&](const auto& g_lo, const auto& i_lo, const auto& i_hi, const auto& g_hi,
                                            const auto& pc_lo, const auto& pc_hi) {
            // Both boundary faces are the same periodic face: harmonic K of the two end cells.
            const double kf = face_coefficient(patch, a, g.index(pc_lo[0], pc_lo[1], pc_lo[2]),
                                               g.index(pc_hi[0], pc_hi[1], pc_hi[2]))
                / area;
            const double v_lo = -kf * (image_value(pred, i_lo) - image_value(pred, g_lo));
            const double v_hi = -kf * (image_value(pred, g_hi) - image_value(pred, i_hi));
            const double diff = v_lo - v_hi;
            sum += diff * diff;
            if (grad) {
                const double w = scale * 2.0 * diff / boundary_count;
                add_grad(grad, i_lo, -w * kf);
                add_grad(grad, g_lo, w * kf);
                add_grad(grad, g_hi, w * kf);
                add_grad(grad, i_hi, -w * kf);
            }
        });
        total += sum / boundary_count;
    }
    return total;
}

double loss_data(std::span<const HeadImage> pred, std::span<const ScalarField> labels)
{
    if (pred.size() != labels.size())
        throw DimensionMismatch("prediction and label batches differ in size");
    if (pred.empty())
        return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += data_term(pred[i], labels[i]);
    return s / static_cast<double>(pred.size());
}

double loss_ge(std::span<const HeadImage> pred, std::span<const Patch> patches)
{
    if (pred.size() != patches.size())
        throw DimensionMismatch("prediction and patch batches differ in size");
    if (pred.empty())
        return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += ge_term(pred[i], patches[i].field);
    return s / static_cast<double>(pred.size());
}

double loss_bc_head(std::span<const HeadImage> pred, const PeriodicDrive& drive)
{
    if (pred.empty())
        return 0.0;
    double s = 0.0;
    for (const auto& p : pred)
        s += bc_head_term(p, drive);
    return s / static_cast<double>(pred.size());
}

double loss_bc_flux(std::span<const HeadImage> pred, std::span<const Patch> patches)
{
    if (pred.size() != patches.size())
        throw DimensionMismatch("prediction and patch batches differ in size");
    if (pred.empty())
        return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += bc_flux_term(pred[i], patches[i].field);
    return s / static_cast<double>(pred.size());
}

} // namespace upscale
