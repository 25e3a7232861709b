#include "upscale/periodic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

namespace upscale {

bool PeriodicDrive::is_zero(int dim) const
{
    for (int a = 0; a < dim; ++a)
        if (delta_h[a] != 0.0)
            return false;
    return true;
}

double transmissibility(double k_left, double k_right, double face_area)
{
    if (!(k_left > 0.0) || !(k_right > 0.0))
        throw std::invalid_argument("transmissibility requires strictly positive conductivities");
    if (!(face_area > 0.0))
        throw std::invalid_argument("transmissibility requires a positive face area");
    return 2.0 * face_area / (1.0 / k_left + 1.0 / k_right);
}

std::vector<PeriodicFace> periodic_faces(const ConductivityField& field, const PeriodicDrive& drive)
{
    const GridSpec& g = field.grid();
    std::vector<PeriodicFace> faces;
    faces.reserve(g.cells() * g.dim());
    for (int a = 0; a < g.dim(); ++a) {
        const double area = g.face_area(a);
        const double inv_h = 1.0 / g.spacing(a);
        const auto kc = field.component(a);
        for (std::size_t c = 0; c < g.cells(); ++c) {
            auto coords = g.coords(c);
            double offset = 0.0;
            if (coords[a] + 1 < g.n(a)) {
                ++coords[a];
            } else {
                coords[a] = 0;
                offset = drive.delta_h[a];
            }
            const std::size_t nb = g.index(coords[0], coords[1], coords[2]);
            faces.push_back({a, c, nb, transmissibility(kc[c], kc[nb], area) * inv_h, offset});
        }
    }
    return faces;
}

namespace {

void check_patch(const ConductivityField& field, double min_contrast)
{
    const double lo = field.min_value();
    const double hi = field.max_value();
    if (lo / hi < min_contrast) {
        std::ostringstream os;
        os << "patch conductivity contrast " << lo / hi << " is below the supported limit " << min_contrast;
        throw std::invalid_argument(os.str());
    }
}

double max_coefficient(const std::vector<PeriodicFace>& faces)
{
    double m = 0.0;
    for (const auto& f : faces)
        m = std::max(m, f.coefficient);
    return m;
}

} // namespace

PeriodicSystem assemble_periodic(const Patch& patch, const PeriodicDrive& drive)
{
    const ConductivityField& field = patch.field;
    const std::size_t n = field.grid().cells();
    const auto faces = periodic_faces(field, drive);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(faces.size() * 4 + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    const auto add = [&](std::size_t r, std::size_t c, double v) {
        if (r != kAnchorCell)
            trip.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    };
    for (const auto& f : faces) {
        add(f.low, f.low, f.coefficient);
        add(f.low, f.high, -f.coefficient);
        add(f.high, f.high, f.coefficient);
        add(f.high, f.low, -f.coefficient);
        if (f.low != kAnchorCell)
            rhs(static_cast<Eigen::Index>(f.low)) += f.coefficient * f.offset;
        if (f.high != kAnchorCell)
            rhs(static_cast<Eigen::Index>(f.high)) -= f.coefficient * f.offset;
    }
    trip.emplace_back(static_cast<int>(kAnchorCell), static_cast<int>(kAnchorCell), 1.0);

    PeriodicSystem sys;
    sys.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    sys.matrix.setFromTriplets(trip.begin(), trip.end());
    sys.matrix.prune(0.0);
    sys.rhs = std::move(rhs);
    sys.max_coefficient = max_coefficient(faces);
    return sys;
}

std::vector<double> periodic_residual(const ConductivityField& field, std::span<const double> heads,
                                      const PeriodicDrive& drive)
{
    std::vector<double> r(field.grid().cells(), 0.0);
    for (const auto& f : periodic_faces(field, drive)) {
        const double flux = f.coefficient * (heads[f.high] + f.offset - heads[f.low]);
        r[f.low] += flux;
        r[f.high] -= flux;
    }
    return r;
}

std::array<std::vector<double>, 3> periodic_face_velocities(const ConductivityField& field,
                                                           std::span<const double> heads,
                                                           const PeriodicDrive& drive)
{
    const GridSpec& g = field.grid();
    std::array<std::vector<double>, 3> v;
    for (int a = 0; a < g.dim(); ++a)
        v[a].resize(g.cells());
    for (const auto& f : periodic_faces(field, drive)) {
        const double area = g.face_area(f.axis);
        v[f.axis][f.low] = -f.coefficient / area * (heads[f.high] + f.offset - heads[f.low]);
    }
    return v;
}

PatchSolution solve_patch(const Patch& patch, const PeriodicDrive& drive, const SolverOptions& options)
{
    const ConductivityField& field = patch.field;
    const GridSpec& g = field.grid();
    check_patch(field, options.min_contrast);

    const std::size_t n = g.cells();
    const auto faces = periodic_faces(field, drive);
    const double cmax = max_coefficient(faces);

    // Symmetric elimination of the anchor: row and column dropped, H_anchor = 0
    // contributes nothing to the right-hand side. Same solution as row replacement.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(faces.size() * 4 + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    const auto add = [&](std::size_t r, std::size_t c, double v) {
        if (r != kAnchorCell && c != kAnchorCell)
            trip.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    };
    for (const auto& f : faces) {
        add(f.low, f.low, f.coefficient);
        add(f.low, f.high, -f.coefficient);
        add(f.high, f.high, f.coefficient);
        add(f.high, f.low, -f.coefficient);
        if (f.low != kAnchorCell)
            rhs(static_cast<Eigen::Index>(f.low)) += f.coefficient * f.offset;
        if (f.high != kAnchorCell)
            rhs(static_cast<Eigen::Index>(f.high)) -= f.coefficient * f.offset;
    }
    trip.emplace_back(static_cast<int>(kAnchorCell), static_cast<int>(kAnchorCell), 1.0);
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    a.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd h;
    if (n <= options.direct_limit) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
        if (ldlt.info() != Eigen::Success)
            throw ConvergenceError("periodic system factorization failed", std::nan(""));
        h = ldlt.solve(rhs);
    } else {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::IncompleteCholesky<double>>
            cg;
        cg.setMaxIterations(options.max_iterations);
        cg.setTolerance(options.tolerance * 1e-2);
        cg.compute(a);
        h = cg.solve(rhs);
        if (cg.info() != Eigen::Success)
            throw ConvergenceError("periodic PCG did not converge in " + std::to_string(cg.iterations())
                                       + " iterations",
                                   cg.error());
    }
    h(static_cast<Eigen::Index>(kAnchorCell)) = 0.0;

    std::vector<double> heads(h.data(), h.data() + h.size());
    double drive_scale = 0.0;
    for (int ax = 0; ax < g.dim(); ++ax)
        drive_scale = std::max(drive_scale, std::abs(drive.delta_h[ax]));
    const auto res = periodic_residual(field, heads, drive);
    double worst = 0.0;
    for (double r : res)
        worst = std::max(worst, std::abs(r));
    if (!(worst <= options.tolerance * cmax * std::max(drive_scale, 1e-300)))
        throw ConvergenceError("periodic solve residual above tolerance", worst);

    PatchSolution sol{ScalarField(g, std::move(heads)), {}, drive};
    sol.face_velocity = periodic_face_velocities(field, sol.heads.values(), drive);
    return sol;
}

Eigen::Vector3d average_gradient(const PatchSolution& sol, double tolerance)
{
    const GridSpec& g = sol.heads.grid();
    Eigen::Vector3d closed = Eigen::Vector3d::Zero();
    for (int a = 0; a < g.dim(); ++a)
        closed(a) = sol.drive.delta_h[a] / g.length(a);

    // Discrete face average of dH/dx; telescopes to the closed form.
    const auto h = sol.heads.values();
    for (int a = 0; a < g.dim(); ++a) {
        double sum = 0.0;
        for (std::size_t c = 0; c < g.cells(); ++c) {
            auto coords = g.coords(c);
            double offset = 0.0;
            if (coords[a] + 1 < g.n(a)) {
                ++coords[a];
            } else {
                coords[a] = 0;
                offset = sol.drive.delta_h[a];
            }
            sum += (h[g.index(coords[0], coords[1], coords[2])] + offset - h[c]) / g.spacing(a);
        }
        const double discrete = sum / static_cast<double>(g.cells());
        if (std::abs(discrete - closed(a)) > tolerance * std::max(1.0, std::abs(closed(a))))
            throw std::logic_error("discrete average gradient disagrees with the periodic closed form");
    }
    return closed;
}

Eigen::Vector3d average_velocity(const PatchSolution& sol)
{
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    for (int a = 0; a < 3; ++a) {
        const auto& f = sol.face_velocity[a];
        if (f.empty())
            continue;
        double s = 0.0;
        for (double x : f)
            s += x;
        v(a) = s / static_cast<double>(f.size());
    }
    return v;
}

EquivalentTensor tensor_from_solutions(std::span<const PatchSolution> solutions)
{
    const int dim = static_cast<int>(solutions.size());
    if (dim != 2 && dim != 3)
        throw std::invalid_argument("tensor extraction needs one solution per axis");
    Eigen::MatrixXd vel(dim, dim), grad(dim, dim);
    for (int d = 0; d < dim; ++d) {
        const Eigen::Vector3d v = average_velocity(solutions[d]);
        const Eigen::Vector3d gr = average_gradient(solutions[d]);
        vel.col(d) = v.head(dim);
        grad.col(d) = gr.head(dim);
    }
    EquivalentTensor t;
    t.dim = dim;
    t.matrix.topLeftCorner(dim, dim) = -vel * grad.inverse();
    return t;
}

EquivalentTensor equivalent_tensor(const Patch& patch, const SolverOptions& options)
{
    const int dim = patch.field.grid().dim();
    std::vector<PatchSolution> sols;
    sols.reserve(dim);
    for (int d = 0; d < dim; ++d)
        sols.push_back(solve_patch(patch, PeriodicDrive::unit(d), options));
    return tensor_from_solutions(sols);
}

} // namespace upscale
