#include "upscale/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "upscale/parallel.hpp"

namespace upscale {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

void GlobalBoundarySpec::validate(int dim) const
{
    for (int a = 0; a < dim; ++a)
        for (int s = 0; s < 2; ++s)
            if (!std::isfinite(face(a, s).value))
                throw std::invalid_argument("boundary value on face " + std::string(1, kAxisName[a])
                                            + (s ? "+" : "-") + " is not finite");
    for (int a = 0; a < dim; ++a)
        for (int s = 0; s < 2; ++s)
            if (face(a, s).kind == FaceKind::dirichlet)
                return;
    throw std::invalid_argument("global boundary conditions need at least one Dirichlet face");
}

GlobalBoundarySpec GlobalBoundarySpec::pressure_drop(int axis, double h_low, double h_high)
{
    GlobalBoundarySpec bc;
    bc.face(axis, 0) = {FaceKind::dirichlet, h_low};
    bc.face(axis, 1) = {FaceKind::dirichlet, h_high};
    return bc;
}

std::size_t face_index(const GridSpec& grid, int axis, int i, int j, int k)
{
    auto n = grid.counts();
    n[axis] += 1;
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n[0]) * (j + static_cast<std::size_t>(n[1]) * k);
}

std::vector<double> flux_divergence(const FlowSolution& sol)
{
    const GridSpec& g = sol.heads.grid();
    std::vector<double> div(g.cells(), 0.0);
    for (int a = 0; a < g.dim(); ++a) {
        const double area = g.face_area(a);
        for (int k = 0; k < g.nz(); ++k)
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    std::array<int, 3> hi{i, j, k};
                    ++hi[a];
                    div[g.index(i, j, k)] += area
                        * (sol.face_velocity[a][face_index(g, a, hi[0], hi[1], hi[2])]
                           - sol.face_velocity[a][face_index(g, a, i, j, k)]);
                }
    }
    return div;
}

FlowSolution fine_solve(const ConductivityField& field, const GlobalBoundarySpec& bc, const SolverOptions& options)
{
    const GridSpec& g = field.grid();
    const int dim = g.dim();
    bc.validate(dim);
    const std::size_t n = g.cells();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * (2 * dim + 1));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    const auto idx = [](std::size_t c) { return static_cast<Eigen::Index>(c); };

    for (int a = 0; a < dim; ++a) {
        const double area = g.face_area(a);
        const double h = g.spacing(a);
        const auto ka = field.component(a);
        for (int k = 0; k < g.nz(); ++k)
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    const std::array<int, 3> p{i, j, k};
                    const std::size_t c = g.index(i, j, k);
                    if (p[a] + 1 < g.n(a)) {
                        std::array<int, 3> q = p;
                        ++q[a];
                        const std::size_t nb = g.index(q[0], q[1], q[2]);
                        const double t = transmissibility(ka[c], ka[nb], area) / h;
                        trip.emplace_back(idx(c), idx(c), t);
                        trip.emplace_back(idx(nb), idx(nb), t);
                        trip.emplace_back(idx(c), idx(nb), -t);
                        trip.emplace_back(idx(nb), idx(c), -t);
                    }
                    for (int side = 0; side < 2; ++side) {
                        const bool on_face = side == 0 ? p[a] == 0 : p[a] == g.n(a) - 1;
                        if (!on_face)
                            continue;
                        const FaceCondition& f = bc.face(a, side);
                        if (f.kind == FaceKind::dirichlet) {
                            const double t = ka[c] * area / (0.5 * h);
                            trip.emplace_back(idx(c), idx(c), t);
                            rhs(idx(c)) += t * f.value;
                        } else {
                            rhs(idx(c)) -= f.value * area;
                        }
                    }
                }
    }
    Eigen::SparseMatrix<double> a(idx(n), idx(n));
    a.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd h;
    if (n <= options.direct_limit) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
        if (ldlt.info() != Eigen::Success)
            throw ConvergenceError("global system factorization failed", kNaN);
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
            throw ConvergenceError("global PCG did not converge in " + std::to_string(cg.iterations()) + " iterations",
                                   cg.error());
    }
    double anorm = 0.0;
    for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
        double row = 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, r); it; ++it)
            row += std::abs(it.value());
        anorm = std::max(anorm, row);
    }
    const double residual = (a * h - rhs).lpNorm<Eigen::Infinity>();
    const double scale = anorm * h.lpNorm<Eigen::Infinity>() + rhs.lpNorm<Eigen::Infinity>();
    if (!(residual <= options.tolerance * scale))
        throw ConvergenceError("global solve residual above tolerance", residual);

    FlowSolution sol;
    sol.heads = ScalarField(g, std::vector<double>(h.data(), h.data() + h.size()));
    for (int ax = 0; ax < 3; ++ax) {
        if (ax >= dim) {
            sol.velocity[ax] = ScalarField::constant(g, 0.0);
            continue;
        }
        auto nf = g.counts();
        nf[ax] += 1;
        std::vector<double>& v = sol.face_velocity[ax];
        v.assign(static_cast<std::size_t>(nf[0]) * nf[1] * nf[2], 0.0);
        const double area = g.face_area(ax);
        const double sp = g.spacing(ax);
        const auto ka = field.component(ax);
        for (int k = 0; k < nf[2]; ++k)
            for (int j = 0; j < nf[1]; ++j)
                for (int i = 0; i < nf[0]; ++i) {
                    std::array<int, 3> p{i, j, k};
                    const int f = p[ax];
                    double vel = 0.0;
                    if (f > 0 && f < g.n(ax)) {
                        std::array<int, 3> lo = p;
                        --lo[ax];
                        const std::size_t cl = g.index(lo[0], lo[1], lo[2]);
                        const std::size_t cr = g.index(p[0], p[1], p[2]);
                        vel = -transmissibility(ka[cl], ka[cr], area) / sp / area * (h(idx(cr)) - h(idx(cl)));
                    } else {
                        const int side = f == 0 ? 0 : 1;
                        std::array<int, 3> q = p;
                        if (side == 1)
                            --q[ax];
                        const std::size_t c = g.index(q[0], q[1], q[2]);
                        const FaceCondition& fc = bc.face(ax, side);
                        if (fc.kind == FaceKind::dirichlet) {
                            const double kf = ka[c] / (0.5 * sp);
                            vel = side == 0 ? -kf * (h(idx(c)) - fc.value) : -kf * (fc.value - h(idx(c)));
                        } else {
                            vel = side == 0 ? -fc.value : fc.value;
                        }
                    }
                    v[face_index(g, ax, i, j, k)] = vel;
                }
        std::vector<double> centered(g.cells());
        for (int k = 0; k < g.nz(); ++k)
            for (int j = 0; j < g.ny(); ++j)
                for (int i = 0; i < g.nx(); ++i) {
                    std::array<int, 3> hi{i, j, k};
                    ++hi[ax];
                    centered[g.index(i, j, k)]
                        = 0.5 * (v[face_index(g, ax, i, j, k)] + v[face_index(g, ax, hi[0], hi[1], hi[2])]);
                }
        sol.velocity[ax] = ScalarField(g, std::move(centered));
    }
    return sol;
}

CoarseModel upscale_numerical(const ConductivityField& field, const Ratio& ratio, const SolverOptions& options,
                              int workers)
{
    CoarseModel model;
    model.coarse_grid = coarsen(field.grid(), ratio);
    model.ratio = ratio;
    const auto patches = partition(field, ratio);
    model.tensors.resize(patches.size());
    parallel_for(patches.size(), workers,
                 [&](std::size_t i) { model.tensors[i] = equivalent_tensor(patches[i], options); });
    return model;
}

CoarseModel upscale_surrogate(const ConductivityField& field, const Ratio& ratio, const Surrogate& model,
                              int workers)
{
    const GridSpec& g = field.grid();
    if (model.spec.dim != g.dim())
        throw ShapeMismatch("surrogate is " + std::to_string(model.spec.dim) + "D but the field is "
                            + std::to_string(g.dim()) + "D");
    for (int a = 0; a < 3; ++a) {
        const int expected = a < g.dim() ? model.spec.input_size : 1;
        if (ratio[a] != expected)
            throw ShapeMismatch("surrogate input size " + std::to_string(model.spec.input_size)
                                + " does not match the upscaling ratio along " + kAxisName[a]);
    }
    CoarseModel out;
    out.coarse_grid = coarsen(g, ratio);
    out.ratio = ratio;
    const auto patches = partition(field, ratio);
    out.tensors = surrogate_tensors(model, patches, 256, workers);
    return out;
}

CoarseModel coarse_model_from_solutions(const GridSpec& fine, const Ratio& ratio,
                                        std::span<const std::vector<PatchSolution>> per_axis)
{
    CoarseModel model;
    model.coarse_grid = coarsen(fine, ratio);
    model.ratio = ratio;
    const std::size_t n = model.coarse_grid.cells();
    if (per_axis.size() != static_cast<std::size_t>(fine.dim()))
        throw DimensionMismatch("need one solution set per axis");
    for (const auto& s : per_axis)
        if (s.size() != n)
            throw DimensionMismatch("need one solution per coarse cell");
    model.tensors.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<PatchSolution> sols;
        for (const auto& s : per_axis)
            sols.push_back(s[c]);
        model.tensors[c] = tensor_from_solutions(sols);
    }
    return model;
}

FlowSolution coarse_solve(const CoarseModel& model, const GlobalBoundarySpec& bc, const SolverOptions& options)
{
    return fine_solve(diagonal_field(model), bc, options);
}

double r2_score(std::span<const double> truth, std::span<const double> predicted)
{
    if (truth.size() != predicted.size() || truth.empty())
        throw DimensionMismatch("R2 needs two non-empty series of equal length");
    double mean = 0.0;
    for (double y : truth)
        mean += y;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0)
        return ss_res == 0.0 ? 1.0 : kNaN;
    return 1.0 - ss_res / ss_tot;
}

std::string method_name(Method m)
{
    return m == Method::numerical ? "numerical" : "surrogate";
}

const MethodReport& EvaluationReport::method(Method m) const
{
    for (const auto& r : methods)
        if (r.method == m)
            return r;
    throw std::out_of_range("report has no " + method_name(m) + " entry");
}

EvaluationReport evaluate(const ConductivityField& fine_field, const Ratio& ratio, const GlobalBoundarySpec& bc,
                          std::span<const Method> methods, const Surrogate* surrogate, const EvaluateOptions& options)
{
    const GridSpec& g = fine_field.grid();
    EvaluationReport report;
    report.dim = g.dim();
    report.coarse_grid = coarsen(g, ratio);

    auto t0 = Clock::now();
    const FlowSolution fine = fine_solve(fine_field, bc, options.solver);
    report.fine_solve_seconds = seconds_since(t0);
    report.bench_head = block_average(fine.heads, ratio);
    for (int a = 0; a < 3; ++a)
        report.bench_velocity[a] = block_average(fine.velocity[a], ratio);

    for (Method m : methods) {
        MethodReport r;
        r.method = m;
        t0 = Clock::now();
        if (m == Method::numerical) {
            r.model = upscale_numerical(fine_field, ratio, options.solver, options.workers);
        } else {
            if (!surrogate)
                throw std::invalid_argument("surrogate evaluation needs a trained model");
            r.model = upscale_surrogate(fine_field, ratio, *surrogate, options.workers);
        }
        r.upscale_seconds = seconds_since(t0);
        t0 = Clock::now();
        r.coarse = coarse_solve(r.model, bc, options.solver);
        r.solve_seconds = seconds_since(t0);
        r.r2_head = r2_score(report.bench_head.values(), r.coarse.heads.values());
        for (int a = 0; a < 3; ++a)
            r.r2_velocity[a] = a < report.dim
                ? r2_score(report.bench_velocity[a].values(), r.coarse.velocity[a].values())
                : kNaN;
        r.r2_tensor.fill(kNaN);
        report.methods.push_back(std::move(r));
    }

    const MethodReport* numerical = nullptr;
    for (const auto& r : report.methods)
        if (r.method == Method::numerical)
            numerical = &r;
    if (numerical) {
        for (auto& r : report.methods) {
            for (int a = 0; a < report.dim; ++a) {
                std::vector<double> ref, got;
                for (std::size_t c = 0; c < r.model.tensors.size(); ++c) {
                    ref.push_back(numerical->model.tensors[c](a, a));
                    got.push_back(r.model.tensors[c](a, a));
                }
                r.r2_tensor[a] = r2_score(ref, got);
            }
        }
    }
    return report;
}

void write_scatter_csv(std::ostream& out, const EvaluationReport& report)
{
    const GridSpec& g = report.coarse_grid;
    out << "method,i,j,k,head_bench,head_method";
    for (int a = 0; a < report.dim; ++a)
        out << ",v" << kAxisName[a] << "_bench,v" << kAxisName[a] << "_method";
    out << "\n";
    out.precision(17);
    for (const auto& r : report.methods) {
        for (std::size_t c = 0; c < g.cells(); ++c) {
            const auto ijk = g.coords(c);
            out << method_name(r.method) << "," << ijk[0] << "," << ijk[1] << "," << ijk[2] << ","
                << report.bench_head[c] << "," << r.coarse.heads[c];
            for (int a = 0; a < report.dim; ++a)
                out << "," << report.bench_velocity[a][c] << "," << r.coarse.velocity[a][c];
            out << "\n";
        }
    }
}

void write_r2_csv(std::ostream& out, const EvaluationReport& report, int realization, bool header)
{
    if (header)
        out << "realization,method,r2_head,r2_vx,r2_vy,r2_vz,r2_kxx,r2_kyy,r2_kzz,upscale_s,coarse_solve_s,"
               "fine_solve_s\n";
    out.precision(10);
    for (const auto& r : report.methods) {
        out << realization << "," << method_name(r.method) << "," << r.r2_head;
        for (double v : r.r2_velocity)
            out << "," << v;
        for (double v : r.r2_tensor)
            out << "," << v;
        out << "," << r.upscale_seconds << "," << r.solve_seconds << "," << report.fine_solve_seconds << "\n";
    }
}

double TimingRow::total() const
{
    return (std::isnan(training_seconds) ? 0.0 : training_seconds) + upscaling_seconds + solving_seconds;
}

std::vector<TimingRow> benchmark_timing(std::span<const ConductivityField> fields, const Ratio& ratio,
                                        const GlobalBoundarySpec& bc, std::span<const int> counts,
                                        const Surrogate* surrogate, double training_seconds,
                                        const BenchmarkOptions& options)
{
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] < 1 || static_cast<std::size_t>(counts[i]) > fields.size() || (i > 0 && counts[i] <= counts[i - 1]))
            throw std::invalid_argument("benchmark counts must be ascending and within the realization count");
    const int last = counts.empty() ? 0 : counts.back();

    std::vector<TimingRow> rows;
    const auto run = [&](const std::string& name, double training, auto&& upscale, bool coarse) {
        double up = 0.0, solve = 0.0;
        std::size_t next = 0;
        for (int r = 0; r < last; ++r) {
            auto t0 = Clock::now();
            if (coarse) {
                const CoarseModel m = upscale(fields[static_cast<std::size_t>(r)]);
                up += seconds_since(t0);
                t0 = Clock::now();
                coarse_solve(m, bc, options.solver);
            } else {
                fine_solve(fields[static_cast<std::size_t>(r)], bc, options.solver);
            }
            solve += seconds_since(t0);
            if (r + 1 == counts[next]) {
                rows.push_back({name, r + 1, training, up, solve});
                ++next;
            }
        }
    };

    if (options.include_fine)
        run("fine", kNaN, [](const ConductivityField&) { return CoarseModel{}; }, false);
    run("numerical", kNaN,
        [&](const ConductivityField& f) { return upscale_numerical(f, ratio, options.solver, options.workers); }, true);
    if (surrogate)
        run("surrogate", training_seconds,
            [&](const ConductivityField& f) { return upscale_surrogate(f, ratio, *surrogate, options.workers); }, true);
    return rows;
}

void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows)
{
    out << "method,realizations,training_s,upscaling_s,solving_s,total_s\n";
    out.precision(10);
    for (const auto& r : rows) {
        out << r.method << "," << r.realizations << ",";
        if (std::isnan(r.training_seconds))
            out << "-";
        else
            out << r.training_seconds;
        out << "," << r.upscaling_seconds << "," << r.solving_seconds << "," << r.total() << "\n";
    }
}

} // namespace upscale
