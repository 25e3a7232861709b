// Acceptance checks for the upscaling library. Prints one PASS/FAIL line per
// criterion; exits nonzero when any selected criterion fails.
//
// usage: upscale_acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "upscale/config.hpp"
#include "upscale/parallel.hpp"
#include "upscale/pipeline.hpp"
#include "upscale/workflow.hpp"

using namespace upscale;

namespace {

// Pinned tolerances.
constexpr double kHomogeneousRel = 1e-12;
constexpr double kLayeredAbs = 1e-10;
constexpr double kLayeredOffDiag = 1e-10;
constexpr double kSymmetryRel = 1e-8;
constexpr double kOracleInf = 1e-10;
constexpr double kGradRel = 1e-4;
constexpr int kGradSamples = 60;
constexpr double kMedianR2 = 0.9;
constexpr double kP10R2 = 0.8;
constexpr double kTensorR2 = 0.9;
constexpr double kHeadR2 = 0.95;
constexpr double kVxR2 = 0.9;
constexpr double kRatioOneInf = 1e-10;
constexpr double kTgcnnSpread = 0.05;
constexpr double kSpeedup = 10.0;
constexpr double kEnergyFloor = 0.9;
constexpr double kVarianceRel = 0.05;

// Workload sizes.
constexpr int kSymmetryPatches = 1000;
constexpr int kOraclePatches = 100;
constexpr int kFreshPatches = 100;
constexpr int kRealizations = 100;
constexpr int kAblationEpochs = 200;
constexpr int kAblationRealizations = 100;
constexpr int kBenchRealizations = 1000;
constexpr int kKleSamples = 10000;
constexpr int k3dRealizations = 20;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Patch patch_of(ConductivityField f)
{
    return Patch{{0, 0, 0}, std::move(f)};
}

ConductivityField iid_lognormal(const GridSpec& g, std::mt19937_64& rng, double variance)
{
    std::normal_distribution<double> n(0.0, std::sqrt(variance));
    std::vector<double> k(g.cells());
    for (double& v : k)
        v = std::exp(n(rng));
    return ConductivityField::isotropic(g, std::move(k));
}

/// R2 after removing each series' mean (periodic heads are defined up to a constant).
double head_r2(std::span<const double> truth, std::span<const double> pred)
{
    const auto centered = [](std::span<const double> v) {
        double m = 0.0;
        for (double x : v)
            m += x;
        m /= static_cast<double>(v.size());
        std::vector<double> out(v.begin(), v.end());
        for (double& x : out)
            x -= m;
        return out;
    };
    return r2_score(centered(truth), centered(pred));
}

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Patch-level checks shared by the planar criteria and the 3D suite.

double homogeneous_error(const GridSpec& g, double c)
{
    const auto t = equivalent_tensor(patch_of(ConductivityField::uniform(g, c)));
    double err = 0.0;
    for (int i = 0; i < g.dim(); ++i)
        for (int j = 0; j < g.dim(); ++j)
            err = std::max(err, std::abs(t(i, j) - (i == j ? c : 0.0)) / c);
    return err;
}

struct LayerErrors
{
    double diag = 0.0;
    double offdiag = 0.0;
};

/// Layers stacked along `normal`: arithmetic mean on the other axes, harmonic along `normal`.
LayerErrors layered_errors(const GridSpec& g, int normal, std::mt19937_64& rng)
{
    std::lognormal_distribution<double> ln(0.0, 1.0);
    std::vector<double> layer(static_cast<std::size_t>(g.n(normal)));
    for (double& v : layer)
        v = ln(rng);
    std::vector<double> k(g.cells());
    for (std::size_t c = 0; c < g.cells(); ++c)
        k[c] = layer[static_cast<std::size_t>(g.coords(c)[normal])];
    double arith = 0.0, harm = 0.0;
    for (double v : layer) {
        arith += v;
        harm += 1.0 / v;
    }
    arith /= static_cast<double>(layer.size());
    harm = static_cast<double>(layer.size()) / harm;
    const auto t = equivalent_tensor(patch_of(ConductivityField::isotropic(g, k)));
    LayerErrors e;
    for (int i = 0; i < g.dim(); ++i)
        for (int j = 0; j < g.dim(); ++j) {
            if (i == j)
                e.diag = std::max(e.diag, std::abs(t(i, i) - (i == normal ? harm : arith)));
            else
                e.offdiag = std::max(e.offdiag, std::abs(t(i, j)) / t.max_abs());
        }
    return e;
}

double worst_asymmetry(const GridSpec& g, int count, std::uint64_t seed)
{
    std::vector<double> asym(static_cast<std::size_t>(count));
    std::vector<ConductivityField> fields;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < count; ++i)
        fields.push_back(iid_lognormal(g, rng, 1.0));
    parallel_for(fields.size(), 0, [&](std::size_t i) {
        const auto t = equivalent_tensor(patch_of(fields[i]));
        double a = 0.0;
        for (int r = 0; r < g.dim(); ++r)
            for (int c = r + 1; c < g.dim(); ++c)
                a = std::max(a, std::abs(t(r, c) - t(c, r)));
        asym[i] = a / t.max_abs();
    });
    return *std::max_element(asym.begin(), asym.end());
}

/// Dense periodic TPFA system assembled cell by cell; anchor row pins H_0 = 0.
Eigen::VectorXd dense_oracle(const ConductivityField& f, const PeriodicDrive& drive)
{
    const GridSpec& g = f.grid();
    const auto n = static_cast<Eigen::Index>(g.cells());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (std::size_t c = 0; c < g.cells(); ++c) {
        const auto ijk = g.coords(c);
        const auto row = static_cast<Eigen::Index>(c);
        for (int ax = 0; ax < g.dim(); ++ax)
            for (int dir : {-1, 1}) {
                auto q = ijk;
                q[ax] += dir;
                double offset = 0.0;
                if (q[ax] < 0) {
                    q[ax] += g.n(ax);
                    offset = -drive.delta_h[ax];
                } else if (q[ax] >= g.n(ax)) {
                    q[ax] -= g.n(ax);
                    offset = drive.delta_h[ax];
                }
                const std::size_t nb = g.index(q[0], q[1], q[2]);
                const double k1 = f.k(ax, c), k2 = f.k(ax, nb);
                const double t = 2.0 * g.face_area(ax) / (1.0 / k1 + 1.0 / k2) / g.spacing(ax);
                a(row, row) -= t;
                a(row, static_cast<Eigen::Index>(nb)) += t;
                b(row) -= t * offset;
            }
    }
    a.row(0).setZero();
    a(0, 0) = 1.0;
    b(0) = 0.0;
    return a.partialPivLu().solve(b);
}

double worst_oracle_gap(const GridSpec& g, int count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int p = 0; p < count; ++p) {
        const auto f = iid_lognormal(g, rng, 1.0);
        for (int ax = 0; ax < g.dim(); ++ax) {
            const auto drive = PeriodicDrive::unit(ax);
            const auto sol = solve_patch(patch_of(f), drive);
            const Eigen::VectorXd h = dense_oracle(f, drive);
            for (std::size_t i = 0; i < g.cells(); ++i)
                worst = std::max(worst, std::abs(sol.heads[i] - h(static_cast<Eigen::Index>(i))));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Trained models and evaluation data, built on first use.

struct TrainedCase
{
    RunConfig config;
    KleBasis basis;
    Surrogate model;
    double training_seconds = 0.0;
    std::vector<LossBreakdown> history;
};

int workers()
{
    return default_workers();
}

TrainedCase train_case(RunConfig cfg, const char* label)
{
    TrainedCase tc;
    tc.config = cfg;
    tc.basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    const auto pool = residual_pool(tc.basis, cfg, workers());
    const auto labeled = labeled_pool(pool, cfg.n_labeled, cfg.periodic_drive(), workers());
    TrainConfig tcfg = cfg.train_config();
    tcfg.workers = workers();
    const int every = std::max(1, tcfg.epochs / 10);
    tcfg.on_epoch = [&](int epoch, const LossBreakdown& l) {
        if (epoch % every == 0)
            std::fprintf(stderr, "  [%s] epoch %d loss %.4e\n", label, epoch, l.total);
    };
    const auto t0 = Clock::now();
    auto res = train(cfg.network_spec(), tcfg, pool, labeled);
    tc.training_seconds = seconds_since(t0);
    tc.model.spec = cfg.network_spec();
    tc.model.params = std::move(res.params);
    tc.model.drive = cfg.periodic_drive();
    tc.history = std::move(res.history);
    std::fprintf(stderr, "  [%s] trained %d epochs on %zu patches in %.1f s\n", label, cfg.epochs, pool.size(),
                 tc.training_seconds);
    return tc;
}

/// Per-realization evaluation of both methods plus pooled diagonal tensors.
struct CaseEvaluation
{
    std::array<std::vector<double>, 3> numerical_diag, surrogate_diag;
    std::array<std::vector<double>, 2> head_r2, vx_r2, vy_r2;
};

CaseEvaluation evaluate_case(const TrainedCase& tc, int realizations)
{
    const RunConfig& cfg = tc.config;
    const std::vector<Method> methods{Method::numerical, Method::surrogate};
    EvaluateOptions opts;
    opts.workers = workers();
    CaseEvaluation ev;
    const int dim = cfg.dim();
    for (int r = 0; r < realizations; ++r) {
        const auto field = generate_field(tc.basis, cfg, SeedStream::evaluation_fields, static_cast<std::uint64_t>(r));
        const auto rep = evaluate(field, cfg.upscaling_ratio(), cfg.boundary(), methods, &tc.model, opts);
        for (std::size_t m = 0; m < 2; ++m) {
            const auto& mr = rep.method(methods[m]);
            auto& diag = m == 0 ? ev.numerical_diag : ev.surrogate_diag;
            for (const auto& t : mr.model.tensors)
                for (int a = 0; a < dim; ++a)
                    diag[static_cast<std::size_t>(a)].push_back(t(a, a));
            ev.head_r2[m].push_back(mr.r2_head);
            ev.vx_r2[m].push_back(mr.r2_velocity[0]);
            ev.vy_r2[m].push_back(mr.r2_velocity[1]);
        }
    }
    return ev;
}

RunConfig base_config()
{
    RunConfig cfg = preset_config("2d-base");
    cfg.workers = workers();
    return cfg;
}

RunConfig reduced_3d_config()
{
    RunConfig cfg = preset_config("3d-iso");
    cfg.cells = {20, 20, 10};
    cfg.realizations = k3dRealizations;
    cfg.workers = workers();
    cfg.validate();
    return cfg;
}

struct Context
{
    std::unique_ptr<TrainedCase> base;
    std::unique_ptr<CaseEvaluation> base_eval;
    std::unique_ptr<TrainedCase> cube;

    const TrainedCase& base_case()
    {
        if (!base)
            base = std::make_unique<TrainedCase>(train_case(base_config(), "2d base"));
        return *base;
    }
    const CaseEvaluation& base_evaluation()
    {
        if (!base_eval)
            base_eval = std::make_unique<CaseEvaluation>(evaluate_case(base_case(), kRealizations));
        return *base_eval;
    }
    const TrainedCase& cube_case()
    {
        if (!cube)
            cube = std::make_unique<TrainedCase>(train_case(reduced_3d_config(), "3d iso"));
        return *cube;
    }
};

/// Summary statistics of mean-removed head R2 over fresh evaluation patches.
struct PatchScores
{
    double median = 0.0, p10 = 0.0, mean = 0.0;
};

std::vector<Patch> fresh_patches(const KleBasis& basis, const RunConfig& cfg, int count)
{
    std::vector<Patch> out;
    for (std::uint64_t r = 0; out.size() < static_cast<std::size_t>(count); ++r)
        for (auto& p : partition(generate_field(basis, cfg, SeedStream::evaluation_fields, r), cfg.upscaling_ratio())) {
            if (out.size() == static_cast<std::size_t>(count))
                break;
            out.push_back(std::move(p));
        }
    return out;
}

PatchScores score_patches(const Surrogate& model, std::span<const Patch> patches, const PeriodicDrive& drive)
{
    const auto pred = predict_heads_batch(model, patches, drive, 256, workers());
    std::vector<double> r2(patches.size());
    parallel_for(patches.size(), workers(), [&](std::size_t i) {
        const auto truth = solve_patch(patches[i], drive);
        r2[i] = head_r2(truth.heads.values(), pred[i].heads.values());
    });
    return {quantile(r2, 0.5), quantile(r2, 0.1), mean(r2)};
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome c01(Context&)
{
    double worst = 0.0;
    const std::vector<std::pair<GridSpec, double>> cases{
        {GridSpec::planar(10, 10), 1.0},          {GridSpec::planar(7, 13, 0.5, 2.0), 3.7},
        {GridSpec::planar(20, 20), 1e-3},         {GridSpec(5, 5, 5, 1.0, 1.0, 1.0), 42.0},
        {GridSpec(8, 3, 6, 2.0, 1.0, 0.25), 0.2}, {GridSpec(20, 20, 20, 1.0, 1.0, 1.0), 5.0}};
    for (const auto& [g, c] : cases)
        worst = std::max(worst, homogeneous_error(g, c));
    return {worst <= kHomogeneousRel, fmt("max relative error %.2e over %zu patches (tol %.0e)", worst, cases.size(),
                                          kHomogeneousRel)};
}

Outcome c02(Context&)
{
    std::mt19937_64 rng(2);
    LayerErrors worst;
    for (const GridSpec& g : {GridSpec::planar(10, 10), GridSpec::planar(6, 9, 1.0, 0.5)})
        for (int normal = 0; normal < 2; ++normal)
            for (int rep = 0; rep < 5; ++rep) {
                const auto e = layered_errors(g, normal, rng);
                worst.diag = std::max(worst.diag, e.diag);
                worst.offdiag = std::max(worst.offdiag, e.offdiag);
            }
    return {worst.diag <= kLayeredAbs && worst.offdiag <= kLayeredOffDiag,
            fmt("diagonal error %.2e (tol %.0e), off-diagonal %.2e of |K| (tol %.0e)", worst.diag, kLayeredAbs,
                worst.offdiag, kLayeredOffDiag)};
}

Outcome c03(Context&)
{
    const double worst = worst_asymmetry(GridSpec::planar(10, 10), kSymmetryPatches, 3);
    return {worst <= kSymmetryRel,
            fmt("max |Kxy-Kyx|/|K|max %.2e over %d patches (tol %.0e)", worst, kSymmetryPatches, kSymmetryRel)};
}

Outcome c04(Context&)
{
    const double worst = worst_oracle_gap(GridSpec::planar(4, 4), kOraclePatches, 4);
    return {worst <= kOracleInf,
            fmt("max |H - H_dense| %.2e over %d patches x 2 drives (tol %.0e)", worst, kOraclePatches, kOracleInf)};
}

Outcome c05(Context&)
{
    const auto spec = NetworkSpec::table1(10);
    auto params = init_params(spec, 5);
    std::mt19937_64 rng(5);
    std::vector<Patch> residual;
    for (int i = 0; i < 4; ++i)
        residual.push_back(patch_of(iid_lognormal(GridSpec::planar(10, 10), rng, 1.0)));
    std::vector<Patch> lab;
    for (int i = 0; i < 2; ++i)
        lab.push_back(patch_of(iid_lognormal(GridSpec::planar(10, 10), rng, 1.0)));
    const auto labeled = labeled_pool(lab, 2, PeriodicDrive::unit(0));
    TrainConfig cfg;
    cfg.n_labeled = 2;
    cfg.weights = {1.0, 1.0, 1.0, 1.0};
    cfg.precision = Precision::f64;
    const auto res = gradients(params, spec, residual, labeled, cfg);

    std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
    // fourth-order central stencil
    const double h = 1e-3;
    const auto loss_at = [&](std::size_t i, double x) {
        const double orig = params.at(i);
        params.at(i) = x;
        const double l = evaluate_loss(params, spec, residual, labeled, cfg).total;
        params.at(i) = orig;
        return l;
    };
    double worst = 0.0;
    for (int s = 0; s < kGradSamples; ++s) {
        const std::size_t i = pick(rng);
        const double x = params.at(i);
        const double fd = (8.0 * (loss_at(i, x + h) - loss_at(i, x - h)) - (loss_at(i, x + 2 * h) - loss_at(i, x - 2 * h)))
            / (12.0 * h);
        const double a = res.grad.at(i);
        worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8}));
    }
    return {worst <= kGradRel, fmt("max relative gap %.2e over %d parameters, loss terms %.3g/%.3g/%.3g/%.3g (tol %.0e)",
                                   worst, kGradSamples, res.loss.l_data, res.loss.l_ge, res.loss.l_bc_h,
                                   res.loss.l_bc_v, kGradRel)};
}

Outcome c06(Context& ctx)
{
    const auto& tc = ctx.base_case();
    const auto patches = fresh_patches(tc.basis, tc.config, kFreshPatches);
    const auto s = score_patches(tc.model, patches, tc.config.periodic_drive());
    return {s.median >= kMedianR2 && s.p10 >= kP10R2,
            fmt("median head R2 %.4f (floor %.2f), p10 %.4f (floor %.2f), %d epochs in %.0f s", s.median, kMedianR2,
                s.p10, kP10R2, tc.config.epochs, tc.training_seconds)};
}

Outcome tensor_outcome(const CaseEvaluation& ev, int dim, int realizations)
{
    bool pass = true;
    std::string d;
    for (int a = 0; a < dim; ++a) {
        const double r2 = r2_score(ev.numerical_diag[static_cast<std::size_t>(a)],
                                   ev.surrogate_diag[static_cast<std::size_t>(a)]);
        pass &= r2 >= kTensorR2;
        d += fmt("%sK%c%c R2 %.4f", a ? ", " : "", "xyz"[a], "xyz"[a], r2);
    }
    return {pass, d + fmt(" over %zu blocks of %d realizations (floor %.2f)", ev.numerical_diag[0].size(), realizations,
                          kTensorR2)};
}

Outcome coarse_outcome(const CaseEvaluation& ev, int realizations)
{
    bool pass = true;
    std::string d;
    const char* names[2] = {"numerical", "surrogate"};
    for (std::size_t m = 0; m < 2; ++m) {
        const double h = mean(ev.head_r2[m]);
        const double vx = mean(ev.vx_r2[m]);
        const double vy = mean(ev.vy_r2[m]);
        pass &= h >= kHeadR2 && vx >= kVxR2;
        d += fmt("%s%s head %.4f vx %.4f vy %.4f", m ? "; " : "", names[m], h, vx, vy);
    }
    return {pass, d + fmt(" (mean over %d realizations; floors head %.2f, vx %.2f)", realizations, kHeadR2, kVxR2)};
}

Outcome c07(Context& ctx)
{
    return tensor_outcome(ctx.base_evaluation(), 2, kRealizations);
}

Outcome c08(Context& ctx)
{
    return coarse_outcome(ctx.base_evaluation(), kRealizations);
}

Outcome c09(Context&)
{
    RunConfig cfg = base_config();
    const auto basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    const auto field = generate_field(basis, cfg, SeedStream::evaluation_fields, 0);
    const std::vector<Method> methods{Method::numerical};
    EvaluateOptions opts;
    opts.workers = workers();
    std::map<int, double> r2;
    for (int ratio : {5, 10, 20})
        r2[ratio] = evaluate(field, Ratio::uniform(ratio, field.grid()), cfg.boundary(), methods, nullptr, opts)
                        .method(Method::numerical)
                        .r2_head;
    const auto fine = fine_solve(field, cfg.boundary());
    const auto coarse = coarse_solve(upscale_numerical(field, Ratio::uniform(1, field.grid()), {}, workers()),
                                     cfg.boundary());
    double gap = 0.0;
    for (std::size_t i = 0; i < fine.heads.size(); ++i)
        gap = std::max(gap, std::abs(fine.heads[i] - coarse.heads[i]));
    const bool pass = r2[5] >= r2[10] && r2[10] >= r2[20] && gap <= kRatioOneInf;
    return {pass, fmt("head R2 ratio 5 %.5f, 10 %.5f, 20 %.5f; ratio 1 max |dH| %.2e (tol %.0e)", r2[5], r2[10], r2[20],
                      gap, kRatioOneInf)};
}

/// Per realization: mean of the diagonal-component R2 of surrogate tensors against numerical ones.
struct UpscaledReference
{
    std::vector<std::vector<Patch>> patches;
    std::vector<std::vector<EquivalentTensor>> numerical;
};

double upscaled_r2(const Surrogate& model, const UpscaledReference& ref)
{
    double total = 0.0;
    for (std::size_t r = 0; r < ref.patches.size(); ++r) {
        const auto sur = surrogate_tensors(model, ref.patches[r], 256, workers());
        const int dim = model.spec.dim;
        double sum = 0.0;
        for (int a = 0; a < dim; ++a) {
            std::vector<double> truth, pred;
            for (std::size_t b = 0; b < sur.size(); ++b) {
                truth.push_back(ref.numerical[r][b](a, a));
                pred.push_back(sur[b](a, a));
            }
            sum += r2_score(truth, pred);
        }
        total += sum / dim;
    }
    return total / static_cast<double>(ref.patches.size());
}

Outcome c10(Context&)
{
    RunConfig cfg = base_config();
    cfg.epochs = kAblationEpochs;
    const auto basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    const auto pool = residual_pool(basis, cfg, workers());
    const auto drive = cfg.periodic_drive();
    const auto spec = cfg.network_spec();
    const std::vector<int> sizes{50, 100, 200, 500};
    const auto all_labeled = labeled_pool(pool, sizes.back(), drive, workers());

    UpscaledReference ref;
    for (int r = 0; r < kAblationRealizations; ++r) {
        const auto field = generate_field(basis, cfg, SeedStream::evaluation_fields, static_cast<std::uint64_t>(r));
        ref.patches.push_back(partition(field, cfg.upscaling_ratio()));
        ref.numerical.push_back(upscale_numerical(field, cfg.upscaling_ratio(), {}, workers()).tensors);
    }

    std::vector<double> data_only, tgcnn;
    for (int n : sizes) {
        LabeledSet labeled;
        labeled.patches.assign(all_labeled.patches.begin(), all_labeled.patches.begin() + n);
        labeled.heads.assign(all_labeled.heads.begin(), all_labeled.heads.begin() + n);
        for (bool physics : {false, true}) {
            TrainConfig t = cfg.train_config();
            t.workers = workers();
            t.n_labeled = n;
            if (!physics)
                t.weights = {1.0, 0.0, 0.0, 0.0};
            const auto t0 = Clock::now();
            const auto res = physics ? train(spec, t, pool, labeled) : train(spec, t, {}, labeled);
            Surrogate s;
            s.spec = spec;
            s.params = res.params;
            s.drive = drive;
            const double r2 = upscaled_r2(s, ref);
            (physics ? tgcnn : data_only).push_back(r2);
            std::fprintf(stderr, "  [ablation] N=%d %s mean R2 %.4f (%.0f s)\n", n, physics ? "tgcnn" : "data-only", r2,
                         seconds_since(t0));
        }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < sizes.size(); ++i)
        monotone &= data_only[i] >= data_only[i - 1];
    const auto [lo, hi] = std::minmax_element(tgcnn.begin(), tgcnn.end());
    const double spread = *hi - *lo;
    bool dominates = true;
    for (std::size_t i = 0; i < sizes.size(); ++i)
        if (sizes[i] <= 100)
            dominates &= tgcnn[i] >= data_only[i];
    std::string d = "upscaled-tensor R2, N=50/100/200/500 data-only";
    for (double v : data_only)
        d += fmt(" %.4f", v);
    d += ", tgcnn";
    for (double v : tgcnn)
        d += fmt(" %.4f", v);
    d += fmt("; spread %.4f (tol %.2f), %d epochs, %d realizations", spread, kTgcnnSpread, kAblationEpochs,
             kAblationRealizations);
    return {monotone && spread < kTgcnnSpread && dominates, d};
}

Outcome c11(Context& ctx)
{
    const auto& tc = ctx.base_case();
    const RunConfig& cfg = tc.config;
    const auto fields = generate_fields(tc.basis, cfg, SeedStream::evaluation_fields, kBenchRealizations, workers());
    const std::vector<int> counts{1, 10, 100, 1000};
    BenchmarkOptions opts;
    opts.workers = workers();
    opts.include_fine = false;
    Surrogate fast = tc.model;
    fast.precision = Precision::f32;
    const auto rows = benchmark_timing(fields, cfg.upscaling_ratio(), cfg.boundary(), counts, &fast,
                                       tc.training_seconds, opts);
    std::map<int, TimingRow> num, sur;
    for (const auto& r : rows)
        (r.method == "numerical" ? num : sur)[r.realizations] = r;
    const double speedup = num[1000].upscaling_seconds / sur[1000].upscaling_seconds;
    int crossover = 0;
    for (int c : counts)
        if (crossover == 0 && sur[c].total() < num[c].total())
            crossover = c;
    const bool pass = speedup >= kSpeedup && crossover > 0;
    return {pass, fmt("upscaling 1000 realizations: numerical %.1f s, surrogate %.1f s, speedup %.3f (floor %.0f); "
                      "amortized totals at 1000: numerical %.1f s, surrogate %.1f s (training %.0f s)%s",
                      num[1000].upscaling_seconds, sur[1000].upscaling_seconds, speedup, kSpeedup, num[1000].total(),
                      sur[1000].total(), tc.training_seconds, crossover ? "" : ", no crossover")};
}

Outcome c12(Context& ctx)
{
    const GridSpec cube(5, 5, 5, 1.0, 1.0, 1.0);
    const double homog = std::max(homogeneous_error(cube, 2.5), homogeneous_error(GridSpec(5, 5, 5, 2.0, 1.0, 0.5), 0.3));
    std::mt19937_64 rng(12);
    LayerErrors layered;
    for (int normal = 0; normal < 3; ++normal)
        for (int rep = 0; rep < 3; ++rep) {
            const auto e = layered_errors(cube, normal, rng);
            layered.diag = std::max(layered.diag, e.diag);
            layered.offdiag = std::max(layered.offdiag, e.offdiag);
        }
    const double asym = worst_asymmetry(cube, kSymmetryPatches, 13);
    const double oracle = worst_oracle_gap(cube, kOraclePatches, 14);
    const bool shape_ok = NetworkSpec::table2(3, 5).output_shape() == std::array<int, 3>{7, 7, 7};
    const bool patch_ok = homog <= kHomogeneousRel && layered.diag <= kLayeredAbs && layered.offdiag <= kLayeredOffDiag
        && asym <= kSymmetryRel && oracle <= kOracleInf && shape_ok;

    const auto& tc = ctx.cube_case();
    const auto ev = evaluate_case(tc, k3dRealizations);
    const auto t = tensor_outcome(ev, 3, k3dRealizations);
    const auto c = coarse_outcome(ev, k3dRealizations);
    return {patch_ok && t.pass && c.pass,
            fmt("5^3 patches: homogeneous %.1e, layered %.1e/%.1e, asymmetry %.1e, oracle %.1e, table2 5^3->7^3 %s; ",
                homog, layered.diag, layered.offdiag, asym, oracle, shape_ok ? "ok" : "wrong")
                + "20x20x10 ratio 5: " + t.detail + "; " + c.detail};
}

Outcome c13(Context&)
{
    const RunConfig cfg = base_config();
    const auto basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    const std::size_t n = cfg.grid().cells();
    std::vector<Eigen::VectorXd> sum(static_cast<std::size_t>(workers()), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    std::vector<Eigen::VectorXd> sq = sum;
    const int w = workers();
    parallel_for(static_cast<std::size_t>(w), w, [&](std::size_t t) {
        for (int s = static_cast<int>(t); s < kKleSamples; s += w) {
            const auto y = sample(basis, cfg.covariance(), RandomVector::draw(basis.n_modes(), derive_seed(13, s)));
            const Eigen::Map<const Eigen::VectorXd> v(y.values().data(), static_cast<Eigen::Index>(n));
            sum[t] += v;
            sq[t] += v.cwiseAbs2();
        }
    });
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), s2 = s1;
    for (int t = 0; t < w; ++t) {
        s1 += sum[static_cast<std::size_t>(t)];
        s2 += sq[static_cast<std::size_t>(t)];
    }
    const double m = static_cast<double>(kKleSamples);
    const Eigen::VectorXd var = (s2 - s1.cwiseAbs2() / m) / (m - 1.0);
    const double mc = var.mean();
    const double target = cfg.variance * basis.energy_fraction();
    const double rel = std::abs(mc - target) / target;
    const bool pass = basis.energy_fraction() >= kEnergyFloor && rel <= kVarianceRel;
    return {pass, fmt("%d modes keep %.4f of the energy (floor %.2f); lag-0 variance %.4f vs %.4f, rel gap %.3f over %d "
                      "samples (tol %.2f)",
                      basis.n_modes(), basis.energy_fraction(), kEnergyFloor, mc, target, rel, kKleSamples, kVarianceRel)};
}

struct Criterion
{
    int id;
    const char* name;
    Outcome (*run)(Context&);
};

const Criterion kCriteria[] = {
    {1, "homogeneous exactness", c01},
    {2, "layered closed forms", c02},
    {3, "tensor symmetry", c03},
    {4, "dense oracle equivalence", c04},
    {5, "loss gradient check", c05},
    {6, "label-free 2D base case", c06},
    {7, "surrogate vs numerical tensors", c07},
    {8, "coarse fidelity", c08},
    {9, "ratio trend", c09},
    {10, "data ablation trend", c10},
    {11, "efficiency", c11},
    {12, "3D scaled-down suite", c12},
    {13, "KLE fidelity", c13},
};

} // namespace

int main(int argc, char** argv)
{
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i)
        selected.push_back(std::atoi(argv[i]));
    Context ctx;
    int failures = 0, ran = 0;
    for (const auto& c : kCriteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
            continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ++ran;
        failures += o.pass ? 0 : 1;
        std::printf("%s  C%02d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
