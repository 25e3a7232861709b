#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upscale/grid.hpp"
#include "upscale/periodic_solver.hpp"
#include "upscale/surrogate.hpp"

namespace upscale {

enum class FaceKind { dirichlet, neumann };

/// Dirichlet: prescribed head. Neumann: prescribed outward normal flux v.n.
struct FaceCondition
{
    FaceKind kind = FaceKind::neumann;
    double value = 0.0;
};

/// Faces are indexed 2*axis + side, side 0 = low (x = 0), side 1 = high (x = L).
struct GlobalBoundarySpec
{
    std::array<FaceCondition, 6> faces{};

    FaceCondition& face(int axis, int side) { return faces[static_cast<std::size_t>(2 * axis + side)]; }
    const FaceCondition& face(int axis, int side) const { return faces[static_cast<std::size_t>(2 * axis + side)]; }

    /// Throws std::invalid_argument without a Dirichlet face among the active axes.
    void validate(int dim) const;

    /// Head h_low on the low face of `axis`, h_high on its high face, no-flow elsewhere.
    static GlobalBoundarySpec pressure_drop(int axis = 0, double h_low = 1.0, double h_high = 0.0);
};

/**
 * Fine- or coarse-grid solution. face_velocity[a] lives on the faces normal
 * to a: n_a + 1 faces along a, x-fastest (see face_index).
 */
struct FlowSolution
{
    ScalarField heads;
    std::array<std::vector<double>, 3> face_velocity;
    /// Cell-centered velocity component per axis (mean of the two faces).
    std::array<ScalarField, 3> velocity;
};

std::size_t face_index(const GridSpec& grid, int axis, int i, int j, int k);

/// Net outflow per cell, sum over faces of (v.n) * area.
std::vector<double> flux_divergence(const FlowSolution& sol);

/// TPFA solve on the full grid with the given global boundary conditions.
FlowSolution fine_solve(const ConductivityField& field, const GlobalBoundarySpec& bc, const SolverOptions& options = {});

CoarseModel upscale_numerical(const ConductivityField& field, const Ratio& ratio, const SolverOptions& options = {},
                              int workers = 1);

/// Throws ShapeMismatch unless the network input size equals the ratio on every active axis.
CoarseModel upscale_surrogate(const ConductivityField& field, const Ratio& ratio, const Surrogate& model,
                              int workers = 1);

/// Tensor extraction shared by both methods, from per-axis solutions of every patch.
CoarseModel coarse_model_from_solutions(const GridSpec& fine, const Ratio& ratio,
                                        std::span<const std::vector<PatchSolution>> per_axis);

/// TPFA solve on the coarse grid with the diagonal tensor components.
FlowSolution coarse_solve(const CoarseModel& model, const GlobalBoundarySpec& bc, const SolverOptions& options = {});

/// 1 - SS_res / SS_tot. A constant benchmark gives 1 when matched exactly, NaN otherwise.
double r2_score(std::span<const double> truth, std::span<const double> predicted);

enum class Method { numerical, surrogate };
std::string method_name(Method m);

struct MethodReport
{
    Method method = Method::numerical;
    CoarseModel model;
    FlowSolution coarse;
    double r2_head = 0.0;
    std::array<double, 3> r2_velocity{};
    /// Diagonal tensor components against the numerical method (NaN when not comparable).
    std::array<double, 3> r2_tensor{};
    double upscale_seconds = 0.0;
    double solve_seconds = 0.0;
};

struct EvaluationReport
{
    int dim = 2;
    GridSpec coarse_grid;
    ScalarField bench_head;
    std::array<ScalarField, 3> bench_velocity;
    double fine_solve_seconds = 0.0;
    std::vector<MethodReport> methods;

    const MethodReport& method(Method m) const;
};

struct EvaluateOptions
{
    SolverOptions solver;
    int workers = 1;
};

/// Fine solve with block-averaged benchmarks, then every requested upscaling path with its coarse solve.
EvaluationReport evaluate(const ConductivityField& fine_field, const Ratio& ratio, const GlobalBoundarySpec& bc,
                          std::span<const Method> methods, const Surrogate* surrogate = nullptr,
                          const EvaluateOptions& options = {});

/// Per coarse cell: benchmark and method values for heads and each velocity component.
void write_scatter_csv(std::ostream& out, const EvaluationReport& report);
/// One row per method: R2 per output quantity plus timings.
void write_r2_csv(std::ostream& out, const EvaluationReport& report, int realization, bool header);

struct TimingRow
{
    std::string method;
    int realizations = 0;
    /// NaN when the method needs no training.
    double training_seconds = 0.0;
    double upscaling_seconds = 0.0;
    double solving_seconds = 0.0;

    double total() const;
};

struct BenchmarkOptions
{
    SolverOptions solver;
    int workers = 1;
    bool include_fine = true;
};

/**
 * Cumulative wall-clock times at every count in `counts` (ascending, at most
 * fields.size()): numerical and, with a surrogate, surrogate upscaling plus the
 * coarse solves; optionally the fine-scale solves. Training time is amortized
 * once into each surrogate row.
 */
std::vector<TimingRow> benchmark_timing(std::span<const ConductivityField> fields, const Ratio& ratio,
                                        const GlobalBoundarySpec& bc, std::span<const int> counts,
                                        const Surrogate* surrogate = nullptr, double training_seconds = 0.0,
                                        const BenchmarkOptions& options = {});

void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows);

} // namespace upscale
