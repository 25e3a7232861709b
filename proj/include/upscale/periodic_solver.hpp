#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "upscale/grid.hpp"

namespace upscale {

class ConvergenceError : public std::runtime_error
{
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")")
        , residual_(residual)
    {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Head offsets across the periodic faces: H(L_a) = H(0) + delta_h[a].
struct PeriodicDrive
{
    std::array<double, 3> delta_h{0.0, 0.0, 0.0};

    static PeriodicDrive unit(int axis, double magnitude = 1.0)
    {
        PeriodicDrive d;
        d.delta_h[axis] = magnitude;
        return d;
    }
    bool is_zero(int dim) const;
    bool operator==(const PeriodicDrive&) const = default;
};

/// 2 * face_area / (1/K_left + 1/K_right)
double transmissibility(double k_left, double k_right, double face_area);

/// Sparse TPFA system for one patch under periodic boundary conditions.
struct PeriodicSystem
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
    Eigen::VectorXd rhs;
    /// Largest face coefficient T / spacing; sets the residual scale.
    double max_coefficient = 0.0;
};

/**
 * One face coupling of the periodic stencil. Cell `low` sits on the low side of
 * the face, `high` on the high side; `offset` is added to the head of `high`
 * when seen from `low` (nonzero only on the wrap face).
 */
struct PeriodicFace
{
    int axis = 0;
    std::size_t low = 0;
    std::size_t high = 0;
    double coefficient = 0.0; // T / spacing
    double offset = 0.0;
};

/// Every face of a periodic patch, counted once (wrap faces included), axis by axis.
std::vector<PeriodicFace> periodic_faces(const ConductivityField& field, const PeriodicDrive& drive);

/// Cell (0,0,0) is the anchor whose head is pinned to zero.
inline constexpr std::size_t kAnchorCell = 0;

PeriodicSystem assemble_periodic(const Patch& patch, const PeriodicDrive& drive);

struct PatchSolution
{
    ScalarField heads;
    /// face_velocity[a][c]: Darcy velocity on the high-side face of cell c
    /// normal to axis a; the last cell along a stores the wrap face.
    std::array<std::vector<double>, 3> face_velocity;
    PeriodicDrive drive;
};

struct SolverOptions
{
    double tolerance = 1e-10;
    /// Direct factorization up to this many unknowns; PCG above.
    std::size_t direct_limit = 10000;
    int max_iterations = 20000;
    /// Reject patches whose min/max conductivity ratio falls below this.
    double min_contrast = 1e-6;
};

PatchSolution solve_patch(const Patch& patch, const PeriodicDrive& drive, const SolverOptions& options = {});

/**
 * Face velocities v = -K_face * dH / spacing from cell-centered heads, with the
 * offset applied across wrap faces. Shared by the solver and the surrogate.
 */
std::array<std::vector<double>, 3> periodic_face_velocities(const ConductivityField& field,
                                                           std::span<const double> heads,
                                                           const PeriodicDrive& drive);

/// Per-cell signed flux imbalance sum_f T/spacing (H_nb - H) for given heads.
std::vector<double> periodic_residual(const ConductivityField& field, std::span<const double> heads,
                                      const PeriodicDrive& drive);

/// Closed form (dH_a / L_a); cross-checked against the discrete face average.
Eigen::Vector3d average_gradient(const PatchSolution& sol, double tolerance = 1e-9);
Eigen::Vector3d average_velocity(const PatchSolution& sol);

/// K_eq = -V G^{-1} from one solve per canonical unit drive.
EquivalentTensor equivalent_tensor(const Patch& patch, const SolverOptions& options = {});

/// Tensor extraction from already computed per-axis solutions (drive a in slot a).
EquivalentTensor tensor_from_solutions(std::span<const PatchSolution> solutions);

} // namespace upscale
