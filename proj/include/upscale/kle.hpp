#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "upscale/grid.hpp"

namespace upscale {

class DecompositionError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Separable exponential covariance of Y = ln K.
struct CovarianceModel
{
    double mean_logk = 0.0;
    double variance = 1.0;
    std::array<double, 3> corr_length{20.0, 20.0, 20.0};

    void validate() const;
    /// C(x, x') = variance * exp(-sum_a |x_a - x'_a| / eta_a)
    double operator()(const std::array<double, 3>& x, const std::array<double, 3>& y, int dim) const;
};

/**
 * Truncated discrete Karhunen-Loeve basis.
 *
 * The discrete covariance on cell centers is a Kronecker product of per-axis
 * 1D exponential kernels, so every eigenpair is a product of per-axis
 * eigenpairs. Modes are stored as index triples into the per-axis
 * eigenvector matrices rather than as dense N-length vectors.
 */
class KleBasis
{
public:
    struct Mode
    {
        double lambda = 0.0;
        std::array<int, 3> axis_index{0, 0, 0};
    };

    const GridSpec& grid() const { return grid_; }
    int n_modes() const { return static_cast<int>(modes_.size()); }
    const std::vector<Mode>& modes() const { return modes_; }
    double eigenvalue(int m) const { return modes_[m].lambda; }
    /// Fraction of total variance carried by the retained modes.
    double energy_fraction() const { return energy_fraction_; }
    /// Sum of all (untruncated, clamped) eigenvalues; equals N * variance.
    double total_energy() const { return total_energy_; }

    /// Materializes f_m on the grid (unit Euclidean norm).
    std::vector<double> eigenfunction(int m) const;

    /// Per-axis eigenvectors, columns sorted by descending 1D eigenvalue.
    const Eigen::MatrixXd& axis_vectors(int axis) const { return vectors_[axis]; }

private:
    friend KleBasis decompose(const CovarianceModel&, const GridSpec&, double);

    GridSpec grid_;
    std::array<Eigen::MatrixXd, 3> vectors_;
    std::vector<Mode> modes_;
    double energy_fraction_ = 1.0;
    double total_energy_ = 0.0;
};

/// Eigendecomposes the covariance on `grid` and truncates at `target_energy`.
KleBasis decompose(const CovarianceModel& model, const GridSpec& grid, double target_energy);

/**
 * Deterministic standard-normal stream: std::mt19937_64 (bit-exact across
 * standard libraries) feeding a Box-Muller transform on 53-bit uniforms.
 * std::normal_distribution is avoided because its output is implementation
 * defined.
 */
class NormalStream
{
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
    double next();

private:
    double uniform_open();

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 finalizer; derives independent per-realization seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct RandomVector
{
    std::vector<double> xi;
    std::uint64_t seed = 0;

    static RandomVector draw(int n_modes, std::uint64_t seed);
};

/// Y(x) = mean + sum_i sqrt(lambda_i) f_i(x) xi_i
ScalarField sample(const KleBasis& basis, const CovarianceModel& model, const RandomVector& xi);

/// Kx = exp(Y), Ky = multipliers[1] * Kx, Kz = multipliers[2] * Kx.
ConductivityField to_conductivity(const ScalarField& log_k, const std::array<double, 3>& multipliers);

} // namespace upscale
