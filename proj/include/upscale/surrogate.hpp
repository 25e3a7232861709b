#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "upscale/grid.hpp"
#include "upscale/losses.hpp"
#include "upscale/network.hpp"
#include "upscale/periodic_solver.hpp"

namespace upscale {

class TrainingError : public std::runtime_error
{
public:
    TrainingError(const std::string& what, int epoch)
        : std::runtime_error(what + " at epoch " + std::to_string(epoch))
        , epoch_(epoch)
    {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// Raised when a gradient contains NaN/Inf; carries the weighted-layer index.
class NumericalError : public std::runtime_error
{
public:
    NumericalError(const std::string& what, int layer)
        : std::runtime_error(what + " (weighted layer " + std::to_string(layer) + ")")
        , layer_(layer)
    {}
    int layer() const { return layer_; }

private:
    int layer_;
};

struct LossWeights
{
    double data = 1.0;
    double ge = 1.0;
    double bc_head = 1.0;
    double bc_flux = 1.0;

    bool physics_active() const { return ge != 0.0 || bc_head != 0.0 || bc_flux != 0.0; }
};

struct TrainConfig
{
    LossWeights weights;
    double learning_rate = 1e-3;
    /// Multiplicative factor applied every `decay_every` epochs (0.9 = "decays 10%").
    double decay_factor = 0.9;
    int decay_every = 100;
    int epochs = 1000;
    /// Number of labeled pairs used by the data term (0 = label-free).
    int n_labeled = 0;
    PeriodicDrive drive = PeriodicDrive::unit(0);
    std::uint64_t seed = 0;
    /// Patches per forward/backward chunk; only affects memory and speed.
    int chunk = 32;
    int workers = 1;
    /// Network arithmetic; the optimizer state and loss terms are always double.
    Precision precision = Precision::f32;
    /// Per-epoch callback for progress logging.
    std::function<void(int, const struct LossBreakdown&)> on_epoch;

    void validate(int dim) const;
    double learning_rate_at(int epoch) const;
};

struct LossBreakdown
{
    double l_data = 0.0;
    double l_ge = 0.0;
    double l_bc_h = 0.0;
    double l_bc_v = 0.0;
    double total = 0.0;
};

/// Weighted sum; with n_labeled == 0 the data term is reported as 0 and excluded.
LossBreakdown total_loss(double l_data, double l_ge, double l_bc_h, double l_bc_v, const TrainConfig& config);

/// Labeled pairs: patch + numerically solved interior heads.
struct LabeledSet
{
    std::vector<Patch> patches;
    std::vector<ScalarField> heads;
};

/// Network input channels for a batch of patches (see InputEncoding).
Eigen::MatrixXd encode_inputs(const NetworkSpec& spec, std::span<const Patch> patches);

/// Forward pass for a batch of patches, one head image per patch.
std::vector<HeadImage> forward_images(const NetworkParams& params, const NetworkSpec& spec,
                                      std::span<const Patch> patches, int chunk = 64,
                                      Precision precision = Precision::f64);

struct GradientResult
{
    LossBreakdown loss;
    NetworkParams grad;
};

/**
 * Loss and exact gradient over the residual patches (physics terms) and the
 * first config.n_labeled labeled pairs (data term). Chunks are reduced in a
 * fixed order, so the result does not depend on config.workers.
 */
GradientResult gradients(const NetworkParams& params, const NetworkSpec& spec,
                         std::span<const Patch> residual_patches, const LabeledSet& labeled,
                         const TrainConfig& config);

/// Loss only (no backward pass).
LossBreakdown evaluate_loss(const NetworkParams& params, const NetworkSpec& spec,
                            std::span<const Patch> residual_patches, const LabeledSet& labeled,
                            const TrainConfig& config);

struct TrainResult
{
    NetworkParams params;
    std::vector<LossBreakdown> history;
};

/// Full-batch Adam (0.9, 0.999, 1e-8) with step-decayed learning rate.
TrainResult train(const NetworkSpec& spec, const TrainConfig& config, std::span<const Patch> residual_patches,
                  const LabeledSet& labeled = {});

/// A trained network together with the drive it was trained for.
struct Surrogate
{
    NetworkSpec spec;
    NetworkParams params;
    PeriodicDrive drive = PeriodicDrive::unit(0);
    /// Inference arithmetic (not stored in checkpoints).
    Precision precision = Precision::f64;
};

/**
 * Predicted periodic solution for `drive`. The drive must be a multiple of a
 * single-axis drive; axes other than the trained one are handled by swapping
 * patch axes (requires equal spacing on the swapped axes). Heads are shifted
 * so the anchor cell is 0, and velocities use the solver's face definition.
 */
PatchSolution predict_heads(const Surrogate& model, const Patch& patch, const PeriodicDrive& drive);

/// Batched predict_heads; identical to per-patch calls.
std::vector<PatchSolution> predict_heads_batch(const Surrogate& model, std::span<const Patch> patches,
                                               const PeriodicDrive& drive, int chunk = 256, int workers = 1);

/// Surrogate counterpart of equivalent_tensor.
std::vector<EquivalentTensor> surrogate_tensors(const Surrogate& model, std::span<const Patch> patches,
                                                int chunk = 256, int workers = 1);

/*
 * Checkpoint layout: 8-byte magic "UPTGCNN1", u32 LE descriptor length,
 * descriptor text ("<network descriptor>;drive=a,b,c"), u64 LE parameter
 * count, then per weighted layer its weights followed by its biases as
 * 64-bit little-endian IEEE doubles.
 */
void save_checkpoint(const Surrogate& model, std::ostream& out);
Surrogate load_checkpoint(std::istream& in);
void save_checkpoint(const Surrogate& model, const std::filesystem::path& path);
Surrogate load_checkpoint(const std::filesystem::path& path);

} // namespace upscale
