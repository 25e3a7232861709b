#pragma once

#include <vector>

#include "upscale/config.hpp"

namespace upscale {

/// Realization `index` of a seed stream, drawn from `basis`.
ConductivityField generate_field(const KleBasis& basis, const RunConfig& config, SeedStream stream,
                                 std::uint64_t index);

std::vector<ConductivityField> generate_fields(const KleBasis& basis, const RunConfig& config, SeedStream stream,
                                               int count, int workers = 1);

/// Patches of the training-stream fields, capped at config.residual_patches when nonzero.
std::vector<Patch> residual_pool(const KleBasis& basis, const RunConfig& config, int workers = 1);

/// The first n patches of `patches` with numerically solved heads for `drive`.
LabeledSet labeled_pool(std::span<const Patch> patches, int n, const PeriodicDrive& drive, int workers = 1);

} // namespace upscale
