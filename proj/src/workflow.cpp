#include "upscale/workflow.hpp"

#include "upscale/parallel.hpp"

namespace upscale {

ConductivityField generate_field(const KleBasis& basis, const RunConfig& config, SeedStream stream,
                                 std::uint64_t index)
{
    const auto xi = RandomVector::draw(basis.n_modes(), stream_seed(config.seed, stream, index));
    return to_conductivity(sample(basis, config.covariance(), xi), config.multipliers());
}

std::vector<ConductivityField> generate_fields(const KleBasis& basis, const RunConfig& config, SeedStream stream,
                                               int count, int workers)
{
    std::vector<ConductivityField> fields(static_cast<std::size_t>(count));
    parallel_for(fields.size(), workers,
                 [&](std::size_t i) { fields[i] = generate_field(basis, config, stream, i); });
    return fields;
}

std::vector<Patch> residual_pool(const KleBasis& basis, const RunConfig& config, int workers)
{
    const Ratio ratio = config.upscaling_ratio();
    std::vector<Patch> pool;
    for (const auto& f : generate_fields(basis, config, SeedStream::training_fields, config.residual_fields, workers)) {
        for (auto& p : partition(f, ratio)) {
            if (config.residual_patches > 0 && pool.size() >= static_cast<std::size_t>(config.residual_patches))
                return pool;
            pool.push_back(std::move(p));
        }
    }
    return pool;
}

LabeledSet labeled_pool(std::span<const Patch> patches, int n, const PeriodicDrive& drive, int workers)
{
    if (n < 0 || static_cast<std::size_t>(n) > patches.size())
        throw std::invalid_argument("requested " + std::to_string(n) + " labeled patches from a pool of "
                                    + std::to_string(patches.size()));
    LabeledSet set;
    set.patches.assign(patches.begin(), patches.begin() + n);
    set.heads.resize(static_cast<std::size_t>(n));
    parallel_for(set.heads.size(), workers,
                 [&](std::size_t i) { set.heads[i] = solve_patch(set.patches[i], drive).heads; });
    return set;
}

} // namespace upscale
