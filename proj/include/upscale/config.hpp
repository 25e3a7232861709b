#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "upscale/grid.hpp"
#include "upscale/kle.hpp"
#include "upscale/network.hpp"
#include "upscale/pipeline.hpp"
#include "upscale/surrogate.hpp"

namespace upscale {

class ConfigError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Independent random streams derived from the run seed.
enum class SeedStream : std::uint64_t { training_fields = 1, evaluation_fields = 2, network = 3 };

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index);

/**
 * Everything a CLI run needs. Text form is "key = value" per line, '#'
 * starts a comment; a "preset" line selects the base before other keys apply.
 */
struct RunConfig
{
    std::string preset = "2d-base";

    std::array<int, 3> cells{100, 100, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    double mean_logk = 0.0;
    double variance = 1.0;
    std::array<double, 3> corr_length{20.0, 20.0, 20.0};
    double energy = 0.9;
    /// Ky / Kx and Kz / Kx.
    std::array<double, 2> anisotropy{1.0, 1.0};

    int ratio = 10;
    std::array<double, 3> drive{1.0, 0.0, 0.0};

    std::string network = "table1";
    std::string encoding = "log";
    std::string precision = "f32";
    int epochs = 1000;
    double learning_rate = 1e-3;
    double decay_factor = 0.9;
    int decay_every = 100;
    LossWeights weights;
    int residual_fields = 5;
    /// Cap on residual patches (0 = every patch of every residual field).
    int residual_patches = 0;
    int n_labeled = 0;
    int chunk = 32;

    std::uint64_t seed = 1;
    int realizations = 100;
    int workers = 0;
    std::string method = "both";
    int bc_axis = 0;
    double h_low = 1.0;
    double h_high = 0.0;
    std::vector<int> bench_counts{1, 10, 100, 1000};

    std::string out = "out";
    /// Directory of UPF1 fields for upscale/evaluate/bench; empty = generate from the seed.
    std::string fields;
    /// Checkpoint to read (upscale/evaluate/bench) or write (train); empty = <out>/model.ckpt.
    std::string checkpoint;

    /// Throws ConfigError naming the offending key.
    void validate() const;

    int dim() const { return cells[2] == 1 ? 2 : 3; }
    bool isotropic() const { return anisotropy[0] == 1.0 && anisotropy[1] == 1.0; }
    GridSpec grid() const;
    CovarianceModel covariance() const;
    Ratio upscaling_ratio() const;
    PeriodicDrive periodic_drive() const;
    NetworkSpec network_spec() const;
    TrainConfig train_config() const;
    GlobalBoundarySpec boundary() const;
    std::array<double, 3> multipliers() const { return {1.0, anisotropy[0], anisotropy[1]}; }
    std::vector<Method> methods() const;
};

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
RunConfig preset_config(const std::string& name);

/// Applies one key; throws ConfigError for unknown keys or unparsable values.
void set_option(RunConfig& config, const std::string& key, const std::string& value);

/// Parses config text on top of `base` (or on top of the preset it names).
RunConfig parse_config(std::istream& in, const RunConfig& base = {});

/// Fully resolved config text; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

} // namespace upscale
