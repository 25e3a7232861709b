#include "upscale/config.hpp"

#include <charconv>
#include <functional>
#include <istream>
#include <sstream>

namespace upscale {

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream, std::uint64_t index)
{
    return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(stream)), index);
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> parts;
    std::istringstream in(s);
    std::string p;
    while (std::getline(in, p, sep))
        parts.push_back(trim(p));
    return parts;
}

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("invalid value '" + text + "' for " + key);
    return value;
}

template <class T, std::size_t N>
std::array<T, N> parse_array(const std::string& key, const std::string& text)
{
    const auto parts = split(text, ',');
    if (parts.size() != N)
        throw ConfigError(key + " needs " + std::to_string(N) + " comma-separated values");
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i)
        out[i] = parse_number<T>(key, parts[i]);
    return out;
}

std::string format(double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

template <class T, std::size_t N>
std::string format_array(const std::array<T, N>& a)
{
    std::string s;
    for (std::size_t i = 0; i < N; ++i) {
        if (i)
            s += ",";
        if constexpr (std::is_floating_point_v<T>)
            s += format(a[i]);
        else
            s += std::to_string(a[i]);
    }
    return s;
}

struct Option
{
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Option number(const char* key, T RunConfig::*member)
{
    return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return format(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

template <class T, std::size_t N>
Option array(const char* key, std::array<T, N> RunConfig::*member)
{
    return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_array<T, N>(key, v); },
            [member](const RunConfig& c) { return format_array(c.*member); }};
}

Option weight(const char* key, double LossWeights::*member)
{
    return {key, [key, member](RunConfig& c, const std::string& v) { c.weights.*member = parse_number<double>(key, v); },
            [member](const RunConfig& c) { return format(c.weights.*member); }};
}

Option choice(const char* key, std::string RunConfig::*member, std::initializer_list<const char*> allowed)
{
    std::vector<const char*> list(allowed);
    return {key,
            [key, member, list](RunConfig& c, const std::string& v) {
                for (const char* a : list)
                    if (v == a) {
                        c.*member = v;
                        return;
                    }
                std::string names;
                for (const char* a : list)
                    names += names.empty() ? a : std::string("|") + a;
                throw ConfigError(std::string(key) + " must be one of " + names + ", got '" + v + "'");
            },
            [member](const RunConfig& c) { return c.*member; }};
}

Option text(const char* key, std::string RunConfig::*member)
{
    return {key, [member](RunConfig& c, const std::string& v) { c.*member = v; },
            [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Option>& options()
{
    static const std::vector<Option> table = {
        array("cells", &RunConfig::cells),
        array("spacing", &RunConfig::spacing),
        number("mean_logk", &RunConfig::mean_logk),
        number("variance", &RunConfig::variance),
        array("corr_length", &RunConfig::corr_length),
        number("energy", &RunConfig::energy),
        array("anisotropy", &RunConfig::anisotropy),
        number("ratio", &RunConfig::ratio),
        array("drive", &RunConfig::drive),
        choice("network", &RunConfig::network, {"table1", "table2"}),
        choice("encoding", &RunConfig::encoding, {"log", "raw"}),
        choice("precision", &RunConfig::precision, {"f32", "f64"}),
        number("epochs", &RunConfig::epochs),
        number("learning_rate", &RunConfig::learning_rate),
        number("decay_factor", &RunConfig::decay_factor),
        number("decay_every", &RunConfig::decay_every),
        weight("weight_data", &LossWeights::data),
        weight("weight_ge", &LossWeights::ge),
        weight("weight_bc_head", &LossWeights::bc_head),
        weight("weight_bc_flux", &LossWeights::bc_flux),
        number("residual_fields", &RunConfig::residual_fields),
        number("residual_patches", &RunConfig::residual_patches),
        number("n_labeled", &RunConfig::n_labeled),
        number("chunk", &RunConfig::chunk),
        number("seed", &RunConfig::seed),
        number("realizations", &RunConfig::realizations),
        number("workers", &RunConfig::workers),
        choice("method", &RunConfig::method, {"numerical", "surrogate", "both"}),
        number("bc_axis", &RunConfig::bc_axis),
        number("h_low", &RunConfig::h_low),
        number("h_high", &RunConfig::h_high),
        {"bench_counts",
         [](RunConfig& c, const std::string& v) {
             c.bench_counts.clear();
             for (const auto& p : split(v, ','))
                 c.bench_counts.push_back(parse_number<int>("bench_counts", p));
         },
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.bench_counts.size(); ++i)
                 s += (i ? "," : "") + std::to_string(c.bench_counts[i]);
             return s;
         }},
        text("out", &RunConfig::out),
        text("fields", &RunConfig::fields),
        text("checkpoint", &RunConfig::checkpoint),
    };
    return table;
}

} // namespace

void set_option(RunConfig& config, const std::string& key, const std::string& value)
{
    if (key == "preset") {
        config = preset_config(value);
        return;
    }
    for (const auto& o : options())
        if (key == o.key) {
            o.set(config, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in, const RunConfig& base)
{
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    RunConfig config = base;
    for (const auto& [k, v] : entries)
        if (k == "preset")
            config = preset_config(v);
    for (const auto& [k, v] : entries)
        if (k != "preset")
            set_option(config, k, v);
    return config;
}

std::string to_text(const RunConfig& config)
{
    std::string s = "preset = " + config.preset + "\n";
    for (const auto& o : options())
        s += std::string(o.key) + " = " + o.get(config) + "\n";
    return s;
}

std::vector<std::string> preset_names()
{
    return {"2d-base", "2d-ratio5", "2d-ratio20", "3d-iso", "3d-aniso"};
}

RunConfig preset_config(const std::string& name)
{
    RunConfig c;
    c.preset = name;
    if (name == "2d-base")
        return c;
    if (name == "2d-ratio5") {
        c.ratio = 5;
        c.network = "table2";
        return c;
    }
    if (name == "2d-ratio20") {
        c.ratio = 20;
        return c;
    }
    if (name == "3d-iso" || name == "3d-aniso") {
        c.spacing = {20.0, 20.0, 20.0};
        c.variance = 2.0;
        c.ratio = 5;
        c.network = "table2";
        c.decay_every = 10;
        c.weights.ge = 0.001;
        c.weights.bc_flux = 0.001;
        c.realizations = 20;
        c.bench_counts = {1, 10, 20};
        if (name == "3d-iso") {
            c.cells = {60, 220, 35};
            c.corr_length = {500.0, 1000.0, 100.0};
            c.epochs = 300;
            c.residual_fields = 10;
        } else {
            c.cells = {180, 250, 60};
            c.corr_length = {1440.0, 1000.0, 180.0};
            c.anisotropy = {0.8, 0.3};
            c.epochs = 200;
            c.residual_fields = 1;
            c.n_labeled = 3000;
        }
        return c;
    }
    std::string names;
    for (const auto& n : preset_names())
        names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + names + ")");
}

void RunConfig::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (cells[a] < 1)
            throw ConfigError("cells must be positive");
        if (!(spacing[a] > 0.0))
            throw ConfigError("spacing must be positive");
    }
    if (!(variance > 0.0))
        throw ConfigError("variance must be positive");
    for (int a = 0; a < dim(); ++a)
        if (!(corr_length[a] > 0.0))
            throw ConfigError("corr_length must be positive");
    if (!(energy > 0.0 && energy <= 1.0))
        throw ConfigError("energy must lie in (0, 1]");
    if (!(anisotropy[0] > 0.0 && anisotropy[1] > 0.0))
        throw ConfigError("anisotropy multipliers must be positive");
    if (ratio < 1)
        throw ConfigError("ratio must be >= 1");
    for (int a = 0; a < dim(); ++a)
        if (cells[a] % ratio != 0)
            throw ConfigError(std::string("ratio ") + std::to_string(ratio) + " does not divide the "
                              + kAxisName[a] + " cell count " + std::to_string(cells[a]));
    if (periodic_drive().is_zero(dim()))
        throw ConfigError("drive must be nonzero on at least one axis");
    if (epochs < 0 || decay_every < 1 || !(learning_rate > 0.0) || !(decay_factor > 0.0))
        throw ConfigError("invalid training schedule");
    if (weights.data < 0 || weights.ge < 0 || weights.bc_head < 0 || weights.bc_flux < 0)
        throw ConfigError("loss weights must be >= 0");
    if (residual_fields < 0 || residual_patches < 0 || n_labeled < 0 || chunk < 1)
        throw ConfigError("residual_fields, residual_patches and n_labeled must be >= 0, chunk >= 1");
    if (realizations < 1)
        throw ConfigError("realizations must be >= 1");
    if (bc_axis < 0 || bc_axis >= dim())
        throw ConfigError("bc_axis must name an active axis");
    for (std::size_t i = 0; i < bench_counts.size(); ++i)
        if (bench_counts[i] < 1 || (i > 0 && bench_counts[i] <= bench_counts[i - 1]))
            throw ConfigError("bench_counts must be positive and ascending");
    if (out.empty())
        throw ConfigError("out must name a directory");
    network_spec();
}

GridSpec RunConfig::grid() const
{
    return GridSpec(cells[0], cells[1], cells[2], spacing[0], spacing[1], spacing[2]);
}

CovarianceModel RunConfig::covariance() const
{
    CovarianceModel m;
    m.mean_logk = mean_logk;
    m.variance = variance;
    m.corr_length = corr_length;
    return m;
}

Ratio RunConfig::upscaling_ratio() const
{
    return Ratio::uniform(ratio, grid());
}

PeriodicDrive RunConfig::periodic_drive() const
{
    PeriodicDrive d;
    d.delta_h = drive;
    return d;
}

NetworkSpec RunConfig::network_spec() const
{
    if (network == "table1" && dim() != 2)
        throw ConfigError("the table1 network is planar; use network = table2 for 3D grids");
    const int channels = isotropic() ? 1 : dim();
    NetworkSpec s;
    try {
        s = network == "table1" ? NetworkSpec::table1(ratio, channels) : NetworkSpec::table2(dim(), ratio, channels);
    } catch (const ShapeMismatch& e) {
        throw ConfigError("network " + network + " cannot take ratio " + std::to_string(ratio) + ": " + e.what());
    }
    s.encoding = encoding == "raw" ? InputEncoding::raw : InputEncoding::log_centered;
    return s;
}

TrainConfig RunConfig::train_config() const
{
    TrainConfig t;
    t.weights = weights;
    t.learning_rate = learning_rate;
    t.decay_factor = decay_factor;
    t.decay_every = decay_every;
    t.epochs = epochs;
    t.n_labeled = n_labeled;
    t.drive = periodic_drive();
    t.seed = stream_seed(seed, SeedStream::network, 0);
    t.chunk = chunk;
    t.workers = workers;
    t.precision = precision == "f64" ? Precision::f64 : Precision::f32;
    return t;
}

GlobalBoundarySpec RunConfig::boundary() const
{
    return GlobalBoundarySpec::pressure_drop(bc_axis, h_low, h_high);
}

std::vector<Method> RunConfig::methods() const
{
    if (method == "numerical")
        return {Method::numerical};
    if (method == "surrogate")
        return {Method::surrogate};
    return {Method::numerical, Method::surrogate};
}

} // namespace upscale
