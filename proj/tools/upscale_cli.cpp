// upscale: generate fields, train the surrogate, upscale, evaluate, benchmark.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "upscale/config.hpp"
#include "upscale/field_io.hpp"
#include "upscale/parallel.hpp"
#include "upscale/workflow.hpp"

namespace fs = std::filesystem;
using namespace upscale;

namespace {

struct CommonFlags
{
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = -1;
    std::string out;
    std::vector<std::string> overrides;
};

void log(const std::string& msg)
{
    std::cerr << msg << std::endl;
}

RunConfig resolve(const CommonFlags& flags)
{
    RunConfig cfg = flags.preset.empty() ? RunConfig{} : preset_config(flags.preset);
    if (!flags.config_path.empty()) {
        std::ifstream in(flags.config_path);
        if (!in)
            throw ConfigError("cannot read config file " + flags.config_path);
        cfg = parse_config(in, cfg);
    }
    for (const auto& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed_set)
        cfg.seed = flags.seed;
    if (flags.workers >= 0)
        cfg.workers = flags.workers;
    if (!flags.out.empty())
        cfg.out = flags.out;
    cfg.validate();
    if (cfg.workers == 0)
        cfg.workers = default_workers();
    return cfg;
}

void write_resolved(const RunConfig& cfg, const std::string& command)
{
    fs::create_directories(cfg.out);
    std::ofstream out(fs::path(cfg.out) / (command + "_config.txt"));
    out << to_text(cfg);
}

fs::path checkpoint_path(const RunConfig& cfg)
{
    return cfg.checkpoint.empty() ? fs::path(cfg.out) / "model.ckpt" : fs::path(cfg.checkpoint);
}

struct Realization
{
    std::string name;
    ConductivityField field;
};

std::vector<Realization> load_realizations(const RunConfig& cfg)
{
    std::vector<Realization> out;
    if (!cfg.fields.empty()) {
        if (!fs::is_directory(cfg.fields))
            throw ConfigError("fields directory " + cfg.fields + " does not exist");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cfg.fields))
            if (e.path().extension() == ".upf")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw ConfigError("no .upf files in " + cfg.fields);
        for (const auto& f : files) {
            ConductivityField field = load_conductivity(f);
            if (!(field.grid() == cfg.grid()))
                throw ConfigError(f.string() + " has grid " + describe(field.grid()) + ", config expects "
                                  + describe(cfg.grid()));
            out.push_back({f.stem().string(), std::move(field)});
        }
        return out;
    }
    log("generating " + std::to_string(cfg.realizations) + " realizations");
    const KleBasis basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    auto fields = generate_fields(basis, cfg, SeedStream::evaluation_fields, cfg.realizations, cfg.workers);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "real_%05zu", i);
        out.push_back({name, std::move(fields[i])});
    }
    return out;
}

bool needs_surrogate(const RunConfig& cfg)
{
    return cfg.method != "numerical";
}

Surrogate load_model(const RunConfig& cfg)
{
    const fs::path path = checkpoint_path(cfg);
    if (!fs::exists(path))
        throw ConfigError("checkpoint " + path.string() + " does not exist (run train first)");
    Surrogate model = load_checkpoint(path);
    if (!(model.spec == cfg.network_spec()))
        log("warning: checkpoint network differs from the configured one; using the checkpoint");
    return model;
}

int cmd_generate(const RunConfig& cfg)
{
    write_resolved(cfg, "generate");
    const KleBasis basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    log("KLE: " + std::to_string(basis.n_modes()) + " modes, energy fraction " + std::to_string(basis.energy_fraction()));
    const fs::path dir = fs::path(cfg.out) / "fields";
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(cfg.out) / "manifest.csv");
    manifest << "index,seed,file\n";
    for (int i = 0; i < cfg.realizations; ++i) {
        const auto seed = stream_seed(cfg.seed, SeedStream::evaluation_fields, static_cast<std::uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "real_%05d.upf", i);
        save_field(dir / name, generate_field(basis, cfg, SeedStream::evaluation_fields, static_cast<std::uint64_t>(i)));
        manifest << i << "," << seed << "," << name << "\n";
    }
    std::ofstream kle(fs::path(cfg.out) / "kle.txt");
    kle.precision(17);
    kle << "n_modes = " << basis.n_modes() << "\nenergy_fraction = " << basis.energy_fraction()
        << "\ntotal_energy = " << basis.total_energy() << "\ntarget_energy = " << cfg.energy << "\n";
    std::cout << "wrote " << cfg.realizations << " fields to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg)
{
    write_resolved(cfg, "train");
    const KleBasis basis = decompose(cfg.covariance(), cfg.grid(), cfg.energy);
    const auto pool = residual_pool(basis, cfg, cfg.workers);
    TrainConfig tc = cfg.train_config();
    log("residual pool: " + std::to_string(pool.size()) + " patches; labeled: " + std::to_string(cfg.n_labeled));
    const LabeledSet labeled = labeled_pool(pool, cfg.n_labeled, tc.drive, cfg.workers);

    const fs::path history_path = fs::path(cfg.out) / "loss_history.csv";
    std::ofstream history(history_path);
    history << "epoch,learning_rate,total,l_data,l_ge,l_bc_h,l_bc_v\n";
    history.precision(10);
    tc.on_epoch = [&](int epoch, const LossBreakdown& l) {
        history << epoch << "," << tc.learning_rate_at(epoch) << "," << l.total << "," << l.l_data << "," << l.l_ge
                << "," << l.l_bc_h << "," << l.l_bc_v << "\n";
        if (epoch % 10 == 0 || epoch + 1 == tc.epochs) {
            std::ostringstream os;
            os << "epoch " << epoch << " loss " << l.total;
            log(os.str());
        }
    };
    const std::span<const Patch> residual = cfg.weights.physics_active() ? std::span<const Patch>(pool)
                                                                          : std::span<const Patch>();
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result = train(cfg.network_spec(), tc, residual, labeled);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Surrogate model{cfg.network_spec(), std::move(result.params), tc.drive};
    const fs::path ckpt = checkpoint_path(cfg);
    if (ckpt.has_parent_path())
        fs::create_directories(ckpt.parent_path());
    save_checkpoint(model, ckpt);
    std::ofstream meta(ckpt.string() + ".meta");
    meta << "training_seconds = " << seconds << "\n";
    std::cout << "wrote " << ckpt.string() << " and " << history_path.string() << "\n";
    return 0;
}

void save_coarse(const fs::path& path, const CoarseModel& m)
{
    const int dim = m.coarse_grid.dim();
    FieldData d{m.coarse_grid, {}};
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            std::vector<double> comp(m.tensors.size());
            for (std::size_t c = 0; c < comp.size(); ++c)
                comp[c] = m.tensors[c](i, j);
            d.components.push_back(std::move(comp));
        }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    write_upf(out, d);
}

int cmd_upscale(const RunConfig& cfg)
{
    write_resolved(cfg, "upscale");
    const auto reals = load_realizations(cfg);
    std::optional<Surrogate> model;
    if (needs_surrogate(cfg))
        model = load_model(cfg);
    const fs::path dir = fs::path(cfg.out) / "coarse";
    fs::create_directories(dir);
    for (const auto& r : reals) {
        for (Method m : cfg.methods()) {
            const CoarseModel cm = m == Method::numerical
                ? upscale_numerical(r.field, cfg.upscaling_ratio(), {}, cfg.workers)
                : upscale_surrogate(r.field, cfg.upscaling_ratio(), *model, cfg.workers);
            save_coarse(dir / (r.name + "_" + method_name(m) + ".upf"), cm);
        }
    }
    std::cout << "upscaled " << reals.size() << " realizations into " << dir.string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg)
{
    write_resolved(cfg, "evaluate");
    const auto reals = load_realizations(cfg);
    std::optional<Surrogate> model;
    if (needs_surrogate(cfg))
        model = load_model(cfg);
    const auto methods = cfg.methods();
    const fs::path dir = fs::path(cfg.out);
    fs::create_directories(dir / "scatter");
    std::ofstream r2(dir / "r2.csv");
    EvaluateOptions opts;
    opts.workers = cfg.workers;
    std::vector<std::vector<double>> head_scores(methods.size());
    for (std::size_t i = 0; i < reals.size(); ++i) {
        const EvaluationReport rep = evaluate(reals[i].field, cfg.upscaling_ratio(), cfg.boundary(), methods,
                                              model ? &*model : nullptr, opts);
        write_r2_csv(r2, rep, static_cast<int>(i), i == 0);
        std::ofstream scatter(dir / "scatter" / (reals[i].name + ".csv"));
        write_scatter_csv(scatter, rep);
        for (std::size_t m = 0; m < methods.size(); ++m)
            head_scores[m].push_back(rep.methods[m].r2_head);
        log("evaluated " + reals[i].name);
    }
    std::cout << "method,realizations,mean_r2_head,median_r2_head\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
        auto s = head_scores[m];
        std::sort(s.begin(), s.end());
        double mean = 0.0;
        for (double v : s)
            mean += v;
        mean /= static_cast<double>(s.size());
        std::cout << method_name(methods[m]) << "," << s.size() << "," << mean << "," << s[s.size() / 2] << "\n";
    }
    return 0;
}

int cmd_bench(const RunConfig& cfg)
{
    write_resolved(cfg, "bench");
    RunConfig gen = cfg;
    const int needed = cfg.bench_counts.empty() ? cfg.realizations : cfg.bench_counts.back();
    gen.realizations = std::max(cfg.realizations, needed);
    const auto reals = load_realizations(gen);
    std::vector<ConductivityField> fields;
    for (const auto& r : reals)
        fields.push_back(r.field);
    std::optional<Surrogate> model;
    double training = std::numeric_limits<double>::quiet_NaN();
    if (needs_surrogate(cfg)) {
        model = load_model(cfg);
        std::ifstream meta(checkpoint_path(cfg).string() + ".meta");
        std::string key, eq;
        if (meta >> key >> eq >> training; !meta || key != "training_seconds")
            training = 0.0;
    }
    BenchmarkOptions opts;
    opts.workers = cfg.workers;
    const auto rows = benchmark_timing(fields, cfg.upscaling_ratio(), cfg.boundary(), cfg.bench_counts,
                                       model ? &*model : nullptr, training, opts);
    std::ofstream csv(fs::path(cfg.out) / "timing.csv");
    write_timing_csv(csv, rows);
    write_timing_csv(std::cout, rows);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Conductivity upscaling with periodic-BC solves and a physics-guided CNN surrogate"};
    app.require_subcommand(1);
    CommonFlags flags;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--preset", flags.preset, "2d-base | 2d-ratio5 | 2d-ratio20 | 3d-iso | 3d-aniso");
        sub->add_option("--seed", flags.seed, "run seed")->each([&](const std::string&) { flags.seed_set = true; });
        sub->add_option("--workers", flags.workers, "worker threads (0 = all cores)");
        sub->add_option("--out", flags.out, "output directory");
        sub->add_option("--set", flags.overrides, "config override key=value (repeatable)");
    };
    struct Command
    {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&);
    };
    const Command commands[] = {
        {"generate", "write seeded KLE realizations as UPF1 fields", cmd_generate},
        {"train", "train the surrogate and write a checkpoint", cmd_train},
        {"upscale", "upscale realizations with the numerical and/or surrogate method", cmd_upscale},
        {"evaluate", "compare coarse solutions against block-averaged fine solutions", cmd_evaluate},
        {"bench", "time fine, numerical and surrogate workflows", cmd_bench},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        subs.emplace_back(sub, &c);
    }
    CLI11_PARSE(app, argc, argv);
    try {
        for (const auto& [sub, cmd] : subs)
            if (sub->parsed())
                return cmd->run(resolve(flags));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
