#include "upscale/surrogate.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "upscale/parallel.hpp"

namespace upscale {

void TrainConfig::validate(int dim) const
{
    if (weights.data < 0 || weights.ge < 0 || weights.bc_head < 0 || weights.bc_flux < 0)
        throw std::invalid_argument("loss weights must be >= 0");
    if (epochs < 0)
        throw std::invalid_argument("epochs must be >= 0");
    if (n_labeled < 0)
        throw std::invalid_argument("n_labeled must be >= 0");
    if (!(learning_rate > 0.0) || !(decay_factor > 0.0) || decay_every < 1)
        throw std::invalid_argument("learning-rate schedule must be positive");
    if (drive.is_zero(dim))
        throw std::invalid_argument("periodic drive must be nonzero on at least one axis");
    if (chunk < 1)
        throw std::invalid_argument("chunk size must be >= 1");
}

double TrainConfig::learning_rate_at(int epoch) const
{
    return learning_rate * std::pow(decay_factor, epoch / decay_every);
}

LossBreakdown total_loss(double l_data, double l_ge, double l_bc_h, double l_bc_v, const TrainConfig& config)
{
    LossBreakdown b;
    b.l_data = config.n_labeled > 0 ? l_data : 0.0;
    b.l_ge = l_ge;
    b.l_bc_h = l_bc_h;
    b.l_bc_v = l_bc_v;
    const auto& w = config.weights;
    b.total = w.ge * b.l_ge + w.bc_head * b.l_bc_h + w.bc_flux * b.l_bc_v;
    if (config.n_labeled > 0)
        b.total += w.data * b.l_data;
    return b;
}

Eigen::MatrixXd encode_inputs(const NetworkSpec& spec, std::span<const Patch> patches)
{
    const auto shape = spec.input_shape();
    const Eigen::Index s = static_cast<Eigen::Index>(shape[0]) * shape[1] * shape[2];
    Eigen::MatrixXd x(spec.in_channels, s * static_cast<Eigen::Index>(patches.size()));
    for (std::size_t b = 0; b < patches.size(); ++b) {
        const ConductivityField& f = patches[b].field;
        const GridSpec& g = f.grid();
        if (g.dim() != spec.dim || g.counts() != shape)
            throw ShapeMismatch("patch " + describe(g) + " does not match network input size "
                                + std::to_string(spec.input_size));
        if (spec.in_channels != 1 && spec.in_channels != f.components())
            throw ShapeMismatch("network expects " + std::to_string(spec.in_channels)
                                + " channels but the patch has " + std::to_string(f.components()));
        double shift = 0.0;
        if (spec.encoding == InputEncoding::log_centered) {
            for (double k : f.component(0))
                shift += std::log(k);
            shift /= static_cast<double>(g.cells());
        }
        for (int c = 0; c < spec.in_channels; ++c) {
            const auto kc = f.component(c);
            for (Eigen::Index i = 0; i < s; ++i) {
                const double k = kc[static_cast<std::size_t>(i)];
                x(c, static_cast<Eigen::Index>(b) * s + i)
                    = spec.encoding == InputEncoding::log_centered ? std::log(k) - shift : k;
            }
        }
    }
    return x;
}

namespace {

std::vector<HeadImage> to_images(const NetworkSpec& spec, const Eigen::MatrixXd& out, std::size_t batch)
{
    std::vector<HeadImage> images;
    images.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        HeadImage img(spec.dim, spec.input_size);
        const auto n = static_cast<Eigen::Index>(img.size());
        std::memcpy(img.values().data(), out.data() + static_cast<Eigen::Index>(b) * n,
                    static_cast<std::size_t>(n) * sizeof(double));
        images.push_back(std::move(img));
    }
    return images;
}

Eigen::MatrixXd from_images(const std::vector<HeadImage>& images)
{
    const auto n = static_cast<Eigen::Index>(images.front().size());
    Eigen::MatrixXd m(1, n * static_cast<Eigen::Index>(images.size()));
    for (std::size_t b = 0; b < images.size(); ++b)
        std::memcpy(m.data() + static_cast<Eigen::Index>(b) * n, images[b].values().data(),
                    static_cast<std::size_t>(n) * sizeof(double));
    return m;
}

struct ChunkResult
{
    double data = 0.0, ge = 0.0, bc_h = 0.0, bc_v = 0.0;
    NetworkParams grad;
};

enum class ChunkKind { residual, labeled };

struct ChunkTask
{
    ChunkKind kind;
    std::size_t begin;
    std::size_t end;
};

std::vector<ChunkTask> make_tasks(std::size_t n_residual, std::size_t n_labeled, int chunk)
{
    std::vector<ChunkTask> tasks;
    const auto c = static_cast<std::size_t>(chunk);
    for (std::size_t b = 0; b < n_residual; b += c)
        tasks.push_back({ChunkKind::residual, b, std::min(n_residual, b + c)});
    for (std::size_t b = 0; b < n_labeled; b += c)
        tasks.push_back({ChunkKind::labeled, b, std::min(n_labeled, b + c)});
    return tasks;
}

ChunkResult run_chunk(const NetworkParams& params, const NetworkSpec& spec, std::span<const Patch> residual,
                      const LabeledSet& labeled, const TrainConfig& config, const ChunkTask& task, bool with_grad)
{
    const bool is_residual = task.kind == ChunkKind::residual;
    const std::span<const Patch> all = is_residual ? residual : std::span<const Patch>(labeled.patches);
    const auto patches = all.subspan(task.begin, task.end - task.begin);
    const int batch = static_cast<int>(patches.size());

    ForwardCache cache;
    const Eigen::MatrixXd out = forward(params, spec, encode_inputs(spec, patches), batch, with_grad ? &cache : nullptr,
                                      config.precision);
    const auto images = to_images(spec, out, patches.size());

    ChunkResult r;
    std::vector<HeadImage> grads;
    if (with_grad)
        grads.assign(images.size(), HeadImage(spec.dim, spec.input_size));

    const auto& w = config.weights;
    if (is_residual) {
        const double nr = static_cast<double>(residual.size());
        for (std::size_t b = 0; b < images.size(); ++b) {
            HeadImage* g = with_grad ? &grads[b] : nullptr;
            r.ge += ge_term(images[b], patches[b].field, w.ge != 0.0 ? g : nullptr, w.ge / nr);
            r.bc_h += bc_head_term(images[b], config.drive, w.bc_head != 0.0 ? g : nullptr, w.bc_head / nr);
            r.bc_v += bc_flux_term(images[b], patches[b].field, w.bc_flux != 0.0 ? g : nullptr, w.bc_flux / nr);
        }
    } else {
        const double n = static_cast<double>(config.n_labeled);
        for (std::size_t b = 0; b < images.size(); ++b) {
            HeadImage* g = with_grad && w.data != 0.0 ? &grads[b] : nullptr;
            r.data += data_term(images[b], labeled.heads[task.begin + b], g, w.data / n);
        }
    }
    if (with_grad) {
        r.grad = params.zeros_like();
        backward(params, spec, cache, from_images(grads), r.grad);
    }
    return r;
}

GradientResult accumulate(const NetworkParams& params, const NetworkSpec& spec, std::span<const Patch> residual,
                          const LabeledSet& labeled, const TrainConfig& config, bool with_grad)
{
    config.validate(spec.dim);
    if (static_cast<std::size_t>(config.n_labeled) > labeled.patches.size()
        || labeled.patches.size() != labeled.heads.size())
        throw std::invalid_argument("n_labeled exceeds the available labeled pairs");

    const std::size_t n_res = config.weights.physics_active() ? residual.size() : 0;
    const auto tasks = make_tasks(n_res, static_cast<std::size_t>(config.n_labeled), config.chunk);

    GradientResult result;
    if (with_grad)
        result.grad = params.zeros_like();
    double data = 0.0, ge = 0.0, bch = 0.0, bcv = 0.0;
    const auto reduce = [&](ChunkResult& c) {
        data += c.data;
        ge += c.ge;
        bch += c.bc_h;
        bcv += c.bc_v;
        if (with_grad)
            result.grad += c.grad;
    };

    if (config.workers == 1) {
        for (const auto& t : tasks) {
            ChunkResult c = run_chunk(params, spec, residual, labeled, config, t, with_grad);
            reduce(c);
        }
    } else {
        std::vector<ChunkResult> parts(tasks.size());
        parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
            parts[i] = run_chunk(params, spec, residual, labeled, config, tasks[i], with_grad);
        });
        for (auto& c : parts)
            reduce(c);
    }

    const double nr = n_res > 0 ? static_cast<double>(n_res) : 1.0;
    const double nl = config.n_labeled > 0 ? static_cast<double>(config.n_labeled) : 1.0;
    result.loss = total_loss(data / nl, ge / nr, bch / nr, bcv / nr, config);
    if (with_grad) {
        for (std::size_t l = 0; l < result.grad.layers.size(); ++l)
            if (!result.grad.layers[l].weight.allFinite() || !result.grad.layers[l].bias.allFinite())
                throw NumericalError("non-finite gradient", static_cast<int>(l));
    }
    return result;
}

} // namespace

std::vector<HeadImage> forward_images(const NetworkParams& params, const NetworkSpec& spec,
                                      std::span<const Patch> patches, int chunk, Precision precision)
{
    std::vector<HeadImage> images;
    images.reserve(patches.size());
    const auto c = static_cast<std::size_t>(std::max(chunk, 1));
    for (std::size_t b = 0; b < patches.size(); b += c) {
        const auto part = patches.subspan(b, std::min(c, patches.size() - b));
        const Eigen::MatrixXd out = forward(params, spec, encode_inputs(spec, part), static_cast<int>(part.size()),
                                            nullptr, precision);
        for (auto& img : to_images(spec, out, part.size()))
            images.push_back(std::move(img));
    }
    return images;
}

GradientResult gradients(const NetworkParams& params, const NetworkSpec& spec,
                         std::span<const Patch> residual_patches, const LabeledSet& labeled,
                         const TrainConfig& config)
{
    if (!params.all_finite())
        throw std::invalid_argument("network parameters must be finite");
    return accumulate(params, spec, residual_patches, labeled, config, true);
}

LossBreakdown evaluate_loss(const NetworkParams& params, const NetworkSpec& spec,
                            std::span<const Patch> residual_patches, const LabeledSet& labeled,
                            const TrainConfig& config)
{
    return accumulate(params, spec, residual_patches, labeled, config, false).loss;
}

TrainResult train(const NetworkSpec& spec, const TrainConfig& config, std::span<const Patch> residual_patches,
                  const LabeledSet& labeled)
{
    spec.validate();
    config.validate(spec.dim);
    if (residual_patches.empty() && config.n_labeled == 0)
        throw std::invalid_argument("training needs residual patches or labeled pairs");
    if (config.weights.physics_active() && residual_patches.empty())
        throw std::invalid_argument("physics loss terms need residual patches");

    TrainResult result;
    result.params = init_params(spec, config.seed);
    result.history.reserve(static_cast<std::size_t>(config.epochs));

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const std::size_t n = result.params.size();
    std::vector<double> m(n, 0.0), v(n, 0.0);
    double b1t = 1.0, b2t = 1.0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        GradientResult g;
        try {
            g = gradients(result.params, spec, residual_patches, labeled, config);
        } catch (const NumericalError& e) {
            throw TrainingError(e.what(), epoch);
        }
        if (!std::isfinite(g.loss.total))
            throw TrainingError("training diverged (non-finite loss)", epoch);
        result.history.push_back(g.loss);
        if (config.on_epoch)
            config.on_epoch(epoch, g.loss);

        const double lr = config.learning_rate_at(epoch);
        b1t *= beta1;
        b2t *= beta2;
        std::size_t i = 0;
        for (std::size_t l = 0; l < result.params.layers.size(); ++l) {
            for (Eigen::VectorXd* vec : {&result.params.layers[l].weight, &result.params.layers[l].bias}) {
                const Eigen::VectorXd& gv = vec == &result.params.layers[l].weight ? g.grad.layers[l].weight
                                                                                   : g.grad.layers[l].bias;
                for (Eigen::Index k = 0; k < vec->size(); ++k, ++i) {
                    const double gi = gv(k);
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                    const double mh = m[i] / (1.0 - b1t);
                    const double vh = v[i] / (1.0 - b2t);
                    (*vec)(k) -= lr * mh / (std::sqrt(vh) + eps);
                }
            }
        }
    }
    return result;
}

namespace {

struct DriveMapping
{
    int axis = 0;           // requested axis
    int trained_axis = 0;   // axis the network was trained on
    double scale = 1.0;     // requested / trained magnitude
};

int single_axis(const PeriodicDrive& d, int dim, const char* what)
{
    int axis = -1;
    for (int a = 0; a < dim; ++a) {
        if (d.delta_h[a] == 0.0)
            continue;
        if (axis >= 0)
            throw std::invalid_argument(std::string(what) + " must act on a single axis");
        axis = a;
    }
    if (axis < 0)
        throw std::invalid_argument(std::string(what) + " must be nonzero");
    return axis;
}

DriveMapping map_drive(const Surrogate& model, const PeriodicDrive& drive)
{
    DriveMapping m;
    m.axis = single_axis(drive, model.spec.dim, "requested drive");
    m.trained_axis = single_axis(model.drive, model.spec.dim, "trained drive");
    m.scale = drive.delta_h[m.axis] / model.drive.delta_h[m.trained_axis];
    return m;
}

} // namespace

std::vector<PatchSolution> predict_heads_batch(const Surrogate& model, std::span<const Patch> patches,
                                               const PeriodicDrive& drive, int chunk, int workers)
{
    const DriveMapping map = map_drive(model, drive);
    const bool swapped = map.axis != map.trained_axis;

    std::vector<Patch> transformed;
    std::span<const Patch> inputs = patches;
    if (swapped) {
        transformed.reserve(patches.size());
        for (const Patch& p : patches) {
            const GridSpec& g = p.field.grid();
            if (g.spacing(map.axis) != g.spacing(map.trained_axis))
                throw std::invalid_argument("surrogate drive remapping needs equal spacing on the swapped axes");
            transformed.push_back({p.coarse_index, swap_axes(p.field, map.axis, map.trained_axis)});
        }
        inputs = transformed;
    }

    const auto c = static_cast<std::size_t>(std::max(chunk, 1));
    const std::size_t n_chunks = (inputs.size() + c - 1) / c;
    std::vector<PatchSolution> out(patches.size());
    parallel_for(n_chunks, workers, [&](std::size_t ci) {
        const std::size_t begin = ci * c;
        const auto part = inputs.subspan(begin, std::min(c, inputs.size() - begin));
        const auto images = forward_images(model.params, model.spec, part, static_cast<int>(part.size()),
                                           model.precision);
        for (std::size_t b = 0; b < part.size(); ++b) {
            const GridSpec& g = part[b].field.grid();
            std::vector<double> h(g.cells());
            const double anchor = images[b].interior(0, 0, 0);
            for (int k = 0; k < g.nz(); ++k)
                for (int j = 0; j < g.ny(); ++j)
                    for (int i = 0; i < g.nx(); ++i)
                        h[g.index(i, j, k)] = (images[b].interior(i, j, k) - anchor) * map.scale;
            ScalarField heads(g, std::move(h));
            if (swapped)
                heads = swap_axes(heads, map.axis, map.trained_axis);
            const Patch& original = patches[begin + b];
            PatchSolution sol{std::move(heads), {}, drive};
            sol.face_velocity = periodic_face_velocities(original.field, sol.heads.values(), drive);
            out[begin + b] = std::move(sol);
        }
    });
    return out;
}

PatchSolution predict_heads(const Surrogate& model, const Patch& patch, const PeriodicDrive& drive)
{
    return std::move(predict_heads_batch(model, std::span<const Patch>(&patch, 1), drive).front());
}

std::vector<EquivalentTensor> surrogate_tensors(const Surrogate& model, std::span<const Patch> patches, int chunk,
                                                int workers)
{
    const int dim = model.spec.dim;
    std::vector<std::vector<PatchSolution>> per_axis;
    for (int d = 0; d < dim; ++d)
        per_axis.push_back(predict_heads_batch(model, patches, PeriodicDrive::unit(d), chunk, workers));
    std::vector<EquivalentTensor> tensors(patches.size());
    for (std::size_t p = 0; p < patches.size(); ++p) {
        std::vector<PatchSolution> sols;
        for (int d = 0; d < dim; ++d)
            sols.push_back(std::move(per_axis[d][p]));
        tensors[p] = tensor_from_solutions(sols);
    }
    return tensors;
}

namespace {

constexpr char kMagic[8] = {'U', 'P', 'T', 'G', 'C', 'N', 'N', '1'};

template <class T>
void write_le(std::ostream& out, T value)
{
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in)
{
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw std::runtime_error("truncated checkpoint");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(bytes[i]) << (8 * i);
    return v;
}

std::string drive_text(const PeriodicDrive& d)
{
    std::ostringstream os;
    os.precision(17);
    os << d.delta_h[0] << "," << d.delta_h[1] << "," << d.delta_h[2];
    return os.str();
}

} // namespace

void save_checkpoint(const Surrogate& model, std::ostream& out)
{
    const std::string desc = model.spec.descriptor() + ";drive=" + drive_text(model.drive);
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
    out.write(desc.data(), static_cast<std::streamsize>(desc.size()));
    write_le<std::uint64_t>(out, model.params.size());
    for (const auto& l : model.params.layers) {
        for (const Eigen::VectorXd* v : {&l.weight, &l.bias})
            for (Eigen::Index i = 0; i < v->size(); ++i)
                write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>((*v)(i)));
    }
    if (!out)
        throw std::runtime_error("failed to write checkpoint");
}

Surrogate load_checkpoint(std::istream& in)
{
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a surrogate checkpoint (bad magic)");
    const auto len = read_le<std::uint32_t>(in);
    std::string desc(len, '\0');
    if (!in.read(desc.data(), len))
        throw std::runtime_error("truncated checkpoint descriptor");

    const auto pos = desc.rfind(";drive=");
    if (pos == std::string::npos)
        throw std::runtime_error("checkpoint descriptor lacks the training drive");
    Surrogate model;
    model.spec = NetworkSpec::from_descriptor(desc.substr(0, pos));
    std::istringstream ds(desc.substr(pos + 7));
    char comma = 0;
    ds >> model.drive.delta_h[0] >> comma >> model.drive.delta_h[1] >> comma >> model.drive.delta_h[2];
    if (!ds)
        throw std::runtime_error("malformed drive in checkpoint descriptor");

    model.params = init_params(model.spec, 0);
    const auto count = read_le<std::uint64_t>(in);
    if (count != model.params.size())
        throw std::runtime_error("checkpoint parameter count does not match its network descriptor");
    for (auto& l : model.params.layers)
        for (Eigen::VectorXd* v : {&l.weight, &l.bias})
            for (Eigen::Index i = 0; i < v->size(); ++i)
                (*v)(i) = std::bit_cast<double>(read_le<std::uint64_t>(in));
    return model;
}

void save_checkpoint(const Surrogate& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    save_checkpoint(model, out);
}

Surrogate load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return load_checkpoint(in);
}

} // namespace upscale
