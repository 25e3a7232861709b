#include "upscale/network.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <type_traits>

namespace upscale {

namespace {

const char* kind_name(LayerKind k)
{
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::deconv: return "deconv";
    default: return "swish";
    }
}

int kernel_extent(const NetworkSpec& spec, int axis, int kernel)
{
    return axis < spec.dim ? kernel : 1;
}

std::array<int, 3> layer_output(const NetworkSpec& spec, const LayerSpec& l, const std::array<int, 3>& in)
{
    if (!l.weighted())
        return in;
    std::array<int, 3> out{};
    for (int a = 0; a < 3; ++a) {
        if (a >= spec.dim) {
            out[a] = in[a];
            continue;
        }
        if (l.kind == LayerKind::conv)
            out[a] = (in[a] + 2 * l.padding - l.kernel) / l.stride + 1;
        else
            out[a] = (in[a] - 1) * l.stride - 2 * l.padding + l.kernel;
    }
    return out;
}

int kernel_volume(const NetworkSpec& spec, const LayerSpec& l)
{
    int v = 1;
    for (int a = 0; a < 3; ++a)
        v *= kernel_extent(spec, a, l.kernel);
    return v;
}

/*
 * Stride-1 convolution geometry. A conv layer maps `in` to `out`. A deconv
 * layer is the adjoint of the convolution from its output shape back to its
 * input shape, so for deconv `in`/`out` and `cin`/`cout` are swapped.
 */
struct ConvGeometry
{
    std::array<int, 3> in{};
    std::array<int, 3> out{};
    std::array<int, 3> kernel{};
    std::array<int, 3> pad{};
    int cin = 0;
    int cout = 0;
    int kvol = 0;

    int sin() const { return in[0] * in[1] * in[2]; }
    int sout() const { return out[0] * out[1] * out[2]; }
};

ConvGeometry geometry(const NetworkSpec& spec, const LayerSpec& l, const std::array<int, 3>& in, int cin)
{
    ConvGeometry g;
    const auto out = layer_output(spec, l, in);
    const bool adjoint = l.kind == LayerKind::deconv;
    g.in = adjoint ? out : in;
    g.out = adjoint ? in : out;
    g.cin = adjoint ? l.out_channels : cin;
    g.cout = adjoint ? cin : l.out_channels;
    g.kvol = kernel_volume(spec, l);
    for (int a = 0; a < 3; ++a) {
        g.kernel[a] = kernel_extent(spec, a, l.kernel);
        g.pad[a] = a < spec.dim ? l.padding : 0;
    }
    return g;
}

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

/// Declared weights [a][b][kernel] as an (a x kvol*b) matrix, column index u*b + b_idx.
template <class S>
Mat<S> weight_matrix(const ConvGeometry& g, const LayerParams& p)
{
    const int rows = g.cout, inner = g.cin;
    Mat<S> w(rows, static_cast<Eigen::Index>(g.kvol) * inner);
    const double* src = p.weight.data();
    for (int a = 0; a < rows; ++a)
        for (int b = 0; b < inner; ++b)
            for (int u = 0; u < g.kvol; ++u)
                w(a, static_cast<Eigen::Index>(u) * inner + b)
                    = static_cast<S>(src[(static_cast<std::size_t>(a) * inner + b) * g.kvol + u]);
    return w;
}

template <class S>
void accumulate_weights(const ConvGeometry& g, const Mat<S>& dw, LayerParams& out)
{
    const int rows = g.cout, inner = g.cin;
    double* dst = out.weight.data();
    for (int a = 0; a < rows; ++a)
        for (int b = 0; b < inner; ++b)
            for (int u = 0; u < g.kvol; ++u)
                dst[(static_cast<std::size_t>(a) * inner + b) * g.kvol + u]
                    += static_cast<double>(dw(a, static_cast<Eigen::Index>(u) * inner + b));
}

/// Source spatial index for output position + kernel offset, or -1 in the padding.
template <class Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn)
{
    for (int oz = 0; oz < g.out[2]; ++oz)
        for (int oy = 0; oy < g.out[1]; ++oy)
            for (int ox = 0; ox < g.out[0]; ++ox) {
                const int so = ox + g.out[0] * (oy + g.out[1] * oz);
                int u = 0;
                for (int kz = 0; kz < g.kernel[2]; ++kz) {
                    const int iz = oz + kz - g.pad[2];
                    for (int ky = 0; ky < g.kernel[1]; ++ky) {
                        const int iy = oy + ky - g.pad[1];
                        for (int kx = 0; kx < g.kernel[0]; ++kx, ++u) {
                            const int ix = ox + kx - g.pad[0];
                            const bool inside = ix >= 0 && iy >= 0 && iz >= 0 && ix < g.in[0] && iy < g.in[1]
                                && iz < g.in[2];
                            fn(so, u, inside ? ix + g.in[0] * (iy + g.in[1] * iz) : -1);
                        }
                    }
                }
            }
}

template <class S>
Mat<S> im2col(const Mat<S>& x, const ConvGeometry& g, int batch)
{
    Mat<S> cols(static_cast<Eigen::Index>(g.kvol) * g.cin, static_cast<Eigen::Index>(g.sout()) * batch);
    const int sin = g.sin(), sout = g.sout();
    for_each_tap(g, [&](int so, int u, int si) {
        for (int b = 0; b < batch; ++b) {
            auto dst = cols.col(static_cast<Eigen::Index>(b) * sout + so).segment(static_cast<Eigen::Index>(u) * g.cin, g.cin);
            if (si < 0)
                dst.setZero();
            else
                dst = x.col(static_cast<Eigen::Index>(b) * sin + si);
        }
    });
    return cols;
}

template <class S>
Mat<S> col2im(const Mat<S>& cols, const ConvGeometry& g, int batch)
{
    const int sin = g.sin(), sout = g.sout();
    Mat<S> x = Mat<S>::Zero(g.cin, static_cast<Eigen::Index>(sin) * batch);
    for_each_tap(g, [&](int so, int u, int si) {
        if (si < 0)
            return;
        for (int b = 0; b < batch; ++b)
            x.col(static_cast<Eigen::Index>(b) * sin + si)
                += cols.col(static_cast<Eigen::Index>(b) * sout + so).segment(static_cast<Eigen::Index>(u) * g.cin, g.cin);
    });
    return x;
}

template <class S, class Cache>
auto& cached_inputs(Cache& cache)
{
    if constexpr (std::is_same_v<S, float>)
        return cache.inputs_f;
    else
        return cache.inputs;
}

template <class S>
Eigen::MatrixXd forward_impl(const NetworkParams& params, const NetworkSpec& spec, const Eigen::MatrixXd& input,
                             int batch, ForwardCache* cache)
{
    const auto shapes = spec.shapes();
    const auto ch = spec.channels();
    std::vector<Mat<S>>* stored = cache ? &cached_inputs<S>(*cache) : nullptr;
    Mat<S> x = input.cast<S>();
    std::size_t wi = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (stored)
            stored->push_back(x);
        if (!l.weighted()) {
            x = x.unaryExpr([](S v) { return swish(v); });
            continue;
        }
        const ConvGeometry g = geometry(spec, l, shapes[i], ch[i]);
        const LayerParams& lp = params.layers.at(wi++);
        const Mat<S> w = weight_matrix<S>(g, lp);
        Mat<S> y;
        if (l.kind == LayerKind::conv)
            y.noalias() = w * im2col(x, g, batch);
        else
            y = col2im<S>(w.transpose() * x, g, batch);
        y.colwise() += lp.bias.cast<S>();
        x = std::move(y);
    }
    return x.template cast<double>();
}

template <class S>
Eigen::MatrixXd backward_impl(const NetworkParams& params, const NetworkSpec& spec, const ForwardCache& cache,
                              const Eigen::MatrixXd& grad_output, NetworkParams& grad)
{
    const auto shapes = spec.shapes();
    const auto ch = spec.channels();
    const int batch = cache.batch;
    const auto& inputs = cached_inputs<S>(cache);
    Mat<S> d = grad_output.cast<S>();
    std::size_t wi = params.layers.size();
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        const auto& l = spec.layers[i];
        const Mat<S>& x = inputs[i];
        if (!l.weighted()) {
            d = d.cwiseProduct(x.unaryExpr([](S v) { return swish_derivative(v); }));
            continue;
        }
        --wi;
        const ConvGeometry g = geometry(spec, l, shapes[i], ch[i]);
        const Mat<S> w = weight_matrix<S>(g, params.layers[wi]);
        grad.layers[wi].bias += d.rowwise().sum().template cast<double>();
        if (l.kind == LayerKind::conv) {
            const Mat<S> cols = im2col(x, g, batch);
            const Mat<S> dw = d * cols.transpose();
            accumulate_weights<S>(g, dw, grad.layers[wi]);
            d = col2im<S>(w.transpose() * d, g, batch);
        } else {
            const Mat<S> cols = im2col(d, g, batch);
            const Mat<S> dw = x * cols.transpose();
            accumulate_weights<S>(g, dw, grad.layers[wi]);
            d = w * cols;
        }
    }
    return d.template cast<double>();
}

} // namespace

namespace {

std::string layer_token(const LayerSpec& l)
{
    std::ostringstream os;
    os << kind_name(l.kind);
    if (l.weighted())
        os << ":" << l.out_channels << ":k" << l.kernel << "s" << l.stride << "p" << l.padding;
    return os.str();
}

} // namespace

std::array<int, 3> NetworkSpec::input_shape() const
{
    return {input_size, input_size, dim == 3 ? input_size : 1};
}

std::array<int, 3> NetworkSpec::output_shape() const
{
    return shapes().back();
}

std::vector<std::array<int, 3>> NetworkSpec::shapes() const
{
    std::vector<std::array<int, 3>> s{input_shape()};
    for (const auto& l : layers)
        s.push_back(layer_output(*this, l, s.back()));
    return s;
}

std::vector<int> NetworkSpec::channels() const
{
    std::vector<int> c{in_channels};
    for (const auto& l : layers)
        c.push_back(l.weighted() ? l.out_channels : c.back());
    return c;
}

void NetworkSpec::validate() const
{
    if (dim != 2 && dim != 3)
        throw ShapeMismatch("network dimensionality must be 2 or 3");
    if (in_channels < 1 || input_size < 1)
        throw ShapeMismatch("network needs at least one input channel and a positive input size");
    if (layers.empty())
        throw ShapeMismatch("network has no layers");
    for (const auto& l : layers) {
        if (!l.weighted())
            continue;
        if (l.kernel != 3 || l.stride != 1)
            throw ShapeMismatch("only kernel 3, stride 1 layers are supported");
        if (l.padding < 0 || l.padding > 1 || l.out_channels < 1)
            throw ShapeMismatch("layer padding must be 0 or 1 with a positive channel count");
    }
    const auto s = shapes();
    for (const auto& shape : s)
        for (int a = 0; a < dim; ++a)
            if (shape[a] < 1)
                throw ShapeMismatch("layer stack shrinks a spatial extent below 1");
    const auto out = s.back();
    for (int a = 0; a < dim; ++a)
        if (out[a] != input_size + 2)
            throw ShapeMismatch("network output must be input size + 2 per axis, got " + std::to_string(out[a]));
    if (channels().back() != 1)
        throw ShapeMismatch("network must end with a single channel");
}

std::string NetworkSpec::descriptor() const
{
    std::ostringstream os;
    os << "dim=" << dim << ";in=" << in_channels << ";r=" << input_size
       << ";enc=" << (encoding == InputEncoding::raw ? "raw" : "log") << ";layers=";
    for (std::size_t i = 0; i < layers.size(); ++i)
        os << (i ? "," : "") << layer_token(layers[i]);
    return os.str();
}

NetworkSpec NetworkSpec::from_descriptor(const std::string& text)
{
    NetworkSpec spec;
    spec.layers.clear();
    std::istringstream fields(text);
    std::string field;
    bool have_layers = false;
    while (std::getline(fields, field, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("malformed network descriptor field: " + field);
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "dim") {
            spec.dim = std::stoi(value);
        } else if (key == "in") {
            spec.in_channels = std::stoi(value);
        } else if (key == "r") {
            spec.input_size = std::stoi(value);
        } else if (key == "enc") {
            if (value == "log")
                spec.encoding = InputEncoding::log_centered;
            else if (value == "raw")
                spec.encoding = InputEncoding::raw;
            else
                throw std::invalid_argument("unknown input encoding: " + value);
        } else if (key == "layers") {
            have_layers = true;
            std::istringstream toks(value);
            std::string tok;
            while (std::getline(toks, tok, ',')) {
                LayerSpec l;
                if (tok == "swish") {
                    l.kind = LayerKind::swish;
                } else {
                    const auto c1 = tok.find(':');
                    const auto c2 = tok.find(':', c1 + 1);
                    if (c1 == std::string::npos || c2 == std::string::npos)
                        throw std::invalid_argument("malformed layer token: " + tok);
                    const std::string kind = tok.substr(0, c1);
                    if (kind == "conv")
                        l.kind = LayerKind::conv;
                    else if (kind == "deconv")
                        l.kind = LayerKind::deconv;
                    else
                        throw std::invalid_argument("unknown layer kind: " + kind);
                    l.out_channels = std::stoi(tok.substr(c1 + 1, c2 - c1 - 1));
                    if (std::sscanf(tok.c_str() + c2 + 1, "k%ds%dp%d", &l.kernel, &l.stride, &l.padding) != 3)
                        throw std::invalid_argument("malformed layer geometry: " + tok);
                }
                spec.layers.push_back(l);
            }
        }
    }
    if (!have_layers)
        throw std::invalid_argument("network descriptor has no layer list");
    spec.validate();
    return spec;
}

bool NetworkSpec::operator==(const NetworkSpec& o) const
{
    return descriptor() == o.descriptor();
}

NetworkSpec NetworkSpec::table1(int input_size, int in_channels)
{
    NetworkSpec s;
    s.dim = 2;
    s.in_channels = in_channels;
    s.input_size = input_size;
    const auto conv = [&](int c, int p) {
        s.layers.push_back({LayerKind::conv, c, 3, 1, p});
        s.layers.push_back({});
    };
    const auto deconv = [&](int c, int p) {
        s.layers.push_back({LayerKind::deconv, c, 3, 1, p});
        s.layers.push_back({});
    };
    conv(16, 1);
    conv(32, 1);
    conv(64, 0);
    conv(128, 0);
    conv(256, 0);
    deconv(128, 0);
    deconv(64, 0);
    deconv(32, 0);
    deconv(16, 0);
    deconv(1, 1);
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::table2(int dim, int input_size, int in_channels)
{
    NetworkSpec s;
    s.dim = dim;
    s.in_channels = in_channels;
    s.input_size = input_size;
    const auto add = [&](LayerKind k, int c, int p) {
        s.layers.push_back({k, c, 3, 1, p});
        s.layers.push_back({});
    };
    add(LayerKind::conv, 16, 1);
    add(LayerKind::conv, 32, 1);
    add(LayerKind::conv, 64, 0);
    add(LayerKind::deconv, 32, 0);
    add(LayerKind::deconv, 16, 0);
    add(LayerKind::deconv, 1, 1);
    s.validate();
    return s;
}

std::size_t NetworkParams::size() const
{
    std::size_t n = 0;
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void NetworkParams::set_zero()
{
    for (auto& l : layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

NetworkParams NetworkParams::zeros_like() const
{
    NetworkParams z = *this;
    z.set_zero();
    return z;
}

NetworkParams& NetworkParams::operator+=(const NetworkParams& other)
{
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight += other.layers[i].weight;
        layers[i].bias += other.layers[i].bias;
    }
    return *this;
}

NetworkParams& NetworkParams::operator*=(double s)
{
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
    return *this;
}

bool NetworkParams::all_finite() const
{
    for (const auto& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite())
            return false;
    return true;
}

double& NetworkParams::at(std::size_t flat)
{
    for (auto& l : layers) {
        const auto nw = static_cast<std::size_t>(l.weight.size());
        if (flat < nw)
            return l.weight(static_cast<Eigen::Index>(flat));
        flat -= nw;
        const auto nb = static_cast<std::size_t>(l.bias.size());
        if (flat < nb)
            return l.bias(static_cast<Eigen::Index>(flat));
        flat -= nb;
    }
    throw std::out_of_range("parameter index out of range");
}

double NetworkParams::at(std::size_t flat) const
{
    return const_cast<NetworkParams&>(*this).at(flat);
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed)
{
    spec.validate();
    std::mt19937_64 rng(seed);
    NetworkParams p;
    const auto ch = spec.channels();
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        if (!l.weighted())
            continue;
        const int cin = ch[i];
        const int kvol = kernel_volume(spec, l);
        const double bound = std::sqrt(1.0 / (static_cast<double>(cin) * kvol));
        LayerParams lp;
        lp.weight.resize(static_cast<Eigen::Index>(cin) * l.out_channels * kvol);
        lp.bias.resize(l.out_channels);
        // 53-bit uniforms in [-bound, bound); avoids implementation-defined distributions.
        const auto uni = [&] { return (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * bound; };
        for (Eigen::Index k = 0; k < lp.weight.size(); ++k)
            lp.weight(k) = uni();
        for (Eigen::Index k = 0; k < lp.bias.size(); ++k)
            lp.bias(k) = uni();
        p.layers.push_back(std::move(lp));
    }
    return p;
}

Eigen::MatrixXd forward(const NetworkParams& params, const NetworkSpec& spec, const Eigen::MatrixXd& input,
                        int batch, ForwardCache* cache, Precision precision)
{
    const auto s0 = spec.input_shape();
    if (input.rows() != spec.in_channels || input.cols() != static_cast<Eigen::Index>(s0[0]) * s0[1] * s0[2] * batch)
        throw ShapeMismatch("network input shape does not match the spec");
    if (cache) {
        cache->inputs.clear();
        cache->inputs_f.clear();
        cache->batch = batch;
        cache->precision = precision;
    }
    if (precision == Precision::f32)
        return forward_impl<float>(params, spec, input, batch, cache);
    return forward_impl<double>(params, spec, input, batch, cache);
}

Eigen::MatrixXd backward(const NetworkParams& params, const NetworkSpec& spec, const ForwardCache& cache,
                         const Eigen::MatrixXd& grad_output, NetworkParams& grad)
{
    if (cache.precision == Precision::f32)
        return backward_impl<float>(params, spec, cache, grad_output, grad);
    return backward_impl<double>(params, spec, cache, grad_output, grad);
}

} // namespace upscale
