#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace upscale {

class ShapeMismatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

enum class LayerKind { conv, deconv, swish };

/// One entry of the layer list. Kernel 3 / stride 1 is the only supported geometry.
struct LayerSpec
{
    LayerKind kind = LayerKind::swish;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 0;

    bool weighted() const { return kind != LayerKind::swish; }
};

/// How a conductivity patch is encoded into network input channels.
enum class InputEncoding {
    /// ln K per channel minus the patch mean of ln Kx.
    log_centered,
    /// K per channel, unscaled.
    raw,
};

/**
 * Convolutional encoder-decoder: input r^d x in_channels, output (r+2)^d x 1.
 * Planar networks use 3x3 kernels, 3D networks 3x3x3.
 */
struct NetworkSpec
{
    int dim = 2;
    int in_channels = 1;
    int input_size = 10;
    InputEncoding encoding = InputEncoding::log_centered;
    std::vector<LayerSpec> layers;

    /// Spatial extent per axis (third entry is 1 for planar networks).
    std::array<int, 3> input_shape() const;
    std::array<int, 3> output_shape() const;
    /// Spatial shapes before layer 0 and after every layer.
    std::vector<std::array<int, 3>> shapes() const;
    /// Channel counts before layer 0 and after every layer.
    std::vector<int> channels() const;

    /// Throws ShapeMismatch unless output = input + 2 per axis and one output channel.
    void validate() const;

    std::string descriptor() const;
    static NetworkSpec from_descriptor(const std::string& text);

    bool operator==(const NetworkSpec&) const;

    /// Five conv + five deconv layers with Swish after each (channels 16..256).
    static NetworkSpec table1(int input_size = 10, int in_channels = 1);
    /// Three conv + three deconv layers with Swish after each (channels 16..64).
    static NetworkSpec table2(int dim = 3, int input_size = 5, int in_channels = 1);
};

/// Weights of one weighted layer in declaration layout, plus biases.
struct LayerParams
{
    /// conv: [out][in][kernel...], deconv: [in][out][kernel...], kernel x-fastest.
    Eigen::VectorXd weight;
    Eigen::VectorXd bias;
};

struct NetworkParams
{
    /// One entry per weighted layer, in declaration order.
    std::vector<LayerParams> layers;

    std::size_t size() const;
    void set_zero();
    NetworkParams zeros_like() const;
    NetworkParams& operator+=(const NetworkParams& other);
    NetworkParams& operator*=(double s);
    bool all_finite() const;
    /// Flat view helpers for optimizers and finite-difference checks.
    double& at(std::size_t flat);
    double at(std::size_t flat) const;
};

/// Uniform(+-sqrt(1/fan_in)) per layer, seeded through std::mt19937_64.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Arithmetic used inside forward/backward; parameters and gradients stay double.
enum class Precision { f64, f32 };

/**
 * Activations of a batch are column blocks: a matrix with one row per channel
 * and (spatial * batch) columns, sample-major, x-fastest inside each sample.
 */
struct ForwardCache
{
    std::vector<Eigen::MatrixXd> inputs; // input of each layer (f64)
    std::vector<Eigen::MatrixXf> inputs_f; // input of each layer (f32)
    Precision precision = Precision::f64;
    int batch = 0;
};

Eigen::MatrixXd forward(const NetworkParams& params, const NetworkSpec& spec, const Eigen::MatrixXd& input,
                        int batch, ForwardCache* cache = nullptr, Precision precision = Precision::f64);

/// Accumulates dL/dparams into `grad` given dL/doutput; returns dL/dinput.
Eigen::MatrixXd backward(const NetworkParams& params, const NetworkSpec& spec, const ForwardCache& cache,
                         const Eigen::MatrixXd& grad_output, NetworkParams& grad);

template <class T>
inline T swish(T x)
{
    return x / (T(1) + std::exp(-x));
}

template <class T>
inline T swish_derivative(T x)
{
    const T s = T(1) / (T(1) + std::exp(-x));
    return s + x * s * (T(1) - s);
}

} // namespace upscale
