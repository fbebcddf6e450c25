#ifndef QDISTILL_NN_HPP
#define QDISTILL_NN_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qdistill/tensor.hpp"

namespace qdistill::nn {

enum class LayerKind {
    Conv2D,
    Dense,
    MaxPool2D,
    AvgPool2D,
    ReLU,
    Tanh,
    Softmax,
    Dropout,
    Flatten
};

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int filters = 0;   // Conv2D
    int kernel = 0;    // Conv2D, pools
    int stride = 1;    // Conv2D, pools
    int padding = 0;   // Conv2D
    int units = 0;     // Dense
    double rate = 0.5; // Dropout

    static LayerSpec conv2d(int filters, int kernel, int stride = 1, int padding = 0);
    static LayerSpec dense(int units);
    static LayerSpec maxpool2d(int kernel = 2, int stride = 0); // stride 0 = kernel
    static LayerSpec avgpool2d(int kernel = 2, int stride = 0);
    static LayerSpec relu();
    static LayerSpec tanh();
    static LayerSpec softmax();
    static LayerSpec dropout(double rate = 0.5);
    static LayerSpec flatten();
};

struct NetworkSpec {
    std::array<int, 3> input_shape{1, 28, 28}; // channels, height, width
    std::vector<LayerSpec> layers;
    int num_classes = 10;
};

// conv(6,5x5)-tanh-avgpool2 x2, then 120-84-C dense stack with tanh.
NetworkSpec build_lenet_teacher(int num_classes);

// conv 64/192/384 3x3 pad 1 with ReLU (maxpool after the first two), then
// dropout-4096-dropout-4096-C dense stack.
NetworkSpec build_alexnet_teacher(int num_classes);

// Shapes and the flat parameter layout, resolved at build time. Throws
// ShapeError when a layer cannot consume its input shape.
struct LayerPlan {
    LayerSpec spec;
    std::array<int, 3> in_shape{};
    std::array<int, 3> out_shape{};
    std::size_t weight_offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_offset = 0;
    std::size_t bias_count = 0;

    long param_count() const {
        return static_cast<long>(weight_count + bias_count);
    }
    std::string describe() const;
};

struct NetworkPlan {
    NetworkSpec spec;
    std::vector<LayerPlan> layers;
    std::size_t total_params = 0;
    std::array<int, 3> output_shape{};
};

NetworkPlan plan_network(const NetworkSpec& spec);

long count_parameters(const NetworkPlan& plan);
std::vector<std::pair<std::string, long>> layer_parameter_counts(const NetworkPlan& plan);

// Xavier-uniform weights, zero biases.
std::vector<double> init_params(const NetworkPlan& plan, std::uint64_t seed);

enum class Mode { Train, Infer };

// Per-layer inputs plus pooling/dropout bookkeeping needed by backward.
struct ForwardTrace {
    std::vector<std::vector<double>> inputs; // inputs[i] feeds layer i
    std::vector<double> output;
    std::vector<std::vector<int>> maxpool_argmax;     // indexed per layer
    std::vector<std::vector<std::uint8_t>> dropout_mask;
};

// Single-sample forward. `dropout_seed` only matters in Train mode.
std::vector<double> forward_sample(const NetworkPlan& plan,
                                   std::span<const double> params,
                                   std::span<const double> input, Mode mode,
                                   std::uint64_t dropout_seed = 0,
                                   ForwardTrace* trace = nullptr);

// Gradient of a scalar loss w.r.t. all parameters given dloss/dlogits, using
// the cached trace of the matching forward call. If input_grad is non-null
// it receives dloss/dinput.
std::vector<double> backward_sample(const NetworkPlan& plan,
                                    std::span<const double> params,
                                    const ForwardTrace& trace,
                                    std::span<const double> output_cotangent,
                                    std::vector<double>* input_grad = nullptr);

// Batch inference over an N x C x H x W tensor; returns N x num_classes.
// Deterministic; parallel over samples.
Tensor forward_batch(const NetworkPlan& plan, std::span<const double> params,
                     const Tensor& batch);

int argmax(std::span<const double> v);

// Versioned binary checkpoint: architecture name, class count, and the flat
// parameter vector, shape-tagged per layer.
void save_checkpoint(const std::string& path, const std::string& arch_name,
                     const NetworkPlan& plan, std::span<const double> params);

struct Checkpoint {
    std::string arch_name;
    int num_classes = 0;
    std::vector<double> params;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace qdistill::nn

#endif
