#include "qdistill/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qdistill/parallel.hpp"
#include "qdistill/rng.hpp"

namespace qdistill::nn {

namespace {

const char kCheckpointMagic[8] = {'Q', 'D', 'C', 'K', 'P', 'T', '0', '1'};

std::size_t volume(const std::array<int, 3>& s) {
    return static_cast<std::size_t>(s[0]) * static_cast<std::size_t>(s[1]) *
           static_cast<std::size_t>(s[2]);
}

int conv_out_extent(int in, int kernel, int stride, int padding) {
    const int span = in + 2 * padding - kernel;
    if (span < 0 || stride < 1) return -1;
    return span / stride + 1;
}

const char* kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::AvgPool2D: return "avgpool2d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

} // namespace

LayerSpec LayerSpec::conv2d(int filters, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}
LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    return s;
}
LayerSpec LayerSpec::maxpool2d(int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2D;
    s.kernel = kernel;
    s.stride = stride > 0 ? stride : kernel;
    return s;
}
LayerSpec LayerSpec::avgpool2d(int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::AvgPool2D;
    s.kernel = kernel;
    s.stride = stride > 0 ? stride : kernel;
    return s;
}
LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}
LayerSpec LayerSpec::tanh() {
    LayerSpec s;
    s.kind = LayerKind::Tanh;
    return s;
}
LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}
LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

NetworkSpec build_lenet_teacher(int num_classes) {
    NetworkSpec net;
    net.input_shape = {1, 28, 28};
    net.num_classes = num_classes;
    net.layers = {
        LayerSpec::conv2d(6, 5),  LayerSpec::tanh(), LayerSpec::avgpool2d(2),
        LayerSpec::conv2d(16, 5), LayerSpec::tanh(), LayerSpec::avgpool2d(2),
        LayerSpec::flatten(),     LayerSpec::dense(120), LayerSpec::tanh(),
        LayerSpec::dense(84),     LayerSpec::tanh(),     LayerSpec::dense(num_classes),
    };
    return net;
}

NetworkSpec build_alexnet_teacher(int num_classes) {
    NetworkSpec net;
    net.input_shape = {1, 28, 28};
    net.num_classes = num_classes;
    net.layers = {
        LayerSpec::conv2d(64, 3, 1, 1),  LayerSpec::relu(), LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(192, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2),
        LayerSpec::conv2d(384, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
        LayerSpec::dropout(0.5),         LayerSpec::dense(4096), LayerSpec::relu(),
        LayerSpec::dropout(0.5),         LayerSpec::dense(4096), LayerSpec::relu(),
        LayerSpec::dense(num_classes),
    };
    return net;
}

std::string LayerPlan::describe() const {
    std::ostringstream out;
    out << kind_name(spec.kind);
    switch (spec.kind) {
    case LayerKind::Conv2D:
        out << "(" << spec.filters << "," << spec.kernel << "x" << spec.kernel
            << ",s" << spec.stride << ",p" << spec.padding << ")";
        break;
    case LayerKind::Dense:
        out << "(" << spec.units << ")";
        break;
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
        out << "(" << spec.kernel << ")";
        break;
    case LayerKind::Dropout:
        out << "(" << spec.rate << ")";
        break;
    default:
        break;
    }
    return out.str();
}

NetworkPlan plan_network(const NetworkSpec& spec) {
    NetworkPlan plan;
    plan.spec = spec;
    std::array<int, 3> shape = spec.input_shape;
    std::size_t offset = 0;
    for (const auto& layer : spec.layers) {
        LayerPlan lp;
        lp.spec = layer;
        lp.in_shape = shape;
        switch (layer.kind) {
        case LayerKind::Conv2D: {
            if (layer.filters < 1 || layer.kernel < 1)
                throw ShapeError("conv2d needs positive filters and kernel");
            const int oh = conv_out_extent(shape[1], layer.kernel, layer.stride,
                                           layer.padding);
            const int ow = conv_out_extent(shape[2], layer.kernel, layer.stride,
                                           layer.padding);
            if (oh < 1 || ow < 1)
                throw ShapeError("conv2d kernel does not fit input " +
                                 std::to_string(shape[1]) + "x" + std::to_string(shape[2]));
            lp.out_shape = {layer.filters, oh, ow};
            lp.weight_count = static_cast<std::size_t>(layer.filters) *
                              static_cast<std::size_t>(shape[0]) *
                              static_cast<std::size_t>(layer.kernel) *
                              static_cast<std::size_t>(layer.kernel);
            lp.bias_count = static_cast<std::size_t>(layer.filters);
            break;
        }
        case LayerKind::Dense: {
            if (layer.units < 1) throw ShapeError("dense needs positive units");
            const std::size_t in_dim = volume(shape);
            lp.out_shape = {layer.units, 1, 1};
            lp.weight_count = static_cast<std::size_t>(layer.units) * in_dim;
            lp.bias_count = static_cast<std::size_t>(layer.units);
            break;
        }
        case LayerKind::MaxPool2D:
        case LayerKind::AvgPool2D: {
            const int oh = conv_out_extent(shape[1], layer.kernel, layer.stride, 0);
            const int ow = conv_out_extent(shape[2], layer.kernel, layer.stride, 0);
            if (oh < 1 || ow < 1) throw ShapeError("pool kernel does not fit input");
            lp.out_shape = {shape[0], oh, ow};
            break;
        }
        case LayerKind::ReLU:
        case LayerKind::Tanh:
        case LayerKind::Softmax:
        case LayerKind::Dropout:
            lp.out_shape = shape;
            break;
        case LayerKind::Flatten:
            lp.out_shape = {static_cast<int>(volume(shape)), 1, 1};
            break;
        }
        lp.weight_offset = offset;
        offset += lp.weight_count;
        lp.bias_offset = offset;
        offset += lp.bias_count;
        shape = lp.out_shape;
        plan.layers.push_back(lp);
    }
    plan.total_params = offset;
    plan.output_shape = shape;
    if (volume(shape) != static_cast<std::size_t>(spec.num_classes))
        throw ShapeError("network output volume " + std::to_string(volume(shape)) +
                         " does not equal num_classes " +
                         std::to_string(spec.num_classes));
    return plan;
}

long count_parameters(const NetworkPlan& plan) {
    long total = 0;
    for (const auto& lp : plan.layers) total += lp.param_count();
    return total;
}

std::vector<std::pair<std::string, long>> layer_parameter_counts(const NetworkPlan& plan) {
    std::vector<std::pair<std::string, long>> out;
    for (const auto& lp : plan.layers)
        out.emplace_back(lp.describe(), lp.param_count());
    return out;
}

std::vector<double> init_params(const NetworkPlan& plan, std::uint64_t seed) {
    std::vector<double> params(plan.total_params, 0.0);
    Rng rng(derive_seed(seed, "nn-init"));
    for (const auto& lp : plan.layers) {
        if (lp.weight_count == 0) continue;
        double fan_in = 0, fan_out = 0;
        if (lp.spec.kind == LayerKind::Conv2D) {
            fan_in = static_cast<double>(lp.in_shape[0]) * lp.spec.kernel * lp.spec.kernel;
            fan_out = static_cast<double>(lp.spec.filters) * lp.spec.kernel * lp.spec.kernel;
        } else {
            fan_in = static_cast<double>(volume(lp.in_shape));
            fan_out = static_cast<double>(lp.spec.units);
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < lp.weight_count; ++i)
            params[lp.weight_offset + i] = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return params;
}

namespace {

void conv2d_forward(const LayerPlan& lp, std::span<const double> params,
                    std::span<const double> in, std::span<double> out) {
    const int C = lp.in_shape[0], H = lp.in_shape[1], W = lp.in_shape[2];
    const int F = lp.out_shape[0], OH = lp.out_shape[1], OW = lp.out_shape[2];
    const int K = lp.spec.kernel, S = lp.spec.stride, P = lp.spec.padding;
    const double* w = params.data() + lp.weight_offset;
    const double* b = params.data() + lp.bias_offset;
    for (int f = 0; f < F; ++f) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                double acc = b[f];
                for (int c = 0; c < C; ++c) {
                    const double* wf = w + ((static_cast<std::size_t>(f) * C + c) * K) * K;
                    const double* ic = in.data() + static_cast<std::size_t>(c) * H * W;
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = oy * S - P + ky;
                        if (iy < 0 || iy >= H) continue;
                        const int x0 = ox * S - P;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            acc += wf[ky * K + kx] * ic[iy * W + ix];
                        }
                    }
                }
                out[(static_cast<std::size_t>(f) * OH + oy) * OW + ox] = acc;
            }
        }
    }
}

void conv2d_backward(const LayerPlan& lp, std::span<const double> params,
                     std::span<const double> in, std::span<const double> dout,
                     std::span<double> grads, std::span<double> din) {
    const int C = lp.in_shape[0], H = lp.in_shape[1], W = lp.in_shape[2];
    const int F = lp.out_shape[0], OH = lp.out_shape[1], OW = lp.out_shape[2];
    const int K = lp.spec.kernel, S = lp.spec.stride, P = lp.spec.padding;
    const double* w = params.data() + lp.weight_offset;
    double* dw = grads.data() + lp.weight_offset;
    double* db = grads.data() + lp.bias_offset;
    for (int f = 0; f < F; ++f) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                const double g = dout[(static_cast<std::size_t>(f) * OH + oy) * OW + ox];
                if (g == 0.0) continue;
                db[f] += g;
                for (int c = 0; c < C; ++c) {
                    const std::size_t wbase = ((static_cast<std::size_t>(f) * C + c) * K) * K;
                    const std::size_t ibase = static_cast<std::size_t>(c) * H * W;
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = oy * S - P + ky;
                        if (iy < 0 || iy >= H) continue;
                        const int x0 = ox * S - P;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = x0 + kx;
                            if (ix < 0 || ix >= W) continue;
                            dw[wbase + ky * K + kx] += g * in[ibase + iy * W + ix];
                            din[ibase + iy * W + ix] += g * w[wbase + ky * K + kx];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

std::vector<double> forward_sample(const NetworkPlan& plan,
                                   std::span<const double> params,
                                   std::span<const double> input, Mode mode,
                                   std::uint64_t dropout_seed, ForwardTrace* trace) {
    if (params.size() != plan.total_params)
        throw ShapeError("parameter vector length mismatch");
    if (input.size() != volume(plan.spec.input_shape))
        throw ShapeError("input length " + std::to_string(input.size()) +
                         " does not match network input volume " +
                         std::to_string(volume(plan.spec.input_shape)));
    if (trace) {
        trace->inputs.assign(plan.layers.size(), {});
        trace->maxpool_argmax.assign(plan.layers.size(), {});
        trace->dropout_mask.assign(plan.layers.size(), {});
    }
    std::vector<double> act(input.begin(), input.end());
    for (std::size_t li = 0; li < plan.layers.size(); ++li) {
        const LayerPlan& lp = plan.layers[li];
        if (trace) trace->inputs[li] = act;
        std::vector<double> next(volume(lp.out_shape), 0.0);
        switch (lp.spec.kind) {
        case LayerKind::Conv2D:
            conv2d_forward(lp, params, act, next);
            break;
        case LayerKind::Dense: {
            const std::size_t in_dim = act.size();
            const int U = lp.spec.units;
            const double* w = params.data() + lp.weight_offset;
            const double* b = params.data() + lp.bias_offset;
            for (int u = 0; u < U; ++u) {
                double acc = b[u];
                const double* wu = w + static_cast<std::size_t>(u) * in_dim;
                for (std::size_t i = 0; i < in_dim; ++i) acc += wu[i] * act[i];
                next[static_cast<std::size_t>(u)] = acc;
            }
            break;
        }
        case LayerKind::MaxPool2D: {
            const int C = lp.in_shape[0], H = lp.in_shape[1], W = lp.in_shape[2];
            const int OH = lp.out_shape[1], OW = lp.out_shape[2];
            const int K = lp.spec.kernel, S = lp.spec.stride;
            std::vector<int> argmax(next.size(), 0);
            for (int c = 0; c < C; ++c)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        double best = -1e300;
                        int besti = 0;
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = oy * S + ky, ix = ox * S + kx;
                                if (iy >= H || ix >= W) continue;
                                const int idx = (c * H + iy) * W + ix;
                                if (act[static_cast<std::size_t>(idx)] > best) {
                                    best = act[static_cast<std::size_t>(idx)];
                                    besti = idx;
                                }
                            }
                        const std::size_t o = (static_cast<std::size_t>(c) * OH + oy) * OW + ox;
                        next[o] = best;
                        argmax[o] = besti;
                    }
            if (trace) trace->maxpool_argmax[li] = std::move(argmax);
            break;
        }
        case LayerKind::AvgPool2D: {
            const int C = lp.in_shape[0], H = lp.in_shape[1], W = lp.in_shape[2];
            const int OH = lp.out_shape[1], OW = lp.out_shape[2];
            const int K = lp.spec.kernel, S = lp.spec.stride;
            const double inv = 1.0 / (K * K);
            for (int c = 0; c < C; ++c)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        double acc = 0.0;
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = oy * S + ky, ix = ox * S + kx;
                                if (iy >= H || ix >= W) continue;
                                acc += act[(static_cast<std::size_t>(c) * H + iy) * W + ix];
                            }
                        next[(static_cast<std::size_t>(c) * OH + oy) * OW + ox] = acc * inv;
                    }
            break;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < act.size(); ++i)
                next[i] = act[i] > 0.0 ? act[i] : 0.0;
            break;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < act.size(); ++i) next[i] = std::tanh(act[i]);
            break;
        case LayerKind::Softmax: {
            double mx = act[0];
            for (double v : act) mx = std::max(mx, v);
            double denom = 0.0;
            for (std::size_t i = 0; i < act.size(); ++i) {
                next[i] = std::exp(act[i] - mx);
                denom += next[i];
            }
            for (auto& v : next) v /= denom;
            break;
        }
        case LayerKind::Dropout: {
            if (mode == Mode::Infer) {
                next = act;
            } else {
                Rng rng(derive_seed(dropout_seed, "dropout", li));
                std::vector<std::uint8_t> mask(act.size(), 0);
                const double keep = 1.0 - lp.spec.rate;
                if (keep <= 0.0) throw ConfigError("dropout rate must be < 1");
                for (std::size_t i = 0; i < act.size(); ++i) {
                    mask[i] = rng.uniform() < keep ? 1 : 0;
                    next[i] = mask[i] ? act[i] / keep : 0.0;
                }
                if (trace) trace->dropout_mask[li] = std::move(mask);
            }
            break;
        }
        case LayerKind::Flatten:
            next = act;
            break;
        }
        act = std::move(next);
    }
    if (trace) trace->output = act;
    return act;
}

std::vector<double> backward_sample(const NetworkPlan& plan,
                                    std::span<const double> params,
                                    const ForwardTrace& trace,
                                    std::span<const double> output_cotangent,
                                    std::vector<double>* input_grad) {
    if (trace.inputs.size() != plan.layers.size())
        throw StateError("forward trace does not match network plan");
    std::vector<double> grads(plan.total_params, 0.0);
    std::vector<double> dact(output_cotangent.begin(), output_cotangent.end());
    for (std::size_t li = plan.layers.size(); li-- > 0;) {
        const LayerPlan& lp = plan.layers[li];
        const auto& in = trace.inputs[li];
        std::vector<double> din(in.size(), 0.0);
        switch (lp.spec.kind) {
        case LayerKind::Conv2D:
            conv2d_backward(lp, params, in, dact, grads, din);
            break;
        case LayerKind::Dense: {
            const std::size_t in_dim = in.size();
            const int U = lp.spec.units;
            const double* w = params.data() + lp.weight_offset;
            double* dw = grads.data() + lp.weight_offset;
            double* db = grads.data() + lp.bias_offset;
            for (int u = 0; u < U; ++u) {
                const double g = dact[static_cast<std::size_t>(u)];
                if (g == 0.0) continue;
                db[u] += g;
                const double* wu = w + static_cast<std::size_t>(u) * in_dim;
                double* dwu = dw + static_cast<std::size_t>(u) * in_dim;
                for (std::size_t i = 0; i < in_dim; ++i) {
                    dwu[i] += g * in[i];
                    din[i] += g * wu[i];
                }
            }
            break;
        }
        case LayerKind::MaxPool2D: {
            const auto& argmax = trace.maxpool_argmax[li];
            for (std::size_t o = 0; o < dact.size(); ++o)
                din[static_cast<std::size_t>(argmax[o])] += dact[o];
            break;
        }
        case LayerKind::AvgPool2D: {
            const int C = lp.in_shape[0], H = lp.in_shape[1], W = lp.in_shape[2];
            const int OH = lp.out_shape[1], OW = lp.out_shape[2];
            const int K = lp.spec.kernel, S = lp.spec.stride;
            const double inv = 1.0 / (K * K);
            for (int c = 0; c < C; ++c)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        const double g =
                            dact[(static_cast<std::size_t>(c) * OH + oy) * OW + ox] * inv;
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = oy * S + ky, ix = ox * S + kx;
                                if (iy >= H || ix >= W) continue;
                                din[(static_cast<std::size_t>(c) * H + iy) * W + ix] += g;
                            }
                    }
            break;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < in.size(); ++i)
                din[i] = in[i] > 0.0 ? dact[i] : 0.0;
            break;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < in.size(); ++i) {
                const double y = std::tanh(in[i]);
                din[i] = dact[i] * (1.0 - y * y);
            }
            break;
        case LayerKind::Softmax: {
            // recompute outputs, then J^T g = y .* (g - <g, y>)
            double mx = in[0];
            for (double v : in) mx = std::max(mx, v);
            std::vector<double> y(in.size());
            double denom = 0.0;
            for (std::size_t i = 0; i < in.size(); ++i) {
                y[i] = std::exp(in[i] - mx);
                denom += y[i];
            }
            double dot = 0.0;
            for (std::size_t i = 0; i < in.size(); ++i) {
                y[i] /= denom;
                dot += dact[i] * y[i];
            }
            for (std::size_t i = 0; i < in.size(); ++i)
                din[i] = y[i] * (dact[i] - dot);
            break;
        }
        case LayerKind::Dropout: {
            if (trace.dropout_mask[li].empty()) {
                din = dact; // inference-mode trace: identity
            } else {
                const double keep = 1.0 - lp.spec.rate;
                for (std::size_t i = 0; i < in.size(); ++i)
                    din[i] = trace.dropout_mask[li][i] ? dact[i] / keep : 0.0;
            }
            break;
        }
        case LayerKind::Flatten:
            din = dact;
            break;
        }
        dact = std::move(din);
    }
    if (input_grad) *input_grad = std::move(dact);
    return grads;
}

Tensor forward_batch(const NetworkPlan& plan, std::span<const double> params,
                     const Tensor& batch) {
    if (batch.shape.empty()) throw ShapeError("empty batch");
    const int n = batch.shape[0];
    Tensor out({n, plan.spec.num_classes});
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const auto logits =
            forward_sample(plan, params, batch.slice(i), Mode::Infer);
        std::copy(logits.begin(), logits.end(), out.slice(i).begin());
    });
    return out;
}

int argmax(std::span<const double> v) {
    if (v.empty()) throw ShapeError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

void save_checkpoint(const std::string& path, const std::string& arch_name,
                     const NetworkPlan& plan, std::span<const double> params) {
    if (params.size() != plan.total_params)
        throw ShapeError("checkpoint parameter length mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    auto write_u32 = [&out](std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    write_u32(static_cast<std::uint32_t>(arch_name.size()));
    out.write(arch_name.data(), static_cast<std::streamsize>(arch_name.size()));
    write_u32(static_cast<std::uint32_t>(plan.spec.num_classes));
    std::uint32_t tensors = 0;
    for (const auto& lp : plan.layers)
        if (lp.weight_count > 0) tensors += 2;
    write_u32(tensors);
    for (const auto& lp : plan.layers) {
        if (lp.weight_count == 0) continue;
        write_u32(1);
        write_u32(static_cast<std::uint32_t>(lp.weight_count));
        out.write(reinterpret_cast<const char*>(params.data() + lp.weight_offset),
                  static_cast<std::streamsize>(lp.weight_count * sizeof(double)));
        write_u32(1);
        write_u32(static_cast<std::uint32_t>(lp.bias_count));
        out.write(reinterpret_cast<const char*>(params.data() + lp.bias_offset),
                  static_cast<std::streamsize>(lp.bias_count * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw FormatError("bad checkpoint magic in " + path);
    auto read_u32 = [&in, &path]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw FormatError("truncated checkpoint " + path);
        return v;
    };
    Checkpoint ckpt;
    const std::uint32_t name_len = read_u32();
    ckpt.arch_name.resize(name_len);
    in.read(ckpt.arch_name.data(), name_len);
    ckpt.num_classes = static_cast<int>(read_u32());
    const std::uint32_t tensors = read_u32();
    for (std::uint32_t t = 0; t < tensors; ++t) {
        const std::uint32_t rank = read_u32();
        std::size_t count = 1;
        for (std::uint32_t r = 0; r < rank; ++r) count *= read_u32();
        const std::size_t old = ckpt.params.size();
        ckpt.params.resize(old + count);
        in.read(reinterpret_cast<char*>(ckpt.params.data() + old),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw FormatError("truncated checkpoint " + path);
    }
    return ckpt;
}

} // namespace qdistill::nn
