#include "qdistill/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "qdistill/rng.hpp"

namespace qdistill::reduce {

namespace {
const char kPcaMagic[8] = {'Q', 'D', 'P', 'C', 'A', '0', '1', '\0'};
constexpr double kRankEpsilon = 1e-12;
} // namespace

ReducerKind reducer_from_string(const std::string& name) {
    if (name == "fc") return ReducerKind::FullyConnected;
    if (name == "crop") return ReducerKind::CenterCrop;
    if (name == "pca") return ReducerKind::PCA;
    if (name == "maxpool") return ReducerKind::MaxPool;
    if (name == "avgpool") return ReducerKind::AvgPool;
    throw ConfigError("unknown reducer '" + name +
                      "' (expected fc|crop|pca|maxpool|avgpool)");
}

std::string reducer_to_string(ReducerKind kind) {
    switch (kind) {
    case ReducerKind::FullyConnected: return "fc";
    case ReducerKind::CenterCrop: return "crop";
    case ReducerKind::PCA: return "pca";
    case ReducerKind::MaxPool: return "maxpool";
    case ReducerKind::AvgPool: return "avgpool";
    }
    return "?";
}

std::vector<double> fc_reduce(const FcReducerShape& shape,
                              std::span<const double> params,
                              std::span<const double> x,
                              std::vector<double>* hidden_cache) {
    if (params.size() != shape.param_count())
        throw ShapeError("fc reducer parameter length mismatch");
    if (x.size() != static_cast<std::size_t>(shape.in_dim))
        throw ShapeError("fc reducer input length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(shape.in_dim));
    const std::size_t in = static_cast<std::size_t>(shape.in_dim);
    const std::size_t hid = static_cast<std::size_t>(shape.hidden_dim);
    const std::size_t outd = static_cast<std::size_t>(shape.out_dim);
    const double* w1 = params.data();
    const double* b1 = w1 + hid * in;
    const double* w2 = b1 + hid;
    const double* b2 = w2 + outd * hid;

    std::vector<double> hidden(hid);
    for (std::size_t h = 0; h < hid; ++h) {
        double acc = b1[h];
        const double* row = w1 + h * in;
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        hidden[h] = std::tanh(acc);
    }
    std::vector<double> out(outd);
    for (std::size_t o = 0; o < outd; ++o) {
        double acc = b2[o];
        const double* row = w2 + o * hid;
        for (std::size_t h = 0; h < hid; ++h) acc += row[h] * hidden[h];
        out[o] = acc;
    }
    if (hidden_cache) *hidden_cache = std::move(hidden);
    return out;
}

void fc_reduce_backward(const FcReducerShape& shape, std::span<const double> params,
                        std::span<const double> x, std::span<const double> hidden,
                        std::span<const double> out_grad,
                        std::span<double> param_grads, std::vector<double>* x_grad) {
    if (param_grads.size() != shape.param_count())
        throw ShapeError("fc reducer gradient length mismatch");
    const std::size_t in = static_cast<std::size_t>(shape.in_dim);
    const std::size_t hid = static_cast<std::size_t>(shape.hidden_dim);
    const std::size_t outd = static_cast<std::size_t>(shape.out_dim);
    const double* w1 = params.data();
    const double* w2 = params.data() + hid * in + hid;
    double* dw1 = param_grads.data();
    double* db1 = dw1 + hid * in;
    double* dw2 = db1 + hid;
    double* db2 = dw2 + outd * hid;

    std::vector<double> dhidden(hid, 0.0);
    for (std::size_t o = 0; o < outd; ++o) {
        const double g = out_grad[o];
        if (g == 0.0) continue;
        db2[o] += g;
        const double* row = w2 + o * hid;
        double* drow = dw2 + o * hid;
        for (std::size_t h = 0; h < hid; ++h) {
            drow[h] += g * hidden[h];
            dhidden[h] += g * row[h];
        }
    }
    if (x_grad) x_grad->assign(in, 0.0);
    for (std::size_t h = 0; h < hid; ++h) {
        const double dpre = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
        if (dpre == 0.0) continue;
        db1[h] += dpre;
        const double* row = w1 + h * in;
        double* drow = dw1 + h * in;
        for (std::size_t i = 0; i < in; ++i) {
            drow[i] += dpre * x[i];
            if (x_grad) (*x_grad)[i] += dpre * row[i];
        }
    }
}

std::vector<double> init_fc_reducer(const FcReducerShape& shape, std::uint64_t seed) {
    std::vector<double> params(shape.param_count(), 0.0);
    Rng rng(derive_seed(seed, "fc-reducer-init"));
    const std::size_t in = static_cast<std::size_t>(shape.in_dim);
    const std::size_t hid = static_cast<std::size_t>(shape.hidden_dim);
    const std::size_t outd = static_cast<std::size_t>(shape.out_dim);
    const double bound1 = std::sqrt(6.0 / (shape.in_dim + shape.hidden_dim));
    for (std::size_t i = 0; i < hid * in; ++i) params[i] = rng.uniform(-bound1, bound1);
    const double bound2 = std::sqrt(6.0 / (shape.hidden_dim + shape.out_dim));
    const std::size_t w2_off = hid * in + hid;
    for (std::size_t i = 0; i < outd * hid; ++i)
        params[w2_off + i] = rng.uniform(-bound2, bound2);
    return params;
}

std::vector<double> reduce_center_crop(std::span<const double> image, int height,
                                       int width, int side) {
    if (side < 1 || side > height || side > width)
        throw ShapeError("crop side " + std::to_string(side) + " does not fit " +
                         std::to_string(height) + "x" + std::to_string(width));
    if (image.size() != static_cast<std::size_t>(height) * width)
        throw ShapeError("image length does not match extents");
    const int y0 = (height - side) / 2;
    const int x0 = (width - side) / 2;
    std::vector<double> out(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            out[static_cast<std::size_t>(y) * side + x] =
                image[static_cast<std::size_t>(y0 + y) * width + (x0 + x)];
    return out;
}

std::vector<double> reduce_pool(std::span<const double> image, int height, int width,
                                PoolMode mode, int out_side) {
    if (out_side < 1) throw ShapeError("pool output side must be >= 1");
    if (height % out_side != 0 || width % out_side != 0)
        throw ShapeError("pooling needs extents divisible by output side; got " +
                         std::to_string(height) + "x" + std::to_string(width) +
                         " for side " + std::to_string(out_side));
    if (image.size() != static_cast<std::size_t>(height) * width)
        throw ShapeError("image length does not match extents");
    const int wy = height / out_side;
    const int wx = width / out_side;
    std::vector<double> out(static_cast<std::size_t>(out_side) * out_side);
    for (int oy = 0; oy < out_side; ++oy) {
        for (int ox = 0; ox < out_side; ++ox) {
            double acc = mode == PoolMode::Max ? -1e300 : 0.0;
            for (int y = oy * wy; y < (oy + 1) * wy; ++y)
                for (int x = ox * wx; x < (ox + 1) * wx; ++x) {
                    const double v = image[static_cast<std::size_t>(y) * width + x];
                    if (mode == PoolMode::Max)
                        acc = std::max(acc, v);
                    else
                        acc += v;
                }
            out[static_cast<std::size_t>(oy) * out_side + ox] =
                mode == PoolMode::Max ? acc : acc / (wy * wx);
        }
    }
    return out;
}

std::vector<double> pad_to_multiple(std::span<const double> image, int height,
                                    int width, int multiple, int& padded_height,
                                    int& padded_width) {
    if (multiple < 1) throw ShapeError("pad multiple must be >= 1");
    padded_height = ((height + multiple - 1) / multiple) * multiple;
    padded_width = ((width + multiple - 1) / multiple) * multiple;
    if (padded_height == height && padded_width == width)
        return std::vector<double>(image.begin(), image.end());
    const int top = (padded_height - height) / 2;
    const int left = (padded_width - width) / 2;
    std::vector<double> out(static_cast<std::size_t>(padded_height) * padded_width, 0.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out[static_cast<std::size_t>(y + top) * padded_width + (x + left)] =
                image[static_cast<std::size_t>(y) * width + x];
    return out;
}

std::vector<double> channel_average(std::span<const double> image, int channels,
                                    int height, int width) {
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    if (image.size() != hw * static_cast<std::size_t>(channels))
        throw ShapeError("image length does not match CxHxW");
    std::vector<double> out(hw, 0.0);
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out[i] += image[static_cast<std::size_t>(c) * hw + i];
    for (auto& v : out) v /= channels;
    return out;
}

double PcaBasis::discarded_variance() const {
    double kept = 0.0;
    for (double ev : eigenvalues) kept += ev;
    return std::max(0.0, total_variance - kept);
}

void symmetric_eigen(std::span<const double> matrix, int n,
                     std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
    if (matrix.size() != static_cast<std::size_t>(n) * n)
        throw ShapeError("matrix length does not match n x n");
    std::vector<double> a(matrix.begin(), matrix.end());
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto at = [&a, n](int r, int c) -> double& {
        return a[static_cast<std::size_t>(r) * n + c];
    };
    auto vt = [&v, n](int r, int c) -> double& {
        return v[static_cast<std::size_t>(r) * n + c];
    };

    constexpr int kMaxSweeps = 64;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (int r = 0; r < n; ++r)
            for (int c = r + 1; c < n; ++c) off += at(r, c) * at(r, c);
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vt(k, p), vkq = vt(k, q);
                    vt(k, p) = c * vkp - s * vkq;
                    vt(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) diag[static_cast<std::size_t>(i)] = at(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&diag](int x, int y) { return diag[static_cast<std::size_t>(x)] > diag[static_cast<std::size_t>(y)]; });

    eigenvalues.assign(static_cast<std::size_t>(n), 0.0);
    eigenvectors.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int c = 0; c < n; ++c) {
        const int src = order[static_cast<std::size_t>(c)];
        eigenvalues[static_cast<std::size_t>(c)] = diag[static_cast<std::size_t>(src)];
        for (int r = 0; r < n; ++r)
            eigenvectors[static_cast<std::size_t>(c) * n + r] = vt(r, src);
    }
}

PcaBasis pca_fit(const Tensor& train, int target_dim) {
    if (train.shape.size() != 2)
        throw ShapeError("pca_fit expects an N x D tensor");
    const int n = train.shape[0];
    const int d = train.shape[1];
    if (target_dim < 1 || target_dim > d)
        throw ShapeError("target_dim must be in [1, D]");
    if (n <= target_dim)
        throw ConfigError("pca_fit needs more samples than target dimensions");

    PcaBasis out;
    out.input_dim = d;
    out.target_dim = target_dim;
    out.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto row = train.slice(static_cast<std::size_t>(i));
        for (int j = 0; j < d; ++j) out.mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    }
    for (auto& m : out.mean) m /= n;

    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> centered(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        const auto row = train.slice(static_cast<std::size_t>(i));
        for (int j = 0; j < d; ++j)
            centered[static_cast<std::size_t>(j)] = row[static_cast<std::size_t>(j)] - out.mean[static_cast<std::size_t>(j)];
        for (int r = 0; r < d; ++r) {
            const double cr = centered[static_cast<std::size_t>(r)];
            if (cr == 0.0) continue;
            double* covr = cov.data() + static_cast<std::size_t>(r) * d;
            for (int c = r; c < d; ++c) covr[c] += cr * centered[static_cast<std::size_t>(c)];
        }
    }
    for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) {
            const double val = cov[static_cast<std::size_t>(r) * d + c] / n;
            cov[static_cast<std::size_t>(r) * d + c] = val;
            cov[static_cast<std::size_t>(c) * d + r] = val;
        }
    for (int j = 0; j < d; ++j) out.total_variance += cov[static_cast<std::size_t>(j) * d + j];

    std::vector<double> evals, evecs;
    symmetric_eigen(cov, d, evals, evecs);

    const double scale = std::max(std::fabs(evals.front()), 1.0);
    out.eigenvalues.assign(static_cast<std::size_t>(target_dim), 0.0);
    out.basis.assign(static_cast<std::size_t>(d) * target_dim, 0.0);
    out.effective_rank = 0;
    for (int c = 0; c < target_dim; ++c) {
        const double ev = evals[static_cast<std::size_t>(c)];
        if (ev <= scale * kRankEpsilon) break; // remaining columns stay zero
        out.eigenvalues[static_cast<std::size_t>(c)] = ev;
        // sign convention: largest-magnitude component positive
        int arg = 0;
        double best = 0.0;
        for (int r = 0; r < d; ++r) {
            const double mag = std::fabs(evecs[static_cast<std::size_t>(c) * d + r]);
            if (mag > best) {
                best = mag;
                arg = r;
            }
        }
        const double sign = evecs[static_cast<std::size_t>(c) * d + arg] < 0.0 ? -1.0 : 1.0;
        for (int r = 0; r < d; ++r)
            out.basis[static_cast<std::size_t>(c) * d + r] =
                sign * evecs[static_cast<std::size_t>(c) * d + r];
        out.effective_rank = c + 1;
    }
    return out;
}

std::vector<double> pca_transform(std::span<const double> image, const PcaBasis& basis) {
    if (!basis.fitted()) throw StateError("pca_transform called before pca_fit");
    if (image.size() != static_cast<std::size_t>(basis.input_dim))
        throw ShapeError("pca_transform input length mismatch");
    std::vector<double> out(static_cast<std::size_t>(basis.target_dim), 0.0);
    for (int c = 0; c < basis.target_dim; ++c) {
        const double* col = basis.basis.data() + static_cast<std::size_t>(c) * basis.input_dim;
        double acc = 0.0;
        for (int r = 0; r < basis.input_dim; ++r)
            acc += col[r] * (image[static_cast<std::size_t>(r)] - basis.mean[static_cast<std::size_t>(r)]);
        out[static_cast<std::size_t>(c)] = acc;
    }
    return out;
}

std::vector<double> pca_reconstruct(std::span<const double> reduced,
                                    const PcaBasis& basis) {
    if (!basis.fitted()) throw StateError("pca_reconstruct called before pca_fit");
    if (reduced.size() != static_cast<std::size_t>(basis.target_dim))
        throw ShapeError("pca_reconstruct input length mismatch");
    std::vector<double> out(basis.mean.begin(), basis.mean.end());
    for (int c = 0; c < basis.target_dim; ++c) {
        const double y = reduced[static_cast<std::size_t>(c)];
        if (y == 0.0) continue;
        const double* col = basis.basis.data() + static_cast<std::size_t>(c) * basis.input_dim;
        for (int r = 0; r < basis.input_dim; ++r) out[static_cast<std::size_t>(r)] += y * col[r];
    }
    return out;
}

void save_pca_basis(const std::string& path, const PcaBasis& basis) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write pca basis " + path);
    out.write(kPcaMagic, sizeof(kPcaMagic));
    auto write_u32 = [&out](std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    write_u32(static_cast<std::uint32_t>(basis.input_dim));
    write_u32(static_cast<std::uint32_t>(basis.target_dim));
    write_u32(static_cast<std::uint32_t>(basis.effective_rank));
    out.write(reinterpret_cast<const char*>(&basis.total_variance), sizeof(double));
    auto write_vec = [&out](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    write_vec(basis.mean);
    write_vec(basis.basis);
    write_vec(basis.eigenvalues);
    if (!out) throw IoError("failed writing pca basis " + path);
}

PcaBasis load_pca_basis(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pca basis " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kPcaMagic, sizeof(magic)) != 0)
        throw FormatError("bad pca basis magic in " + path);
    auto read_u32 = [&in, &path]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw FormatError("truncated pca basis " + path);
        return v;
    };
    PcaBasis basis;
    basis.input_dim = static_cast<int>(read_u32());
    basis.target_dim = static_cast<int>(read_u32());
    basis.effective_rank = static_cast<int>(read_u32());
    in.read(reinterpret_cast<char*>(&basis.total_variance), sizeof(double));
    auto read_vec = [&in, &path](std::vector<double>& v, std::size_t count) {
        v.resize(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw FormatError("truncated pca basis " + path);
    };
    read_vec(basis.mean, static_cast<std::size_t>(basis.input_dim));
    read_vec(basis.basis,
             static_cast<std::size_t>(basis.input_dim) * basis.target_dim);
    read_vec(basis.eigenvalues, static_cast<std::size_t>(basis.target_dim));
    return basis;
}

} // namespace qdistill::reduce
