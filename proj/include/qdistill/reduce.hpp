#ifndef QDISTILL_REDUCE_HPP
#define QDISTILL_REDUCE_HPP

#include <span>
#include <string>
#include <vector>

#include "qdistill/tensor.hpp"

namespace qdistill::reduce {

enum class ReducerKind { FullyConnected, CenterCrop, PCA, MaxPool, AvgPool };

ReducerKind reducer_from_string(const std::string& name);
std::string reducer_to_string(ReducerKind kind);

// --- trainable two-layer reducer -------------------------------------------

// out = W2 * tanh(W1 x + b1) + b2; parameters live in the student's flat
// vector as [W1 | b1 | W2 | b2].
struct FcReducerShape {
    int in_dim = 0;
    int hidden_dim = 0;
    int out_dim = 0;

    std::size_t param_count() const {
        return static_cast<std::size_t>(hidden_dim) * in_dim + hidden_dim +
               static_cast<std::size_t>(out_dim) * hidden_dim + out_dim;
    }
};

std::vector<double> fc_reduce(const FcReducerShape& shape,
                              std::span<const double> params,
                              std::span<const double> x,
                              std::vector<double>* hidden_cache = nullptr);

// Accumulates parameter gradients into param_grads (same layout/length as
// params) and optionally returns dL/dx.
void fc_reduce_backward(const FcReducerShape& shape, std::span<const double> params,
                        std::span<const double> x, std::span<const double> hidden,
                        std::span<const double> out_grad,
                        std::span<double> param_grads,
                        std::vector<double>* x_grad = nullptr);

std::vector<double> init_fc_reducer(const FcReducerShape& shape, std::uint64_t seed);

// --- frozen reducers --------------------------------------------------------

// Central side x side window, row-major flattened.
std::vector<double> reduce_center_crop(std::span<const double> image, int height,
                                       int width, int side);

enum class PoolMode { Max, Avg };

// Non-overlapping windows of size (H / out_side); H and W must be divisible
// by out_side (callers pad first when they are not; see pad_to_multiple).
std::vector<double> reduce_pool(std::span<const double> image, int height, int width,
                                PoolMode mode, int out_side);

// Zero-pads margins (split evenly, extra pixel at bottom/right) until both
// extents are multiples of `multiple`. Returns the padded image; new extents
// via out parameters.
std::vector<double> pad_to_multiple(std::span<const double> image, int height,
                                    int width, int multiple, int& padded_height,
                                    int& padded_width);

// Channel mean of a CxHxW image, used before spatial reducers on color data.
std::vector<double> channel_average(std::span<const double> image, int channels,
                                    int height, int width);

// --- PCA ---------------------------------------------------------------------

struct PcaBasis {
    int input_dim = 0;
    int target_dim = 0;
    int effective_rank = 0; // < target_dim when the covariance was degenerate
    std::vector<double> mean;        // input_dim
    std::vector<double> basis;       // input_dim x target_dim, column-major
    std::vector<double> eigenvalues; // target_dim, descending
    double total_variance = 0.0;     // trace of the covariance

    bool fitted() const { return input_dim > 0; }
    double discarded_variance() const;
};

// Top-target_dim eigenvectors of the population covariance of the rows of
// `train` (N x D), descending eigenvalues, sign fixed so the
// largest-magnitude component of each column is positive.
PcaBasis pca_fit(const Tensor& train, int target_dim);

std::vector<double> pca_transform(std::span<const double> image, const PcaBasis& basis);

// x_hat = B y + mean (used by reconstruction-error checks).
std::vector<double> pca_reconstruct(std::span<const double> reduced,
                                    const PcaBasis& basis);

void save_pca_basis(const std::string& path, const PcaBasis& basis);
PcaBasis load_pca_basis(const std::string& path);

// Cyclic Jacobi eigendecomposition of a dense symmetric matrix (row-major
// n x n). Returns eigenvalues descending; eigenvectors[c] is column c packed
// as eigenvectors[c * n + r]... column-major like PcaBasis::basis.
void symmetric_eigen(std::span<const double> matrix, int n,
                     std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

} // namespace qdistill::reduce

#endif
