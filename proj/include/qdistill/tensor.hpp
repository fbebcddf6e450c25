#ifndef QDISTILL_TENSOR_HPP
#define QDISTILL_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qdistill/errors.hpp"

namespace qdistill {

// Dense row-major real array with shape metadata. `grad` is empty unless the
// tensor is a trainable parameter participating in a backward pass.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(element_count(shape), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != element_count(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " +
                             std::to_string(element_count(shape)));
    }

    static std::size_t element_count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    int dim(std::size_t axis) const { return shape.at(axis); }

    std::span<const double> view() const { return {data.data(), data.size()}; }
    std::span<double> view() { return {data.data(), data.size()}; }

    // contiguous slice along the leading axis, e.g. one sample of a batch
    std::span<const double> slice(std::size_t index) const {
        if (shape.empty() || index >= static_cast<std::size_t>(shape[0]))
            throw ShapeError("tensor slice index out of range");
        const std::size_t stride = data.size() / static_cast<std::size_t>(shape[0]);
        return {data.data() + index * stride, stride};
    }
    std::span<double> slice(std::size_t index) {
        if (shape.empty() || index >= static_cast<std::size_t>(shape[0]))
            throw ShapeError("tensor slice index out of range");
        const std::size_t stride = data.size() / static_cast<std::size_t>(shape[0]);
        return {data.data() + index * stride, stride};
    }
};

} // namespace qdistill

#endif
