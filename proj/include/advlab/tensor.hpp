#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advlab/errors.hpp"

namespace advlab {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major N-d array of doubles. Values are plain storage; the
// computation record lives in Graph, which references tensors by value.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        check_shape();
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

    // Value of a single-element tensor.
    double item() const {
        if (data_.size() != 1)
            throw ContractError("item: tensor has " + std::to_string(data_.size()) +
                                " elements, expected 1");
        return data_[0];
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // Copy of rows [begin, end) of a 2-D tensor.
    Tensor take_rows(int64_t begin, int64_t end) const {
        if (shape_.size() != 2 || begin < 0 || end > shape_[0] || begin >= end)
            throw ShapeError("take_rows: bad range [" + std::to_string(begin) +
                             "," + std::to_string(end) + ") on " +
                             shape_str(shape_));
        const int64_t cols = shape_[1];
        Tensor out({end - begin, cols});
        for (int64_t i = 0; i < out.size(); ++i)
            out[i] = data_[static_cast<size_t>(begin * cols + i)];
        return out;
    }

    // Whether gradients may be requested with respect to this tensor when
    // it is bound as a graph input.
    bool requires_grad = true;

    // Filled by Graph::gradient_into; always same length as data.
    std::optional<std::vector<double>> grad;

  private:
    void check_shape() const {
        for (int64_t e : shape_)
            if (e <= 0)
                throw ShapeError("tensor: non-positive extent in shape " +
                                 shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace advlab
