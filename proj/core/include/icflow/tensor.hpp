#ifndef ICFLOW_TENSOR_HPP
#define ICFLOW_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "icflow/errors.hpp"
#include "icflow/rng.hpp"

namespace icflow {

using Index = std::int64_t;
using Shape = std::vector<Index>;

// Dense row-major real array. Values are doubles; parameter tensors are kept
// on the f32 grid (see ParamStore) so checkpoints round-trip bit-exactly.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor from(Shape shape, std::initializer_list<double> values);
    static Tensor randn(Shape shape, RngStream& rng, double stddev = 1.0);
    static Tensor identity(Index n);

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index numel() const { return static_cast<Index>(data_.size()); }
    Index extent(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& at(Index i) { return data_[static_cast<std::size_t>(i)]; }
    double at(Index i) const { return data_[static_cast<std::size_t>(i)]; }
    // 2D access, row-major
    double& at(Index r, Index c) { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    double at(Index r, Index c) const { return data_[static_cast<std::size_t>(r * shape_[1] + c)]; }
    // 3D access (c, h, w)
    double& at(Index c, Index h, Index w) {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }
    double at(Index c, Index h, Index w) const {
        return data_[static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w)];
    }

    Index rows() const { return shape_[0]; }
    Index cols() const { return shape_[1]; }

    double max_abs() const;
    double l2_norm() const;
    bool all_finite() const;
    // throws NumericError naming `context` if any entry is NaN/Inf
    void check_finite(const char* context) const;

    Tensor reshaped(Shape new_shape) const;

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    std::string shape_str() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

Index shape_numel(const Shape& s);

// exact dot / norms on raw vectors, fixed accumulation order
double dot(const Tensor& a, const Tensor& b);
double cosine(const Tensor& a, const Tensor& b);

}  // namespace icflow

#endif
