#include "icflow/tensor.hpp"

#include <cmath>
#include <sstream>

namespace icflow {

Index shape_numel(const Shape& s) {
    Index n = 1;
    for (Index e : s) {
        if (e <= 0) throw ShapeError("extents must be positive");
        n *= e;
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<Index>(data_.size()))
        throw ShapeError("data length does not match shape");
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
}

Tensor Tensor::randn(Shape shape, RngStream& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = rng.normal(0.0, stddev);
    return t;
}

Tensor Tensor::identity(Index n) {
    Tensor t({n, n});
    for (Index i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::check_finite(const char* context) const {
    if (!all_finite()) throw NumericError(std::string("non-finite value in ") + context);
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) throw ShapeError("reshape changes element count");
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("dot: element counts differ");
    double s = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (Index i = 0; i < a.numel(); ++i) s += pa[i] * pb[i];
    return s;
}

double cosine(const Tensor& a, const Tensor& b) {
    const double na = a.l2_norm();
    const double nb = b.l2_norm();
    if (na < 1e-12 || nb < 1e-12) throw NumericError("cosine of near-zero vector");
    return dot(a, b) / (na * nb);
}

}  // namespace icflow
