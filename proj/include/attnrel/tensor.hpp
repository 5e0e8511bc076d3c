#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace attnrel {

// Dense row-major tensor of doubles. Values are immutable once shared:
// operations return new tensors instead of mutating inputs in place.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t h, std::size_t i, std::size_t j) const {
        return data_[(h * shape_[1] + i) * shape_[2] + j];
    }
    double& operator()(std::size_t h, std::size_t i, std::size_t j) {
        return data_[(h * shape_[1] + i) * shape_[2] + j];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Matrix product. Accepts 2-D x 2-D, and broadcasts a leading batch extent:
// [h,m,k] x [h,k,n], [h,m,k] x [k,n], [m,k] x [h,k,n]. Throws RejectedInput
// on inner-extent mismatch and NumericError if the result is not finite.
Tensor matmul(const Tensor& a, const Tensor& b);

// Softmax over the last axis with max-subtraction. Each slice of the result
// is nonnegative and sums to 1.
Tensor softmax_rows(const Tensor& t);

// Swap the last two axes of a 2-D or 3-D tensor.
Tensor transpose(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);
Tensor clamp_min(const Tensor& t, double floor);

// Mean over the leading axis of a 3-D tensor: [h,s,q] -> [s,q].
Tensor mean_axis0(const Tensor& t);

double max_abs_diff(const Tensor& a, const Tensor& b);

// Central finite differences of a scalar function, (f(x+h*e)-f(x-h*e))/2h
// per element. Throws NumericError if f evaluates to a non-finite value.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x,
                   double step = 1e-5);

} // namespace attnrel
