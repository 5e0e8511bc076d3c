#include "attnrel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnrel/errors.hpp"

namespace attnrel {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw RejectedInput("tensor extents must be positive");
        n *= e;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (data.size() != shape_product(shape_))
        throw RejectedInput("tensor data length does not match shape");
    data_ = std::move(data);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void matmul_2d(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out + i * n;
        std::fill(row, row + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3)
        throw RejectedInput("matmul expects rank-2 or rank-3 operands");

    const std::size_t m = a.dim(a.rank() - 2), ka = a.dim(a.rank() - 1);
    const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (ka != kb) throw RejectedInput("matmul inner extents disagree");

    const std::size_t ha = a.rank() == 3 ? a.dim(0) : 1;
    const std::size_t hb = b.rank() == 3 ? b.dim(0) : 1;
    if (a.rank() == 3 && b.rank() == 3 && ha != hb)
        throw RejectedInput("matmul batch extents disagree");
    const std::size_t h = std::max(ha, hb);

    Tensor out(a.rank() == 2 && b.rank() == 2 ? std::vector<std::size_t>{m, n}
                                              : std::vector<std::size_t>{h, m, n});
    for (std::size_t batch = 0; batch < h; ++batch) {
        const double* ap = a.data().data() + (ha == 1 ? 0 : batch * m * ka);
        const double* bp = b.data().data() + (hb == 1 ? 0 : batch * ka * n);
        matmul_2d(ap, bp, out.data().data() + batch * m * n, m, ka, n);
    }
    if (!out.all_finite()) throw NumericError("matmul produced non-finite values");
    return out;
}

Tensor softmax_rows(const Tensor& t) {
    if (t.rank() == 0 || t.dim(t.rank() - 1) == 0)
        throw RejectedInput("softmax_rows needs a nonempty last axis");
    const std::size_t q = t.dim(t.rank() - 1);
    const std::size_t rows = t.size() / q;
    Tensor out(t.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = t.data().data() + r * q;
        double* dst = out.data().data() + r * q;
        const double mx = *std::max_element(in, in + q);
        double sum = 0.0;
        for (std::size_t j = 0; j < q; ++j) {
            dst[j] = std::exp(in[j] - mx);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < q; ++j) dst[j] /= sum;
    }
    if (!out.all_finite()) throw NumericError("softmax produced non-finite values");
    return out;
}

Tensor transpose(const Tensor& t) {
    if (t.rank() == 2) {
        Tensor out({t.dim(1), t.dim(0)});
        for (std::size_t i = 0; i < t.dim(0); ++i)
            for (std::size_t j = 0; j < t.dim(1); ++j) out(j, i) = t(i, j);
        return out;
    }
    if (t.rank() == 3) {
        Tensor out({t.dim(0), t.dim(2), t.dim(1)});
        for (std::size_t h = 0; h < t.dim(0); ++h)
            for (std::size_t i = 0; i < t.dim(1); ++i)
                for (std::size_t j = 0; j < t.dim(2); ++j) out(h, j, i) = t(h, i, j);
        return out;
    }
    throw RejectedInput("transpose expects rank-2 or rank-3 tensors");
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw RejectedInput(std::string(op) + ": shapes disagree");
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& t, double factor) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] * factor;
    return out;
}

Tensor clamp_min(const Tensor& t, double floor) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::max(t[i], floor);
    return out;
}

Tensor mean_axis0(const Tensor& t) {
    if (t.rank() != 3) throw RejectedInput("mean_axis0 expects a rank-3 tensor");
    const std::size_t h = t.dim(0), rest = t.dim(1) * t.dim(2);
    Tensor out({t.dim(1), t.dim(2)});
    for (std::size_t b = 0; b < h; ++b)
        for (std::size_t i = 0; i < rest; ++i) out[i] += t[b * rest + i];
    for (std::size_t i = 0; i < rest; ++i) out[i] /= static_cast<double>(h);
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
    if (step <= 0.0) throw RejectedInput("finite_diff step must be positive");
    Tensor grad(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        const double up = f(probe);
        probe[i] = saved - step;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("finite_diff: function value is not finite");
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

} // namespace attnrel
