#include <doctest.h>

#include <cmath>

#include "attnrel/errors.hpp"
#include "attnrel/rng.hpp"
#include "attnrel/tensor.hpp"
#include "support/util.hpp"

using namespace attnrel;

TEST_CASE("matmul identity leaves the operand unchanged") {
    Rng rng(11);
    const Tensor m = testutil::random_tensor(rng, {3, 3});
    const Tensor out = matmul(Tensor::identity(3), m);
    CHECK(max_abs_diff(out, m) == 0.0);
}

TEST_CASE("matmul matches a hand product") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 2}, {0, 1, 1, 0});
    const Tensor out = matmul(a, b);
    CHECK(out(0, 0) == 2);
    CHECK(out(0, 1) == 1);
    CHECK(out(1, 0) == 4);
    CHECK(out(1, 1) == 3);
}

TEST_CASE("matmul by zero gives zero") {
    Rng rng(12);
    const Tensor m = testutil::random_tensor(rng, {3, 4});
    const Tensor out = matmul(Tensor::zeros({2, 3}), m);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("matmul rejects mismatched inner extents") {
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), RejectedInput);
}

TEST_CASE("matmul broadcasts a leading heads extent") {
    Rng rng(13);
    const Tensor a = testutil::random_tensor(rng, {2, 3, 4});
    const Tensor b = testutil::random_tensor(rng, {4, 5});
    const Tensor out = matmul(a, b);
    REQUIRE(out.shape() == std::vector<std::size_t>{2, 3, 5});
    for (std::size_t h = 0; h < 2; ++h) {
        Tensor ah({3, 4});
        for (std::size_t i = 0; i < 12; ++i) ah[i] = a[h * 12 + i];
        const Tensor expect = matmul(ah, b);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                CHECK(out(h, i, j) == doctest::Approx(expect(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(14);
    for (int trial = 0; trial < 25; ++trial) {
        const Tensor a = testutil::random_tensor(rng, {4, 4});
        const Tensor b = testutil::random_tensor(rng, {4, 4});
        const Tensor c = testutil::random_tensor(rng, {4, 4});
        CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-10);
    }
}

TEST_CASE("softmax of a zero row is uniform") {
    const Tensor out = softmax_rows(Tensor::zeros({4}));
    for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("softmax closed form") {
    const Tensor out = softmax_rows(Tensor({2}, {0.0, std::log(3.0)}));
    CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant and row-stochastic") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = testutil::random_tensor(rng, {3, 5}, -30.0, 30.0);
        Tensor shifted = x;
        const double c = rng.uniform(-100.0, 100.0);
        for (std::size_t j = 0; j < 5; ++j) shifted(1, j) += c;
        const Tensor a = softmax_rows(x);
        const Tensor b = softmax_rows(shifted);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(std::abs(a(1, j) - b(1, j)) < 1e-12);
        for (std::size_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(a(r, j) >= 0.0);
                CHECK(a(r, j) <= 1.0);
                sum += a(r, j);
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("softmax rejects an empty tensor") {
    CHECK_THROWS_AS(softmax_rows(Tensor()), RejectedInput);
}

TEST_CASE("finite_diff of a sum is all ones") {
    Rng rng(16);
    const Tensor x = testutil::random_tensor(rng, {2, 3});
    const Tensor grad = finite_diff(
        [](const Tensor& t) {
            double s = 0.0;
            for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
            return s;
        },
        x);
    for (std::size_t i = 0; i < grad.size(); ++i)
        CHECK(grad[i] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("finite_diff of x^2 at 3 is 6") {
    const Tensor x({1}, {3.0});
    const Tensor grad = finite_diff([](const Tensor& t) { return t[0] * t[0]; }, x);
    CHECK(std::abs(grad[0] - 6.0) < 1e-6);
}

TEST_CASE("finite_diff matches the softmax jacobian row") {
    Rng rng(17);
    const Tensor x = testutil::random_tensor(rng, {4});
    const Tensor y = softmax_rows(x);
    for (std::size_t out = 0; out < 4; ++out) {
        const Tensor grad =
            finite_diff([out](const Tensor& t) { return softmax_rows(t)[out]; }, x);
        for (std::size_t j = 0; j < 4; ++j) {
            const double expect = y[out] * ((out == j ? 1.0 : 0.0) - y[j]);
            CHECK(grad[j] == doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("finite_diff reports non-finite function values") {
    const Tensor x({1}, {0.0});
    CHECK_THROWS_AS(
        finite_diff([](const Tensor& t) { return 1.0 / t[0]; }, x, 0.0),
        RejectedInput);
    CHECK_THROWS_AS(finite_diff([](const Tensor&) { return std::nan(""); }, x), NumericError);
}
