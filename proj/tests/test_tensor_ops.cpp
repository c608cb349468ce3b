// test_tensor_ops.cpp
// Tensor plumbing and the differentiable primitives, checked against
// independent oracles (direct-summation conv, adjoint identity, finite
// differences).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hf/gradcheck.hpp"
#include "hf/ops.hpp"
#include "hf/rng.hpp"
#include "hf/tensor.hpp"

using namespace hf;
using Tf = Tensor<float>;
using Td = Tensor<double>;

namespace {

Tf rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tf t = Tf::zeros(std::move(s));
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Quadruple-loop direct-summation convolution, kept independent of the
// GEMM path it checks.
std::vector<float> conv2d_oracle(const Tf& x, const Tf& w, const Tf& b, int stride, int pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const int Cout = ws[0], kh = ws[2], kw = ws[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<float> y(static_cast<std::size_t>(N) * Cout * Ho * Wo, 0.f);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    double acc = b.at({co});
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int ih = ho * stride - pad + ki;
                                const int iw = wo * stride - pad + kj;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += static_cast<double>(x.at({n, ci, ih, iw})) *
                                       static_cast<double>(w.at({co, ci, ki, kj}));
                            }
                    y[((static_cast<std::size_t>(n) * Cout + co) * Ho + ho) * Wo + wo] =
                        static_cast<float>(acc);
                }
    return y;
}

double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

}  // namespace

TEST_CASE("tensor basics and shape validation") {
    Tf t = Tf::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 6.f);
    CHECK_THROWS_AS(Tf::from_data({2, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(t.item(), std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones, unrelated leaf stays zero") {
    Tf x = Tf::from_data({2, 2}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tf y = Tf::from_data({2, 2}, {5, 5, 5, 5});
    y.set_requires_grad(true);
    Tf loss = sum(x);
    backward(loss);
    for (float g : x.grad()) CHECK(g == 1.0f);
    for (float g : y.grad_or_zeros()) CHECK(g == 0.0f);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tf x = Tf::from_data({2}, {1, 2});
    x.set_requires_grad(true);
    CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);
}

TEST_CASE("detach: values equal, upstream gradient exactly zero") {
    Rng rng(3);
    Tf x = rand_tensor({3, 3}, rng);
    x.set_requires_grad(true);
    Tf w = rand_tensor({3, 3}, rng);
    w.set_requires_grad(true);
    Tf d = x.detach();
    for (std::size_t i = 0; i < d.values().size(); ++i) CHECK(d.values()[i] == x.values()[i]);

    Tf loss = sum(mul(d, w));
    backward(loss);
    CHECK(!x.has_grad());
    for (float g : x.grad_or_zeros()) CHECK(g == 0.0f);
    bool any = false;
    for (float g : w.grad()) any = any || g != 0.0f;
    CHECK(any);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
    Tf x = Tf::from_data({2}, {1, 2});
    x.set_requires_grad(true);
    backward(sum(x));
    backward(sum(x));
    for (float g : x.grad()) CHECK(g == 2.0f);
}

TEST_CASE("conv2d trivial cases") {
    // all-ones 3x3 input, all-ones 2x2 kernel -> 2x2 of 4
    Tf x = Tf::full({1, 1, 3, 3}, 1.f);
    Tf w = Tf::full({1, 1, 2, 2}, 1.f);
    Tf b = Tf::zeros({1});
    Tf y = conv2d(x, w, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    for (float v : y.values()) CHECK(v == doctest::Approx(4.0f));

    // all-zero kernel -> bias-only output
    Rng rng(7);
    Tf x2 = rand_tensor({2, 3, 5, 5}, rng);
    Tf w2 = Tf::zeros({4, 3, 3, 3});
    Tf b2 = Tf::from_data({4}, {0.5f, -1.f, 0.f, 2.f});
    Tf y2 = conv2d(x2, w2, b2, 1, 1);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j)
                    CHECK(y2.at({n, c, i, j}) == doctest::Approx(b2.at({c})));
}

TEST_CASE("conv2d shape errors name both shapes") {
    Tf x = Tf::zeros({1, 2, 4, 4});
    Tf w = Tf::zeros({3, 5, 3, 3});
    Tf b = Tf::zeros({3});
    try {
        conv2d(x, w, b, 1, 1);
        FAIL("expected shape rejection");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(1,2,4,4)") != std::string::npos);
        CHECK(msg.find("(3,5,3,3)") != std::string::npos);
    }
}

TEST_CASE("conv2d agrees with direct-summation oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        Tf x = rand_tensor({1, 2, 4, 4}, rng);
        Tf w = rand_tensor({3, 2, 2, 2}, rng);
        Tf b = rand_tensor({3}, rng);
        const int stride = 1 + trial % 2;
        const int pad = trial % 3 == 0 ? 1 : 0;
        Tf y = conv2d(x, w, b, stride, pad);
        auto ref = conv2d_oracle(x, w, b, stride, pad);
        REQUIRE(y.values().size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(std::abs(y.values()[i] - ref[i]) < 1e-6);
    }
}

TEST_CASE("conv_transpose2d trivial cases") {
    // all-ones 2x2 input, 2x2 kernel, stride 2 -> disjoint tiles, all ones
    Tf x = Tf::full({1, 1, 2, 2}, 1.f);
    Tf w = Tf::full({1, 1, 2, 2}, 1.f);
    Tf b = Tf::zeros({1});
    Tf y = conv_transpose2d(x, w, b, 2);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    for (float v : y.values()) CHECK(v == doctest::Approx(1.0f));

    // zero input -> bias broadcast
    Tf x2 = Tf::zeros({1, 2, 3, 3});
    Rng rng(5);
    Tf w2 = rand_tensor({2, 3, 2, 2}, rng);
    Tf b2 = Tf::from_data({3}, {1.f, -2.f, 0.25f});
    Tf y2 = conv_transpose2d(x2, w2, b2, 2);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) CHECK(y2.at({0, c, i, j}) == doctest::Approx(b2.at({c})));
}

TEST_CASE("adjoint identity between conv2d and conv_transpose2d over random shapes") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const int cin = 1 + static_cast<int>(rng.uniform_int(3));
        const int cout = 1 + static_cast<int>(rng.uniform_int(3));
        const int k = 2 + static_cast<int>(rng.uniform_int(2));
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int h = k + static_cast<int>(rng.uniform_int(5));
        const int wdim = k + static_cast<int>(rng.uniform_int(5));
        Tf x = rand_tensor({1, cin, h, wdim}, rng);
        Tf w = rand_tensor({cout, cin, k, k}, rng);
        Tf zero_co = Tf::zeros({cout});
        Tf zero_ci = Tf::zeros({cin});

        Tf cx = conv2d(x, w, zero_co, stride, 0);
        Tf y = rand_tensor(cx.shape(), rng);
        // conv_transpose2d reads the same kernel as [C1=cout, C2=cin, kh, kw]
        Tf ty = conv_transpose2d(y, w, zero_ci, stride);
        const int OH = ty.shape()[2], OW = ty.shape()[3];
        REQUIRE(OH <= h);
        REQUIRE(OW <= wdim);
        // The transpose output is (Ho-1)*s + k <= H: input rows past it never
        // reach a conv window, so they pair with zero.
        std::vector<float> ty_big(x.values().size(), 0.f);
        for (int c = 0; c < cin; ++c)
            for (int i = 0; i < OH; ++i)
                for (int j = 0; j < OW; ++j)
                    ty_big[(static_cast<std::size_t>(c) * h + i) * wdim + j] =
                        ty.at({0, c, i, j});
        const double lhs = dot(cx.values(), y.values());
        const double rhs = dot(x.values(), ty_big);
        CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max({1.0, std::abs(lhs), std::abs(rhs)}));
    }
}

TEST_CASE("maxpool2x2: values, tie rule, odd-dim rejection") {
    Tf x = Tf::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tf y = maxpool2x2(x);
    CHECK(y.item() == 4.0f);
    backward(sum(y));
    CHECK(x.grad() == std::vector<float>{0, 0, 0, 1});

    // constant input: gradient lands on index 0 of each window
    Tf c = Tf::full({1, 1, 4, 4}, 0.75f);
    c.set_requires_grad(true);
    Tf yc = maxpool2x2(c);
    for (float v : yc.values()) CHECK(v == 0.75f);
    backward(sum(yc));
    const std::vector<float> expect = {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    CHECK(c.grad() == expect);

    CHECK_THROWS_AS(maxpool2x2(Tf::zeros({1, 1, 3, 4})), std::invalid_argument);
}

TEST_CASE("upsample_nearest2x: replication, backward sums blocks, pool composition") {
    Tf x = Tf::from_data({1, 1, 1, 1}, {5.f});
    x.set_requires_grad(true);
    Tf y = upsample_nearest2x(x);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    for (float v : y.values()) CHECK(v == 5.0f);
    backward(sum(y));
    CHECK(x.grad()[0] == 4.0f);

    // compose with maxpool: identity on block-constant inputs
    Rng rng(17);
    Tf base = rand_tensor({1, 2, 3, 3}, rng);
    Tf up = upsample_nearest2x(base);
    Tf down = maxpool2x2(up);
    for (std::size_t i = 0; i < base.values().size(); ++i)
        CHECK(down.values()[i] == base.values()[i]);
}

TEST_CASE("pointwise relu and sigmoid") {
    Tf x = Tf::from_data({4}, {-1.f, 2.f, 0.f, -3.f});
    Tf r = pointwise(Pointwise::relu, x);
    CHECK(r.values() == std::vector<float>{0, 2, 0, 0});

    Tf z = Tf::from_data({1}, {0.f});
    z.set_requires_grad(true);
    Tf s = pointwise(Pointwise::sigmoid, z);
    CHECK(s.item() == doctest::Approx(0.5f));
    backward(sum(s));
    CHECK(z.grad()[0] == doctest::Approx(0.25f));  // sigma(1-sigma) at 0
}

TEST_CASE("concat then slice returns the originals; dim mismatch rejected") {
    Rng rng(23);
    Tf a = rand_tensor({1, 2, 4, 4}, rng);
    Tf b = rand_tensor({1, 3, 4, 4}, rng);
    Tf cat = concat_channels(a, b);
    CHECK(cat.shape() == Shape{1, 5, 4, 4});
    Tf a2 = slice_channels(cat, 0, 2);
    Tf b2 = slice_channels(cat, 2, 5);
    CHECK(a2.values() == a.values());
    CHECK(b2.values() == b.values());
    CHECK_THROWS_AS(concat_channels(a, Tf::zeros({1, 3, 2, 4})), std::invalid_argument);
}

TEST_CASE("scalar_loss: l1 and bce closed forms") {
    Tf p = Tf::from_data({2}, {0.5f, 0.5f});
    Tf t = Tf::from_data({2}, {0.0f, 1.0f});
    CHECK(scalar_loss(LossKind::l1, p, t).item() == doctest::Approx(0.5f));

    Tf same = Tf::from_data({3}, {0.1f, 0.2f, 0.3f});
    CHECK(scalar_loss(LossKind::l1, same, same).item() == 0.0f);

    // bce(0.5, any binary target) = ln 2
    Tf half = Tf::full({8}, 0.5f);
    Tf bin = Tf::from_data({8}, {0, 1, 1, 0, 1, 0, 0, 1});
    CHECK(std::abs(scalar_loss(LossKind::bce, half, bin).item() - std::log(2.0)) < 1e-6);

    CHECK_THROWS_AS(scalar_loss(LossKind::l1, p, Tf::zeros({3})), std::invalid_argument);
}

TEST_CASE("finite-difference ladder passes at f32") {
    for (const auto& e : gradcheck_suite<float>(1e-3, 1e-3)) {
        INFO(e.name, " err=", e.max_rel_err);
        CHECK(e.max_rel_err < e.threshold);
    }
}

TEST_CASE("tight finite-difference checks at f64") {
    // closed-form sigma(1-sigma) comparison is part of the suite; the f64 run
    // bounds everything much tighter
    for (const auto& e : gradcheck_suite<double>(1e-5, 1e-6)) {
        INFO(e.name, " err=", e.max_rel_err);
        CHECK(e.max_rel_err < 1e-6);
    }
    CHECK(micro_network_check<double>(1e-5) < 1e-6);
    CHECK(micro_network_check<float>(1e-3) < 1e-3);
}

TEST_CASE("no primitive produces NaN/Inf on inputs within [-10,10]") {
    Rng rng(29);
    finite_checks() = true;
    for (int trial = 0; trial < 10; ++trial) {
        Tf x = rand_tensor({2, 2, 8, 8}, rng, -10, 10);
        Tf w = rand_tensor({3, 2, 3, 3}, rng, -10, 10);
        Tf b = rand_tensor({3}, rng, -10, 10);
        Tf wt = rand_tensor({2, 3, 2, 2}, rng, -10, 10);
        Tf bt = rand_tensor({3}, rng, -10, 10);
        CHECK(all_finite(conv2d(x, w, b, 1, 1)));
        CHECK(all_finite(conv_transpose2d(x, wt, bt, 2)));
        CHECK(all_finite(maxpool2x2(x)));
        CHECK(all_finite(upsample_nearest2x(x)));
        CHECK(all_finite(relu(x)));
        CHECK(all_finite(sigmoid(x)));
        CHECK(all_finite(l1_loss(x, rand_tensor({2, 2, 8, 8}, rng, -10, 10))));
        Tf pr = rand_tensor({16}, rng, -10, 10);
        Tf tg = rand_tensor({16}, rng, 0, 1);
        CHECK(all_finite(bce_loss(pr, tg)));  // clamp keeps logs finite
    }
    finite_checks() = false;
}

TEST_CASE("forward/backward bitwise reproducible") {
    auto run = [] {
        Rng rng(31);
        Tf x = rand_tensor({2, 2, 8, 8}, rng);
        Tf w = rand_tensor({4, 2, 3, 3}, rng);
        Tf b = rand_tensor({4}, rng);
        w.set_requires_grad(true);
        b.set_requires_grad(true);
        Tf y = sigmoid(conv2d(x, w, b, 1, 1));
        Tf loss = l1_loss(y, Tf::full(y.shape(), 0.25f));
        backward(loss);
        std::vector<float> out = y.values();
        auto g = w.grad();
        out.insert(out.end(), g.begin(), g.end());
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}
