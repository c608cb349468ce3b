#ifndef HF_GRADCHECK_HPP
#define HF_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "hf/ops.hpp"
#include "hf/rng.hpp"
#include "hf/tensor.hpp"

namespace hf {

// Central-difference check of the tape gradient for a scalar-valued op.
// Returns the max relative error over sampled input coordinates.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& op,
                         std::vector<Tensor<T>> inputs, double eps = 1e-3,
                         int coords_per_input = 64, double denom_floor = 0.1) {
    for (auto& in : inputs) in.set_requires_grad(true);
    Tensor<T> loss = op(inputs);
    if (numel(loss.shape()) != 1) fail("finite_diff_check: op must produce a scalar");
    backward(loss);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs) analytic.push_back(in.grad_or_zeros());

    auto eval = [&](const std::vector<Tensor<T>>& pts) {
        return static_cast<double>(op(pts).item());
    };

    Rng pick(0xfdc1u);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::int64_t n = inputs[i].size();
        std::vector<std::int64_t> coords;
        if (n <= coords_per_input) {
            for (std::int64_t j = 0; j < n; ++j) coords.push_back(j);
        } else {
            for (int j = 0; j < coords_per_input; ++j)
                coords.push_back(static_cast<std::int64_t>(pick.uniform_int(n)));
        }
        for (std::int64_t j : coords) {
            std::vector<Tensor<T>> pts;
            pts.reserve(inputs.size());
            for (auto& in : inputs) pts.push_back(in.detach());
            const T saved = pts[i].data()[j];
            pts[i].data()[j] = saved + static_cast<T>(eps);
            const double lp = eval(pts);
            pts[i].data()[j] = saved - static_cast<T>(eps);
            const double lm = eval(pts);
            const double fd = (lp - lm) / (2.0 * eps);
            const double ad = static_cast<double>(analytic[i][j]);
            const double denom = std::max({std::abs(fd), std::abs(ad), denom_floor});
            max_rel = std::max(max_rel, std::abs(fd - ad) / denom);
        }
    }
    return max_rel;
}

// Deterministic probe: L = sum_i c_i * y_i with c ~ U(0.5, 1.5) and alternating
// signs, so per-coordinate gradients stay O(1).
template <typename T>
Tensor<T> weighted_probe(const Tensor<T>& y, std::uint64_t salt = 7) {
    Rng rng(salt, 11);
    Tensor<T> c = Tensor<T>::zeros(y.shape());
    for (std::size_t i = 0; i < c.values().size(); ++i) {
        double v = rng.uniform(0.5, 1.5);
        c.values()[i] = static_cast<T>((i % 2) ? -v : v);
    }
    return sum(mul(y, c));
}

struct GradCheckEntry {
    std::string name;
    double max_rel_err;
    double threshold;
    bool passed() const { return max_rel_err < threshold; }
};

// The per-primitive finite-difference ladder. Inputs are drawn away from relu
// and maxpool kinks so the derivative is well-defined at the probe points.
template <typename T>
std::vector<GradCheckEntry> gradcheck_suite(double eps, double threshold) {
    std::vector<GradCheckEntry> out;
    Rng rng(20240817);

    // Conv/pool/structural ops are (multi)linear in each coordinate, so the
    // central difference is exact at any step: a larger step only cuts f32
    // cancellation noise. Smooth ops keep the small step for low truncation.
    const double eps_lin = sizeof(T) == 4 ? std::max(eps, 1e-2) : eps;

    auto rand_tensor = [&](Shape s, double lo, double hi) {
        Tensor<T> t = Tensor<T>::zeros(std::move(s));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    };
    auto run_eps = [&](const std::string& name, double thr, double step,
                       std::function<Tensor<T>(const std::vector<Tensor<T>>&)> op,
                       std::vector<Tensor<T>> inputs) {
        out.push_back({name, finite_diff_check<T>(op, std::move(inputs), step), thr});
    };
    auto run = [&](const std::string& name, double thr,
                   std::function<Tensor<T>(const std::vector<Tensor<T>>&)> op,
                   std::vector<Tensor<T>> inputs) {
        run_eps(name, thr, eps_lin, std::move(op), std::move(inputs));
    };

    run("conv2d", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(conv2d(in[0], in[1], in[2], 1, 1));
        },
        {rand_tensor({1, 2, 5, 5}, -1, 1), rand_tensor({3, 2, 3, 3}, -0.6, 0.6),
         rand_tensor({3}, -0.2, 0.2)});
    run("conv2d_stride2", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(conv2d(in[0], in[1], in[2], 2, 1));
        },
        {rand_tensor({1, 2, 6, 6}, -1, 1), rand_tensor({2, 2, 3, 3}, -0.6, 0.6),
         rand_tensor({2}, -0.2, 0.2)});
    run("conv_transpose2d", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(conv_transpose2d(in[0], in[1], in[2], 2));
        },
        {rand_tensor({1, 2, 3, 3}, -1, 1), rand_tensor({2, 3, 2, 2}, -0.6, 0.6),
         rand_tensor({3}, -0.2, 0.2)});
    {
        // Distinct window entries keep the argmax stable under +-eps.
        Tensor<T> x = Tensor<T>::zeros({1, 1, 4, 4});
        std::vector<std::int64_t> order(16);
        for (std::int64_t i = 0; i < 16; ++i) order[i] = i;
        rng.shuffle(order);
        for (int i = 0; i < 16; ++i)
            x.values()[i] = static_cast<T>(0.2 * static_cast<double>(order[i]) - 1.5);
        run("maxpool2x2", threshold,
            [](const std::vector<Tensor<T>>& in) { return weighted_probe(maxpool2x2(in[0])); },
            {x});
    }
    run("upsample_nearest2x", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(upsample_nearest2x(in[0]));
        },
        {rand_tensor({1, 2, 3, 3}, -1, 1)});
    {
        Tensor<T> x = rand_tensor({1, 2, 4, 4}, 0.3, 1.5);
        for (std::size_t i = 0; i < x.values().size(); ++i)
            if (i % 2) x.values()[i] = -x.values()[i];  // bounded away from 0 on both sides
        run("relu", threshold,
            [](const std::vector<Tensor<T>>& in) { return weighted_probe(relu(in[0])); }, {x});
    }
    run_eps("sigmoid", threshold, eps,
            [](const std::vector<Tensor<T>>& in) { return weighted_probe(sigmoid(in[0])); },
            {rand_tensor({1, 2, 4, 4}, -2, 2)});
    run("concat_channels", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(concat_channels(in[0], in[1]));
        },
        {rand_tensor({1, 2, 3, 3}, -1, 1), rand_tensor({1, 3, 3, 3}, -1, 1)});
    run("slice_channels", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(slice_channels(in[0], 1, 3));
        },
        {rand_tensor({1, 4, 3, 3}, -1, 1)});
    run("global_avg_pool", threshold,
        [](const std::vector<Tensor<T>>& in) { return weighted_probe(global_avg_pool(in[0])); },
        {rand_tensor({2, 3, 4, 4}, -1, 1)});
    run("linear", threshold,
        [](const std::vector<Tensor<T>>& in) {
            return weighted_probe(linear(in[0], in[1], in[2]));
        },
        {rand_tensor({3, 5}, -1, 1), rand_tensor({4, 5}, -0.6, 0.6),
         rand_tensor({4}, -0.2, 0.2)});
    run("mul", threshold,
        [](const std::vector<Tensor<T>>& in) { return weighted_probe(mul(in[0], in[1])); },
        {rand_tensor({2, 3}, -1, 1), rand_tensor({2, 3}, -1, 1)});
    {
        Tensor<T> p = rand_tensor({2, 8}, -1, 1);
        Tensor<T> t = rand_tensor({2, 8}, 2, 3);  // keeps |p - t| away from the L1 kink
        run("l1_loss", threshold,
            [](const std::vector<Tensor<T>>& in) { return l1_loss(in[0], in[1]); }, {p, t});
    }
    {
        Tensor<T> p = rand_tensor({2, 8}, 0.2, 0.8);
        Tensor<T> t = rand_tensor({2, 8}, 0, 1);
        for (auto& v : t.values()) v = v > T(0.5) ? T(1) : T(0);
        run_eps("bce_loss", threshold, eps,
                [](const std::vector<Tensor<T>>& in) { return bce_loss(in[0], in[1]); }, {p, t});
    }
    return out;
}

// Two-level micro-network (conv/relu/pool then conv/sigmoid into an L1 loss)
// used for the end-to-end whole-tape check.
template <typename T>
double micro_network_check(double eps) {
    Rng rng(511);
    auto rand_tensor = [&](Shape s, double lo, double hi) {
        Tensor<T> t = Tensor<T>::zeros(std::move(s));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    };
    Tensor<T> x = rand_tensor({2, 2, 8, 8}, -1, 1);
    Tensor<T> w1 = rand_tensor({4, 2, 3, 3}, -0.5, 0.5);
    Tensor<T> b1 = rand_tensor({4}, -0.1, 0.1);
    Tensor<T> w2 = rand_tensor({2, 4, 3, 3}, -0.5, 0.5);
    Tensor<T> b2 = rand_tensor({2}, -0.1, 0.1);
    Tensor<T> target = rand_tensor({2, 2, 4, 4}, 1.2, 2.0);  // outside sigmoid range: no L1 kink
    auto op = [target](const std::vector<Tensor<T>>& in) {
        auto h = maxpool2x2(relu(conv2d(in[0], in[1], in[2], 1, 1)));
        auto y = sigmoid(conv2d(h, in[3], in[4], 1, 1));
        return l1_loss(y, target);
    };
    return finite_diff_check<T>(op, {x, w1, b1, w2, b2}, eps);
}

}  // namespace hf

#endif  // HF_GRADCHECK_HPP
