#ifndef HF_ADAM_HPP
#define HF_ADAM_HPP

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hf/param.hpp"

namespace hf {

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// Bias-corrected Adam. Moments are keyed by parameter name so optimizer state
// can ride along in checkpoints.
template <typename T>
class Adam {
public:
    struct Moments {
        std::vector<T> m, v;
    };

    Adam() = default;
    explicit Adam(AdamConfig<T> cfg) : cfg_(cfg) {}

    void step(const std::vector<Parameter<T>*>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
        for (Parameter<T>* p : params) {
            if (!p->trainable) continue;
            auto& node = *p->tensor.node();
            if (node.grad.size() != node.values.size())
                throw std::invalid_argument("adam_step: parameter '" + p->name +
                                            "' has no gradient");
            Moments& mom = state_[p->name];
            if (mom.m.empty()) {
                mom.m.assign(node.values.size(), T(0));
                mom.v.assign(node.values.size(), T(0));
            }
            const T b1 = cfg_.beta1, b2 = cfg_.beta2;
            for (std::size_t i = 0; i < node.values.size(); ++i) {
                const T g = node.grad[i];
                mom.m[i] = b1 * mom.m[i] + (T(1) - b1) * g;
                mom.v[i] = b2 * mom.v[i] + (T(1) - b2) * g * g;
                const double mhat = static_cast<double>(mom.m[i]) / bc1;
                const double vhat = static_cast<double>(mom.v[i]) / bc2;
                node.values[i] -= static_cast<T>(static_cast<double>(cfg_.lr) * mhat /
                                                 (std::sqrt(vhat) + static_cast<double>(cfg_.eps)));
            }
        }
    }

    const AdamConfig<T>& config() const { return cfg_; }
    void set_lr(T lr) { cfg_.lr = lr; }
    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    std::map<std::string, Moments>& state() { return state_; }
    const std::map<std::string, Moments>& state() const { return state_; }

private:
    AdamConfig<T> cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace hf

#endif  // HF_ADAM_HPP
