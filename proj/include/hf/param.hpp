#ifndef HF_PARAM_HPP
#define HF_PARAM_HPP

#include <string>

#include "hf/rng.hpp"
#include "hf/tensor.hpp"

namespace hf {

// Named trainable tensor. `trainable` mirrors the tensor's requires_grad flag;
// non-trainable parameters never receive optimizer updates.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;

    void set_trainable(bool v) {
        trainable = v;
        tensor.set_requires_grad(v);
    }
};

// He-style fan-in scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T>
Parameter<T> make_param(std::string name, Shape shape, int fan_in, Rng& rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return Parameter<T>{std::move(name), std::move(t), true};
}

template <typename T>
Parameter<T> make_zero_param(std::string name, Shape shape) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    t.set_requires_grad(true);
    return Parameter<T>{std::move(name), std::move(t), true};
}

// Scoped freeze: parameters behave as fixed evaluators for ops recorded while
// the guard lives (gradients pass through to inputs, none accumulate).
template <typename T>
class FreezeGuard {
public:
    explicit FreezeGuard(const std::vector<Parameter<T>*>& params) : params_(params) {
        for (auto* p : params_) {
            was_.push_back(p->trainable);
            p->set_trainable(false);
        }
    }
    ~FreezeGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->set_trainable(was_[i]);
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
    std::vector<Parameter<T>*> params_;
    std::vector<bool> was_;
};

}  // namespace hf

#endif  // HF_PARAM_HPP
