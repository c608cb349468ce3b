#ifndef HF_LOSSES_HPP
#define HF_LOSSES_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "hf/ops.hpp"

namespace hf {

// Weights of the total objective:
//   L = L_p + a1 L_I + a2 L_D + a3 L_G + a4 L_cycle_img + a7 L_cycle_pose
//         + a6 L_dual_img + a5 L_dual_pose
struct LossWeights {
    double recon = 1.0;       // a1
    double gan_d = 0.01;      // a2
    double gan_g = 0.01;      // a3
    double cycle_img = 1.0;   // a4
    double dual_pose = 0.1;   // a5
    double dual_img = 0.1;    // a6
    double cycle_pose = 1.0;  // a7

    bool operator==(const LossWeights&) const = default;

    void validate() const {
        for (double v : {recon, gan_d, gan_g, cycle_img, dual_pose, dual_img, cycle_pose})
            if (!(v >= 0.0) || !std::isfinite(v)) fail("LossWeights: weights must be finite, >= 0");
    }
};

// Scalar value of every term for the x and y halves of the pair batch,
// plus the weighted total.
struct LossReport {
    double pose_x = 0, pose_y = 0;
    double recon_x = 0, recon_y = 0;
    double gan_d = 0;  // single scalar: real batch vs all fakes
    double gan_g_x = 0, gan_g_y = 0;
    double cycle_img_x = 0, cycle_img_y = 0;
    double dual_pose_x = 0, dual_pose_y = 0;
    double dual_img_x = 0, dual_img_y = 0;
    double cycle_pose_x = 0, cycle_pose_y = 0;
    double total = 0;
};

// Eq. 1: L1 between predicted and ground-truth heatmap stacks.
template <typename T>
Tensor<T> pose_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
    return l1_loss(predicted, target);
}

// Eq. 2: L1 between decoded and original image.
template <typename T>
Tensor<T> recon_loss(const Tensor<T>& decoded, const Tensor<T>& original) {
    return l1_loss(decoded, original);
}

// Eq. 3 as minimized losses. d_fake for the discriminator loss must come from
// detached images; the generator loss uses the non-saturating form.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gan_losses(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    for (const Tensor<T>* s : {&d_real, &d_fake})
        for (const T& v : s->values())
            if (!(v > T(0) && v < T(1)))
                fail("gan_losses: scores must lie in (0,1), got " +
                     std::to_string(static_cast<double>(v)));
    Tensor<T> ones_r = Tensor<T>::full(d_real.shape(), T(1));
    Tensor<T> zeros_f = Tensor<T>::zeros(d_fake.shape());
    Tensor<T> ones_f = Tensor<T>::full(d_fake.shape(), T(1));
    Tensor<T> loss_d = add(bce_loss(d_real, ones_r), bce_loss(d_fake, zeros_f));
    Tensor<T> loss_g = bce_loss(d_fake, ones_f);
    return {loss_d, loss_g};
}

// Eq. 4: L1 between the cycle-reconstructed and original image.
template <typename T>
Tensor<T> cycle_image_loss(const Tensor<T>& cycled, const Tensor<T>& original) {
    return l1_loss(cycled, original);
}

// Eq. 5: L1 between a re-encoded factor and its (detached) source factor.
template <typename T>
Tensor<T> dual_feature_loss(const Tensor<T>& reencoded, const Tensor<T>& target) {
    return l1_loss(reencoded, target);
}

// Eq. 6: L1 between the heatmaps decoded from the re-encoded pose factor and
// the original ground truth.
template <typename T>
Tensor<T> cycle_pose_loss(const Tensor<T>& cycled_heatmaps, const Tensor<T>& target) {
    return l1_loss(cycled_heatmaps, target);
}

// All scalar terms of one training step. Absent optionals are inactive for
// the current mode.
template <typename T>
struct LossTerms {
    Tensor<T> pose_x, pose_y;
    std::optional<Tensor<T>> recon_x, recon_y;
    std::optional<Tensor<T>> gan_d;
    std::optional<Tensor<T>> gan_g_x, gan_g_y;
    std::optional<Tensor<T>> cycle_img_x, cycle_img_y;
    std::optional<Tensor<T>> dual_pose_x, dual_pose_y;
    std::optional<Tensor<T>> dual_img_x, dual_img_y;
    std::optional<Tensor<T>> cycle_pose_x, cycle_pose_y;
};

namespace detail {
template <typename T>
double value_or_zero(const std::optional<Tensor<T>>& t) {
    return t ? static_cast<double>(t->item()) : 0.0;
}

template <typename T>
void add_weighted(Tensor<T>& total, const std::optional<Tensor<T>>& term, double w,
                  const char* name, bool required) {
    if (!term) {
        if (required && w > 0)
            fail(std::string("total_loss: required term '") + name + "' missing");
        return;
    }
    if (!std::isfinite(static_cast<double>(term->item())))
        throw std::runtime_error(std::string("total_loss: term '") + name + "' is non-finite");
    total = add(total, scale(*term, static_cast<T>(w)));
}
}  // namespace detail

// Eq. 7. Each L denotes the sum over the x and y instances. Returns the total
// as a tensor (for backward) plus the numeric report.
template <typename T>
std::pair<Tensor<T>, LossReport> total_loss(const LossTerms<T>& terms, const LossWeights& w,
                                            bool require_image_terms) {
    w.validate();
    Tensor<T> total = add(terms.pose_x, terms.pose_y);
    const bool req = require_image_terms;
    detail::add_weighted(total, terms.recon_x, w.recon, "recon_x", req);
    detail::add_weighted(total, terms.recon_y, w.recon, "recon_y", req);
    detail::add_weighted(total, terms.gan_d, w.gan_d, "gan_d", req);
    detail::add_weighted(total, terms.gan_g_x, w.gan_g, "gan_g_x", req);
    detail::add_weighted(total, terms.gan_g_y, w.gan_g, "gan_g_y", req);
    detail::add_weighted(total, terms.cycle_img_x, w.cycle_img, "cycle_img_x", false);
    detail::add_weighted(total, terms.cycle_img_y, w.cycle_img, "cycle_img_y", false);
    detail::add_weighted(total, terms.dual_pose_x, w.dual_pose, "dual_pose_x", false);
    detail::add_weighted(total, terms.dual_pose_y, w.dual_pose, "dual_pose_y", false);
    detail::add_weighted(total, terms.dual_img_x, w.dual_img, "dual_img_x", false);
    detail::add_weighted(total, terms.dual_img_y, w.dual_img, "dual_img_y", false);
    detail::add_weighted(total, terms.cycle_pose_x, w.cycle_pose, "cycle_pose_x", false);
    detail::add_weighted(total, terms.cycle_pose_y, w.cycle_pose, "cycle_pose_y", false);

    LossReport r;
    r.pose_x = static_cast<double>(terms.pose_x.item());
    r.pose_y = static_cast<double>(terms.pose_y.item());
    r.recon_x = detail::value_or_zero(terms.recon_x);
    r.recon_y = detail::value_or_zero(terms.recon_y);
    r.gan_d = detail::value_or_zero(terms.gan_d);
    r.gan_g_x = detail::value_or_zero(terms.gan_g_x);
    r.gan_g_y = detail::value_or_zero(terms.gan_g_y);
    r.cycle_img_x = detail::value_or_zero(terms.cycle_img_x);
    r.cycle_img_y = detail::value_or_zero(terms.cycle_img_y);
    r.dual_pose_x = detail::value_or_zero(terms.dual_pose_x);
    r.dual_pose_y = detail::value_or_zero(terms.dual_pose_y);
    r.dual_img_x = detail::value_or_zero(terms.dual_img_x);
    r.dual_img_y = detail::value_or_zero(terms.dual_img_y);
    r.cycle_pose_x = detail::value_or_zero(terms.cycle_pose_x);
    r.cycle_pose_y = detail::value_or_zero(terms.cycle_pose_y);
    r.total = static_cast<double>(total.item());
    return {total, r};
}

}  // namespace hf

#endif  // HF_LOSSES_HPP
