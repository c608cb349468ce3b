#ifndef HF_NETWORKS_HPP
#define HF_NETWORKS_HPP

#include <array>
#include <string>
#include <vector>

#include "hf/ops.hpp"
#include "hf/param.hpp"
#include "hf/rng.hpp"

namespace hf {

// Contracting-expanding architecture constants. The encoder has `depth`
// levels; the first depth-1 form the shared stem, the last level splits into
// the pose and appearance heads.
struct ArchConfig {
    int depth = 4;
    int base_channels = 16;
    int pose_channels = 64;  // C_p
    int app_channels = 64;   // C_a
    int joints = 16;         // K
    int image_size = 64;

    bool operator==(const ArchConfig&) const = default;

    int feature_size() const { return image_size >> depth; }

    void validate() const {
        if (depth < 1 || base_channels < 1 || pose_channels < 1 || app_channels < 1 ||
            joints < 1)
            fail("ArchConfig: all dimensions must be >= 1");
        if (image_size % (1 << depth) != 0)
            fail("ArchConfig: image size " + std::to_string(image_size) +
                 " not divisible by 2^" + std::to_string(depth));
    }

    std::string describe() const {
        return "depth=" + std::to_string(depth) + " base=" + std::to_string(base_channels) +
               " cp=" + std::to_string(pose_channels) + " ca=" + std::to_string(app_channels) +
               " k=" + std::to_string(joints) + " img=" + std::to_string(image_size);
    }
};

template <typename T>
struct Conv {
    Parameter<T> w, b;
    int stride = 1;
    int pad = 0;
};

template <typename T>
Tensor<T> apply(const Conv<T>& c, const Tensor<T>& x) {
    return conv2d(x, c.w.tensor, c.b.tensor, c.stride, c.pad);
}

template <typename T>
struct FeaturePair {
    Tensor<T> p;  // pose factor
    Tensor<T> a;  // appearance factor
};

// Encoder block: two 3x3 convs (each + relu), then 2x2 max pool.
template <typename T>
struct EncBlock {
    Conv<T> c1, c2;
};

// Pose decoder block: 2x2 stride-2 deconv + 3x3 conv, relu after each.
template <typename T>
struct UpBlock {
    Conv<T> deconv;  // weights laid out [Cin,Cout,2,2]
    Conv<T> conv;
};

template <typename T>
struct PoseDecoder {
    std::array<UpBlock<T>, 4> ups;
    Conv<T> head;  // 1x1 to K channels, sigmoid output
};

// Image decoder block: nearest-neighbor x2 upsample + 3x3 conv + relu
// (deconv-free to avoid checkerboard artifacts).
template <typename T>
struct ImageDecoder {
    std::array<Conv<T>, 4> convs;
    Conv<T> head;  // 1x1 to 1 channel, sigmoid output
};

template <typename T>
struct Discriminator {
    std::array<Conv<T>, 4> convs;  // 3x3 stride-2
    Parameter<T> fc_w, fc_b;       // affine after global average pool
};

// The five networks: shared stem, pose head E_p, appearance head E_I, pose
// decoder D_p, image decoder D_I, plus the GAN discriminator. Stem parameters
// exist exactly once and are shared by both encoder heads.
template <typename T>
struct NetworkSet {
    ArchConfig arch;
    std::vector<EncBlock<T>> stem;  // depth-1 blocks
    EncBlock<T> pose_head;
    EncBlock<T> app_head;
    PoseDecoder<T> pose_decoder;
    ImageDecoder<T> image_decoder;
    Discriminator<T> disc;

    std::vector<Parameter<T>*> stem_params() {
        std::vector<Parameter<T>*> out;
        for (auto& b : stem) {
            out.push_back(&b.c1.w);
            out.push_back(&b.c1.b);
            out.push_back(&b.c2.w);
            out.push_back(&b.c2.b);
        }
        return out;
    }
    std::vector<Parameter<T>*> pose_head_params() {
        return {&pose_head.c1.w, &pose_head.c1.b, &pose_head.c2.w, &pose_head.c2.b};
    }
    std::vector<Parameter<T>*> app_head_params() {
        return {&app_head.c1.w, &app_head.c1.b, &app_head.c2.w, &app_head.c2.b};
    }
    std::vector<Parameter<T>*> pose_decoder_params() { return decoder_params(pose_decoder); }
    std::vector<Parameter<T>*> image_decoder_params() { return decoder_params(image_decoder); }
    std::vector<Parameter<T>*> disc_params() {
        std::vector<Parameter<T>*> out;
        for (auto& c : disc.convs) {
            out.push_back(&c.w);
            out.push_back(&c.b);
        }
        out.push_back(&disc.fc_w);
        out.push_back(&disc.fc_b);
        return out;
    }
    // Everything the generator-side optimizer updates.
    std::vector<Parameter<T>*> generator_params() {
        std::vector<Parameter<T>*> out = stem_params();
        append(out, pose_head_params());
        append(out, app_head_params());
        append(out, pose_decoder_params());
        append(out, image_decoder_params());
        return out;
    }
    std::vector<Parameter<T>*> encoder_params() {
        std::vector<Parameter<T>*> out = stem_params();
        append(out, pose_head_params());
        append(out, app_head_params());
        return out;
    }
    std::vector<Parameter<T>*> pose_encoder_params() {
        std::vector<Parameter<T>*> out = stem_params();
        append(out, pose_head_params());
        return out;
    }
    std::vector<Parameter<T>*> all_params() {
        std::vector<Parameter<T>*> out = generator_params();
        append(out, disc_params());
        return out;
    }

    static std::vector<Parameter<T>*> decoder_params(PoseDecoder<T>& d) {
        std::vector<Parameter<T>*> out;
        for (auto& u : d.ups) {
            out.push_back(&u.deconv.w);
            out.push_back(&u.deconv.b);
            out.push_back(&u.conv.w);
            out.push_back(&u.conv.b);
        }
        out.push_back(&d.head.w);
        out.push_back(&d.head.b);
        return out;
    }
    static std::vector<Parameter<T>*> decoder_params(ImageDecoder<T>& d) {
        std::vector<Parameter<T>*> out;
        for (auto& c : d.convs) {
            out.push_back(&c.w);
            out.push_back(&c.b);
        }
        out.push_back(&d.head.w);
        out.push_back(&d.head.b);
        return out;
    }

private:
    static void append(std::vector<Parameter<T>*>& dst, std::vector<Parameter<T>*> src) {
        dst.insert(dst.end(), src.begin(), src.end());
    }
};

namespace detail {

template <typename T>
Conv<T> make_conv(const std::string& name, int cin, int cout, int k, int stride, int pad,
                  Rng& rng) {
    Conv<T> c;
    c.w = make_param<T>(name + ".w", {cout, cin, k, k}, cin * k * k, rng);
    c.b = make_param<T>(name + ".b", {cout}, cin * k * k, rng);
    c.stride = stride;
    c.pad = pad;
    return c;
}

template <typename T>
Conv<T> make_deconv(const std::string& name, int cin, int cout, int k, int stride, Rng& rng) {
    Conv<T> c;
    c.w = make_param<T>(name + ".w", {cin, cout, k, k}, cin * k * k, rng);
    c.b = make_param<T>(name + ".b", {cout}, cin * k * k, rng);
    c.stride = stride;
    c.pad = 0;
    return c;
}

// Decoder channel ladder, widest at the bottleneck: [4b, 2b, b, b].
inline std::array<int, 4> decoder_widths(int base) { return {4 * base, 2 * base, base, base}; }

}  // namespace detail

// Seeded parameter initialization; identical seeds give bitwise-identical nets.
template <typename T>
NetworkSet<T> build(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    if (arch.depth != 4)
        fail("build: this architecture fixes depth=4 (stem of 3 blocks + split heads)");
    Rng rng(seed, 101);
    NetworkSet<T> nets;
    nets.arch = arch;
    const int b = arch.base_channels;

    int cin = 1;
    for (int i = 0; i < arch.depth - 1; ++i) {
        const int cout = b << i;
        EncBlock<T> blk;
        const std::string pre = "stem.b" + std::to_string(i + 1);
        blk.c1 = detail::make_conv<T>(pre + ".c1", cin, cout, 3, 1, 1, rng);
        blk.c2 = detail::make_conv<T>(pre + ".c2", cout, cout, 3, 1, 1, rng);
        nets.stem.push_back(std::move(blk));
        cin = cout;
    }
    const int mid = b << (arch.depth - 1);
    nets.pose_head.c1 = detail::make_conv<T>("pose_head.c1", cin, mid, 3, 1, 1, rng);
    nets.pose_head.c2 = detail::make_conv<T>("pose_head.c2", mid, arch.pose_channels, 3, 1, 1, rng);
    nets.app_head.c1 = detail::make_conv<T>("app_head.c1", cin, mid, 3, 1, 1, rng);
    nets.app_head.c2 = detail::make_conv<T>("app_head.c2", mid, arch.app_channels, 3, 1, 1, rng);

    const auto widths = detail::decoder_widths(b);
    int dp_in = arch.pose_channels;
    int di_in = arch.pose_channels + arch.app_channels;
    for (int i = 0; i < 4; ++i) {
        const std::string dp = "dp.up" + std::to_string(i + 1);
        nets.pose_decoder.ups[i].deconv = detail::make_deconv<T>(dp + ".deconv", dp_in, widths[i], 2, 2, rng);
        nets.pose_decoder.ups[i].conv = detail::make_conv<T>(dp + ".conv", widths[i], widths[i], 3, 1, 1, rng);
        dp_in = widths[i];
        const std::string di = "di.up" + std::to_string(i + 1);
        nets.image_decoder.convs[i] = detail::make_conv<T>(di + ".conv", di_in, widths[i], 3, 1, 1, rng);
        di_in = widths[i];
    }
    nets.pose_decoder.head = detail::make_conv<T>("dp.head", widths[3], arch.joints, 1, 1, 0, rng);
    nets.image_decoder.head = detail::make_conv<T>("di.head", widths[3], 1, 1, 1, 0, rng);

    int dc_in = 1;
    for (int i = 0; i < 4; ++i) {
        const int cout = b << i;
        nets.disc.convs[i] = detail::make_conv<T>("disc.c" + std::to_string(i + 1), dc_in, cout, 3, 2, 1, rng);
        dc_in = cout;
    }
    nets.disc.fc_w = make_param<T>("disc.fc.w", {1, dc_in}, dc_in, rng);
    nets.disc.fc_b = make_param<T>("disc.fc.b", {1}, dc_in, rng);
    return nets;
}

template <typename T>
Tensor<T> stem_forward(const NetworkSet<T>& nets, const Tensor<T>& images) {
    const Shape& s = images.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != nets.arch.image_size || s[3] != nets.arch.image_size)
        fail("encode: expected (N,1," + std::to_string(nets.arch.image_size) + "," +
             std::to_string(nets.arch.image_size) + ") images, got " + shape_str(s));
    Tensor<T> h = images;
    for (const auto& blk : nets.stem)
        h = maxpool2x2(relu(apply(blk.c2, relu(apply(blk.c1, h)))));
    return h;
}

template <typename T>
Tensor<T> head_forward(const EncBlock<T>& head, const Tensor<T>& h) {
    return maxpool2x2(relu(apply(head.c2, relu(apply(head.c1, h)))));
}

// images (N,1,S,S) -> pose and appearance factors at (N,C,S/16,S/16).
template <typename T>
FeaturePair<T> encode(const NetworkSet<T>& nets, const Tensor<T>& images) {
    Tensor<T> h = stem_forward(nets, images);
    return {head_forward(nets.pose_head, h), head_forward(nets.app_head, h)};
}

// Pose factor -> K heatmaps in (0,1) at image resolution. No skip connections:
// the heatmaps can only be produced from p.
template <typename T>
Tensor<T> decode_pose(const PoseDecoder<T>& dec, const Tensor<T>& p) {
    Tensor<T> h = p;
    for (const auto& up : dec.ups) {
        h = relu(conv_transpose2d(h, up.deconv.w.tensor, up.deconv.b.tensor, 2));
        h = relu(apply(up.conv, h));
    }
    return sigmoid(apply(dec.head, h));
}

template <typename T>
Tensor<T> decode_pose(const NetworkSet<T>& nets, const Tensor<T>& p) {
    return decode_pose(nets.pose_decoder, p);
}

// (p, a) -> image in (0,1). Upsampling is nearest-neighbor + conv.
template <typename T>
Tensor<T> decode_image(const ImageDecoder<T>& dec, const Tensor<T>& p, const Tensor<T>& a) {
    if (p.shape()[0] != a.shape()[0])
        fail("decode_image: batch mismatch " + shape_str(p.shape()) + " vs " +
             shape_str(a.shape()));
    Tensor<T> h = concat_channels(p, a);
    for (const auto& c : dec.convs) h = relu(apply(c, upsample_nearest2x(h)));
    return sigmoid(apply(dec.head, h));
}

template <typename T>
Tensor<T> decode_image(const NetworkSet<T>& nets, const Tensor<T>& p, const Tensor<T>& a) {
    return decode_image(nets.image_decoder, p, a);
}

// images -> realness scores, shape (N), values in (0,1).
template <typename T>
Tensor<T> discriminate(const NetworkSet<T>& nets, const Tensor<T>& images) {
    Tensor<T> h = images;
    for (const auto& c : nets.disc.convs) h = relu(apply(c, h));
    Tensor<T> pooled = global_avg_pool(h);
    Tensor<T> score = linear(pooled, nets.disc.fc_w.tensor, nets.disc.fc_b.tensor);
    return reshape(sigmoid(score), {images.shape()[0]});
}

// Non-trainable value copies of the two decoders, used as cycle evaluators:
// backward through them reaches their inputs but never their parameters.
template <typename T>
struct FrozenDecoders {
    PoseDecoder<T> pose_decoder;
    ImageDecoder<T> image_decoder;
};

namespace detail {
template <typename T>
Conv<T> freeze_copy(const Conv<T>& c) {
    Conv<T> out;
    out.w = Parameter<T>{c.w.name + "#frozen", c.w.tensor.clone_values(), false};
    out.b = Parameter<T>{c.b.name + "#frozen", c.b.tensor.clone_values(), false};
    out.w.tensor.set_requires_grad(false);
    out.b.tensor.set_requires_grad(false);
    out.stride = c.stride;
    out.pad = c.pad;
    return out;
}
}  // namespace detail

template <typename T>
FrozenDecoders<T> clone_frozen(const NetworkSet<T>& nets) {
    FrozenDecoders<T> f;
    for (int i = 0; i < 4; ++i) {
        f.pose_decoder.ups[i].deconv = detail::freeze_copy(nets.pose_decoder.ups[i].deconv);
        f.pose_decoder.ups[i].conv = detail::freeze_copy(nets.pose_decoder.ups[i].conv);
        f.image_decoder.convs[i] = detail::freeze_copy(nets.image_decoder.convs[i]);
    }
    f.pose_decoder.head = detail::freeze_copy(nets.pose_decoder.head);
    f.image_decoder.head = detail::freeze_copy(nets.image_decoder.head);
    return f;
}

// Refresh the frozen copies from the live decoders (called once per step).
template <typename T>
void refresh_frozen(FrozenDecoders<T>& f, const NetworkSet<T>& nets) {
    auto copy_conv = [](Conv<T>& dst, const Conv<T>& src) {
        dst.w.tensor.values() = src.w.tensor.values();
        dst.b.tensor.values() = src.b.tensor.values();
    };
    for (int i = 0; i < 4; ++i) {
        copy_conv(f.pose_decoder.ups[i].deconv, nets.pose_decoder.ups[i].deconv);
        copy_conv(f.pose_decoder.ups[i].conv, nets.pose_decoder.ups[i].conv);
        copy_conv(f.image_decoder.convs[i], nets.image_decoder.convs[i]);
    }
    copy_conv(f.pose_decoder.head, nets.pose_decoder.head);
    copy_conv(f.image_decoder.head, nets.image_decoder.head);
}

template <typename T>
std::int64_t parameter_count(NetworkSet<T>& nets) {
    std::int64_t n = 0;
    for (auto* p : nets.all_params()) n += p->tensor.size();
    return n;
}

}  // namespace hf

#endif  // HF_NETWORKS_HPP
