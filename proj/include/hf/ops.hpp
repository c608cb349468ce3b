#ifndef HF_OPS_HPP
#define HF_OPS_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hf/tensor.hpp"

namespace hf {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

// Optional full-buffer finiteness enforcement; scalar losses are always checked.
inline bool& finite_checks() {
    static bool on = false;
    return on;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T& v : t.values())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename T>
void enforce_finite(const Tensor<T>& t, const char* op) {
    if (finite_checks() && !all_finite(t))
        throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

namespace detail {

// Gathers conv patches: col is (C*kh*kw) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            T* col) {
    for (int c = 0; c < C; ++c) {
        const T* src_c = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* dst = col + (static_cast<std::size_t>(c * kh + ki) * kw + kj) *
                                   (static_cast<std::size_t>(Ho) * Wo);
                for (int ho = 0; ho < Ho; ++ho) {
                    const int ih = ho * stride - pad + ki;
                    T* drow = dst + static_cast<std::size_t>(ho) * Wo;
                    if (ih < 0 || ih >= H) {
                        std::fill(drow, drow + Wo, T(0));
                        continue;
                    }
                    const T* srow = src_c + static_cast<std::size_t>(ih) * W;
                    if (stride == 1) {
                        const int wo_lo = std::max(0, pad - kj);
                        const int wo_hi = std::min(Wo, W + pad - kj);
                        if (wo_lo > 0) std::fill(drow, drow + std::min(wo_lo, Wo), T(0));
                        if (wo_hi < Wo) std::fill(drow + std::max(wo_hi, 0), drow + Wo, T(0));
                        if (wo_hi > wo_lo)
                            std::copy(srow + (wo_lo - pad + kj), srow + (wo_hi - pad + kj),
                                      drow + wo_lo);
                    } else {
                        for (int wo = 0; wo < Wo; ++wo) {
                            const int iw = wo * stride - pad + kj;
                            drow[wo] = (iw >= 0 && iw < W) ? srow[iw] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds col back onto the image grid.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, T* x) {
    for (int c = 0; c < C; ++c) {
        T* dst_c = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* src = col + (static_cast<std::size_t>(c * kh + ki) * kw + kj) *
                                         (static_cast<std::size_t>(Ho) * Wo);
                for (int ho = 0; ho < Ho; ++ho) {
                    const int ih = ho * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    const T* srow = src + static_cast<std::size_t>(ho) * Wo;
                    T* drow = dst_c + static_cast<std::size_t>(ih) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int iw = wo * stride - pad + kj;
                        if (iw >= 0 && iw < W) drow[iw] += srow[wo];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// -------------------------------------------------------------------------
// Convolution family
// -------------------------------------------------------------------------

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout]. Output H' = (H+2p-kh)/s + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1,
                 int pad = 0) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4)
        fail("conv2d: expected 4-d input and kernel, got " + shape_str(xs) + " and " +
             shape_str(ws));
    if (xs[1] != ws[1])
        fail("conv2d: input channels " + shape_str(xs) + " do not match kernel " + shape_str(ws));
    if (b.shape() != Shape{ws[0]})
        fail("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " + shape_str(ws));
    if (stride < 1) fail("conv2d: stride must be >= 1");
    const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const int Cout = ws[0], kh = ws[2], kw = ws[3];
    if (kh > H + 2 * pad || kw > W + 2 * pad)
        fail("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int ckk = Cin * kh * kw;
    const std::int64_t osp = static_cast<std::int64_t>(Ho) * Wo;

    Tensor<T> out = Tensor<T>::zeros({N, Cout, Ho, Wo});
    {
        std::vector<T> col(static_cast<std::size_t>(ckk) * osp);
        CMapM<T> wm(w.data(), Cout, ckk);
        for (int n = 0; n < N; ++n) {
            detail::im2col(x.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin, H, W, kh, kw,
                           stride, pad, Ho, Wo, col.data());
            CMapM<T> cm(col.data(), ckk, osp);
            MapM<T> ym(out.data() + static_cast<std::size_t>(n) * Cout * osp, Cout, osp);
            ym.noalias() = wm * cm;
            for (int c = 0; c < Cout; ++c) ym.row(c).array() += b.data()[c];
        }
    }
    enforce_finite(out, "conv2d");

    const bool need_x = x.requires_grad(), need_w = w.requires_grad(), need_b = b.requires_grad();
    detail::record(out, {x, w, b},
                   [=, xn = x.node(), wn = w.node(), bn = b.node()](TensorNode<T>& self) {
        std::vector<T> col(static_cast<std::size_t>(ckk) * osp);
        if (need_w) wn->ensure_grad();
        if (need_b) bn->ensure_grad();
        if (need_x) xn->ensure_grad();
        CMapM<T> wm(wn->values.data(), Cout, ckk);
        for (int n = 0; n < N; ++n) {
            CMapM<T> gy(self.grad.data() + static_cast<std::size_t>(n) * Cout * osp, Cout, osp);
            if (need_w) {
                detail::im2col(xn->values.data() + static_cast<std::size_t>(n) * Cin * H * W, Cin,
                               H, W, kh, kw, stride, pad, Ho, Wo, col.data());
                CMapM<T> cm(col.data(), ckk, osp);
                MapM<T> gw(wn->grad.data(), Cout, ckk);
                gw.noalias() += gy * cm.transpose();
            }
            if (need_b) {
                for (int c = 0; c < Cout; ++c) {
                    double s = 0;
                    const T* row = gy.data() + static_cast<std::size_t>(c) * osp;
                    for (std::int64_t i = 0; i < osp; ++i) s += static_cast<double>(row[i]);
                    bn->grad[c] += static_cast<T>(s);
                }
            }
            if (need_x) {
                MapM<T> cg(col.data(), ckk, osp);
                cg.noalias() = wm.transpose() * gy;
                detail::col2im_add(col.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                                   xn->grad.data() + static_cast<std::size_t>(n) * Cin * H * W);
            }
        }
    });
    return out;
}

// x: [N,C1,H,W], w: [C1,C2,kh,kw], b: [C2]. Output spatial (H-1)*s + kh.
// Satisfies <conv2d(x,w), y> == <x, conv_transpose2d(y,w)> for shared w.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride = 1) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4)
        fail("conv_transpose2d: expected 4-d input and kernel, got " + shape_str(xs) + " and " +
             shape_str(ws));
    if (xs[1] != ws[0])
        fail("conv_transpose2d: input channels " + shape_str(xs) + " do not match kernel " +
             shape_str(ws));
    if (b.shape() != Shape{ws[1]})
        fail("conv_transpose2d: bias " + shape_str(b.shape()) + " does not match kernel " +
             shape_str(ws));
    if (stride < 1) fail("conv_transpose2d: stride must be >= 1");
    const int N = xs[0], C1 = xs[1], H = xs[2], W = xs[3];
    const int C2 = ws[1], kh = ws[2], kw = ws[3];
    const int OH = (H - 1) * stride + kh;
    const int OW = (W - 1) * stride + kw;
    const int ckk = C2 * kh * kw;
    const std::int64_t isp = static_cast<std::int64_t>(H) * W;

    Tensor<T> out = Tensor<T>::zeros({N, C2, OH, OW});
    {
        std::vector<T> col(static_cast<std::size_t>(ckk) * isp);
        CMapM<T> wm(w.data(), C1, ckk);
        for (int n = 0; n < N; ++n) {
            CMapM<T> xm(x.data() + static_cast<std::size_t>(n) * C1 * isp, C1, isp);
            MapM<T> cm(col.data(), ckk, isp);
            cm.noalias() = wm.transpose() * xm;
            T* yn = out.data() + static_cast<std::size_t>(n) * C2 * OH * OW;
            detail::col2im_add(col.data(), C2, OH, OW, kh, kw, stride, 0, H, W, yn);
            for (int c = 0; c < C2; ++c) {
                T* row = yn + static_cast<std::size_t>(c) * OH * OW;
                const T bias = b.data()[c];
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i)
                    row[i] += bias;
            }
        }
    }
    enforce_finite(out, "conv_transpose2d");

    const bool need_x = x.requires_grad(), need_w = w.requires_grad(), need_b = b.requires_grad();
    detail::record(out, {x, w, b},
                   [=, xn = x.node(), wn = w.node(), bn = b.node()](TensorNode<T>& self) {
        std::vector<T> col(static_cast<std::size_t>(ckk) * isp);
        if (need_w) wn->ensure_grad();
        if (need_b) bn->ensure_grad();
        if (need_x) xn->ensure_grad();
        CMapM<T> wm(wn->values.data(), C1, ckk);
        const std::int64_t outsp = static_cast<std::int64_t>(OH) * OW;
        for (int n = 0; n < N; ++n) {
            const T* gyp = self.grad.data() + static_cast<std::size_t>(n) * C2 * outsp;
            detail::im2col(gyp, C2, OH, OW, kh, kw, stride, 0, H, W, col.data());
            CMapM<T> cg(col.data(), ckk, isp);
            if (need_x) {
                MapM<T> gx(xn->grad.data() + static_cast<std::size_t>(n) * C1 * isp, C1, isp);
                gx.noalias() += wm * cg;
            }
            if (need_w) {
                CMapM<T> xm(xn->values.data() + static_cast<std::size_t>(n) * C1 * isp, C1, isp);
                MapM<T> gw(wn->grad.data(), C1, ckk);
                gw.noalias() += xm * cg.transpose();
            }
            if (need_b) {
                for (int c = 0; c < C2; ++c) {
                    double s = 0;
                    const T* row = gyp + static_cast<std::size_t>(c) * outsp;
                    for (std::int64_t i = 0; i < outsp; ++i) s += static_cast<double>(row[i]);
                    bn->grad[c] += static_cast<T>(s);
                }
            }
        }
    });
    return out;
}

// 2x2 max pooling, stride 2. Gradient goes to the window argmax; ties break
// toward the lowest flat index.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) fail("maxpool2x2: expected 4-d input, got " + shape_str(xs));
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (H % 2 || W % 2) fail("maxpool2x2: spatial dims must be even, got " + shape_str(xs));
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out = Tensor<T>::zeros({N, C, Ho, Wo});
    auto sel = std::make_shared<std::vector<std::uint8_t>>(out.values().size());
    const T* xp = x.data();
    T* yp = out.data();
    std::size_t o = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* plane = xp + static_cast<std::size_t>(nc) * H * W;
        for (int ho = 0; ho < Ho; ++ho) {
            for (int wo = 0; wo < Wo; ++wo, ++o) {
                const T* w00 = plane + (2 * ho) * W + 2 * wo;
                T best = w00[0];
                std::uint8_t arg = 0;
                if (w00[1] > best) { best = w00[1]; arg = 1; }
                if (w00[W] > best) { best = w00[W]; arg = 2; }
                if (w00[W + 1] > best) { best = w00[W + 1]; arg = 3; }
                yp[o] = best;
                (*sel)[o] = arg;
            }
        }
    }
    if (x.requires_grad()) {
        detail::record(out, {x}, [=, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            T* gx = xn->grad.data();
            const T* gy = self.grad.data();
            std::size_t o2 = 0;
            for (int nc = 0; nc < N * C; ++nc) {
                T* plane = gx + static_cast<std::size_t>(nc) * H * W;
                for (int ho = 0; ho < Ho; ++ho) {
                    for (int wo = 0; wo < Wo; ++wo, ++o2) {
                        const std::uint8_t a = (*sel)[o2];
                        plane[(2 * ho + a / 2) * W + 2 * wo + a % 2] += gy[o2];
                    }
                }
            }
        });
    }
    return out;
}

// Each input element replicated to a 2x2 block; backward sums the block.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) fail("upsample_nearest2x: expected 4-d input, got " + shape_str(xs));
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor<T> out = Tensor<T>::zeros({N, C, 2 * H, 2 * W});
    const T* xp = x.data();
    T* yp = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const T* sp = xp + static_cast<std::size_t>(nc) * H * W;
        T* dp = yp + static_cast<std::size_t>(nc) * 4 * H * W;
        for (int i = 0; i < H; ++i) {
            T* r0 = dp + (2 * i) * 2 * W;
            T* r1 = r0 + 2 * W;
            for (int j = 0; j < W; ++j) {
                const T v = sp[i * W + j];
                r0[2 * j] = v;
                r0[2 * j + 1] = v;
                r1[2 * j] = v;
                r1[2 * j + 1] = v;
            }
        }
    }
    if (x.requires_grad()) {
        detail::record(out, {x}, [=, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            const T* gy = self.grad.data();
            T* gx = xn->grad.data();
            for (int nc = 0; nc < N * C; ++nc) {
                const T* sp = gy + static_cast<std::size_t>(nc) * 4 * H * W;
                T* dp = gx + static_cast<std::size_t>(nc) * H * W;
                for (int i = 0; i < H; ++i) {
                    const T* r0 = sp + (2 * i) * 2 * W;
                    const T* r1 = r0 + 2 * W;
                    for (int j = 0; j < W; ++j)
                        dp[i * W + j] += r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
                }
            }
        });
    }
    return out;
}

// -------------------------------------------------------------------------
// Pointwise and structural ops
// -------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xp = x.data();
    T* yp = out.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
    if (x.requires_grad()) {
        detail::record(out, {x}, [xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            const T* y = self.values.data();
            const T* gy = self.grad.data();
            T* gx = xn->grad.data();
            const std::int64_t m = self.size();
            for (std::int64_t i = 0; i < m; ++i)
                if (y[i] > T(0)) gx[i] += gy[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const T* xp = x.data();
    T* yp = out.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const T v = xp[i];
        yp[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                          : std::exp(v) / (T(1) + std::exp(v));
    }
    if (x.requires_grad()) {
        detail::record(out, {x}, [xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            const T* y = self.values.data();
            const T* gy = self.grad.data();
            T* gx = xn->grad.data();
            const std::int64_t m = self.size();
            for (std::int64_t i = 0; i < m; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
        });
    }
    return out;
}

enum class Pointwise { relu, sigmoid };

template <typename T>
Tensor<T> pointwise(Pointwise kind, const Tensor<T>& x) {
    return kind == Pointwise::relu ? relu(x) : sigmoid(x);
}

// Channels of a precede channels of b.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        fail("concat_channels: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
    const int N = as[0], Ca = as[1], Cb = bs[1], H = as[2], W = as[3];
    const std::size_t sp = static_cast<std::size_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * sp, a.data() + (n + 1) * Ca * sp,
                  out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * sp);
        std::copy(b.data() + n * Cb * sp, b.data() + (n + 1) * Cb * sp,
                  out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * sp + Ca * sp);
    }
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    detail::record(out, {a, b}, [=, an = a.node(), bn = b.node()](TensorNode<T>& self) {
        const T* gy = self.grad.data();
        if (need_a) {
            an->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const T* src = gy + static_cast<std::size_t>(n) * (Ca + Cb) * sp;
                T* dst = an->grad.data() + static_cast<std::size_t>(n) * Ca * sp;
                for (std::size_t i = 0; i < Ca * sp; ++i) dst[i] += src[i];
            }
        }
        if (need_b) {
            bn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const T* src = gy + static_cast<std::size_t>(n) * (Ca + Cb) * sp + Ca * sp;
                T* dst = bn->grad.data() + static_cast<std::size_t>(n) * Cb * sp;
                for (std::size_t i = 0; i < Cb * sp; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

// Channel range [c0, c1) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
    const Shape& xs = x.shape();
    if (xs.size() != 4 || c0 < 0 || c1 > xs[1] || c0 >= c1)
        fail("slice_channels: invalid range [" + std::to_string(c0) + "," + std::to_string(c1) +
             ") for " + shape_str(xs));
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3], Cs = c1 - c0;
    const std::size_t sp = static_cast<std::size_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({N, Cs, H, W});
    for (int n = 0; n < N; ++n)
        std::copy(x.data() + (static_cast<std::size_t>(n) * C + c0) * sp,
                  x.data() + (static_cast<std::size_t>(n) * C + c1) * sp,
                  out.data() + static_cast<std::size_t>(n) * Cs * sp);
    if (x.requires_grad()) {
        detail::record(out, {x}, [=, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const T* src = self.grad.data() + static_cast<std::size_t>(n) * Cs * sp;
                T* dst = xn->grad.data() + (static_cast<std::size_t>(n) * C + c0) * sp;
                for (std::size_t i = 0; i < Cs * sp; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

// [N,C,H,W] -> [N,C], mean over the spatial grid.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) fail("global_avg_pool: expected 4-d input, got " + shape_str(xs));
    const int N = xs[0], C = xs[1];
    const std::int64_t sp = static_cast<std::int64_t>(xs[2]) * xs[3];
    Tensor<T> out = Tensor<T>::zeros({N, C});
    for (int i = 0; i < N * C; ++i) {
        double s = 0;
        const T* p = x.data() + static_cast<std::size_t>(i) * sp;
        for (std::int64_t j = 0; j < sp; ++j) s += static_cast<double>(p[j]);
        out.data()[i] = static_cast<T>(s / static_cast<double>(sp));
    }
    if (x.requires_grad()) {
        detail::record(out, {x}, [=, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            for (int i = 0; i < N * C; ++i) {
                const T g = self.grad[i] / static_cast<T>(sp);
                T* p = xn->grad.data() + static_cast<std::size_t>(i) * sp;
                for (std::int64_t j = 0; j < sp; ++j) p[j] += g;
            }
        });
    }
    return out;
}

// x: [N,K], w: [M,K], b: [M] -> [N,M]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
        fail("linear: incompatible shapes " + shape_str(xs) + " and " + shape_str(ws));
    if (b.shape() != Shape{ws[0]})
        fail("linear: bias " + shape_str(b.shape()) + " does not match " + shape_str(ws));
    const int N = xs[0], K = xs[1], M = ws[0];
    Tensor<T> out = Tensor<T>::zeros({N, M});
    {
        CMapM<T> xm(x.data(), N, K), wm(w.data(), M, K);
        MapM<T> ym(out.data(), N, M);
        ym.noalias() = xm * wm.transpose();
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < M; ++m) ym(n, m) += b.data()[m];
    }
    const bool need_x = x.requires_grad(), need_w = w.requires_grad(), need_b = b.requires_grad();
    detail::record(out, {x, w, b},
                   [=, xn = x.node(), wn = w.node(), bn = b.node()](TensorNode<T>& self) {
        CMapM<T> gy(self.grad.data(), N, M);
        if (need_x) {
            xn->ensure_grad();
            MapM<T> gx(xn->grad.data(), N, K);
            CMapM<T> wm(wn->values.data(), M, K);
            gx.noalias() += gy * wm;
        }
        if (need_w) {
            wn->ensure_grad();
            MapM<T> gw(wn->grad.data(), M, K);
            CMapM<T> xm(xn->values.data(), N, K);
            gw.noalias() += gy.transpose() * xm;
        }
        if (need_b) {
            bn->ensure_grad();
            for (int m = 0; m < M; ++m) {
                double s = 0;
                for (int n = 0; n < N; ++n) s += static_cast<double>(gy(n, m));
                bn->grad[m] += static_cast<T>(s);
            }
        }
    });
    return out;
}

// Copying reshape; gradient passes straight through.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        fail("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor<T> out = Tensor<T>::from_data(std::move(shape), x.values());
    if (x.requires_grad()) {
        detail::record(out, {x}, [xn = x.node()](TensorNode<T>& self) {
            detail::accumulate(xn, self.grad.data(), self.grad.size());
        });
    }
    return out;
}

// -------------------------------------------------------------------------
// Arithmetic
// -------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        fail("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    const bool na = a.requires_grad(), nb = b.requires_grad();
    detail::record(out, {a, b}, [=, an = a.node(), bn = b.node()](TensorNode<T>& self) {
        if (na) detail::accumulate(an, self.grad.data(), self.grad.size());
        if (nb) detail::accumulate(bn, self.grad.data(), self.grad.size());
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        fail("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    const bool na = a.requires_grad(), nb = b.requires_grad();
    detail::record(out, {a, b}, [=, an = a.node(), bn = b.node()](TensorNode<T>& self) {
        if (na) detail::accumulate(an, self.grad.data(), self.grad.size());
        if (nb) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        fail("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    const bool na = a.requires_grad(), nb = b.requires_grad();
    detail::record(out, {a, b}, [=, an = a.node(), bn = b.node()](TensorNode<T>& self) {
        if (na) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->values[i];
        }
        if (nb) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->values[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
    if (x.requires_grad()) {
        detail::record(out, {x}, [c, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * c;
        });
    }
    return out;
}

// Reductions accumulate in double, in index order, so closed-form checks hold
// at f32 and runs are bitwise reproducible.
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double s = 0;
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(x.data()[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
    if (x.requires_grad()) {
        detail::record(out, {x}, [xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            const T g = self.grad[0];
            for (auto& v : xn->grad) v += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    double s = 0;
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(x.data()[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n)));
    if (x.requires_grad()) {
        detail::record(out, {x}, [n, xn = x.node()](TensorNode<T>& self) {
            xn->ensure_grad();
            const T g = self.grad[0] / static_cast<T>(n);
            for (auto& v : xn->grad) v += g;
        });
    }
    return out;
}

// -------------------------------------------------------------------------
// Scalar losses
// -------------------------------------------------------------------------

// Mean absolute difference. Subgradient at 0 is taken as 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        fail("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
             shape_str(target.shape()));
    const std::int64_t n = pred.size();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i)
        s += std::abs(static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n)));
    if (!std::isfinite(static_cast<double>(out.item())))
        throw std::runtime_error("l1_loss: non-finite value");
    const bool np = pred.requires_grad(), nt = target.requires_grad();
    detail::record(out, {pred, target},
                   [=, pn = pred.node(), tn = target.node()](TensorNode<T>& self) {
        const T g = self.grad[0] / static_cast<T>(n);
        if (np) pn->ensure_grad();
        if (nt) tn->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const T d = pn->values[i] - tn->values[i];
            const T s0 = d > T(0) ? g : (d < T(0) ? -g : T(0));
            if (np) pn->grad[i] += s0;
            if (nt) tn->grad[i] -= s0;
        }
    });
    return out;
}

// Mean of -[t log p + (1-t) log(1-p)]; p clamped to [1e-7, 1-1e-7] so early
// GAN steps cannot hit log(0).
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        fail("bce_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
             shape_str(target.shape()));
    const T lo = T(1e-7), hi = T(1) - T(1e-7);
    const std::int64_t n = pred.size();
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T p = std::min(hi, std::max(lo, pred.data()[i]));
        const double t = static_cast<double>(target.data()[i]);
        s += -(t * std::log(static_cast<double>(p)) +
               (1.0 - t) * std::log(1.0 - static_cast<double>(p)));
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n)));
    if (!std::isfinite(static_cast<double>(out.item())))
        throw std::runtime_error("bce_loss: non-finite value");
    const bool np = pred.requires_grad(), nt = target.requires_grad();
    detail::record(out, {pred, target},
                   [=, pn = pred.node(), tn = target.node()](TensorNode<T>& self) {
        const T g = self.grad[0] / static_cast<T>(n);
        if (np) pn->ensure_grad();
        if (nt) tn->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const T praw = pn->values[i];
            const T p = std::min(hi, std::max(lo, praw));
            const T t = tn->values[i];
            if (np && praw >= lo && praw <= hi)
                pn->grad[i] += g * ((T(1) - t) / (T(1) - p) - t / p);
            if (nt) tn->grad[i] += g * (std::log(T(1) - p) - std::log(p));
        }
    });
    return out;
}

enum class LossKind { l1, bce };

template <typename T>
Tensor<T> scalar_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target) {
    return kind == LossKind::l1 ? l1_loss(pred, target) : bce_loss(pred, target);
}

}  // namespace hf

#endif  // HF_OPS_HPP
