#pragma once

// Oversized separable convolution, the local 7x7 depthwise convolution, kernel
// composition / fusion for reparameterization, kernel zooming, and the
// matching vector-Jacobian products.
//
// All convolutions here are depthwise cross-correlations (no kernel flip) with
// zero extension outside the feature map.

#include "parc2/tensor.hpp"

namespace parc2 {

/// Per-channel vertical (2H-1) and horizontal (2W-1) kernels bound to an
/// H x W feature size. Logical tap s in [-(H-1), H-1] is stored at s + H - 1.
template <class T> struct OversizedKernelPair {
  std::size_t channels = 0;
  std::size_t height = 0; // bound feature height H
  std::size_t width = 0;  // bound feature width W
  std::vector<T> k_h;     // channels x (2H-1)
  std::vector<T> k_w;     // channels x (2W-1)
  std::vector<T> bias;    // empty, or one value per channel after the horizontal pass

  OversizedKernelPair() = default;
  OversizedKernelPair(std::size_t c, std::size_t h, std::size_t w, bool with_bias = false)
      : channels(c), height(h), width(w), k_h(c * (2 * h - 1), T(0)),
        k_w(c * (2 * w - 1), T(0)), bias(with_bias ? c : 0, T(0)) {
    if (h == 0 || w == 0)
      throw DimensionError("OversizedKernelPair: feature size must be >= 1");
  }

  std::size_t len_h() const { return 2 * height - 1; }
  std::size_t len_w() const { return 2 * width - 1; }

  T &tap_h(std::size_t c, std::ptrdiff_t s) { return k_h[c * len_h() + s + height - 1]; }
  T tap_h(std::size_t c, std::ptrdiff_t s) const { return k_h[c * len_h() + s + height - 1]; }
  T &tap_w(std::size_t c, std::ptrdiff_t t) { return k_w[c * len_w() + t + width - 1]; }
  T tap_w(std::size_t c, std::ptrdiff_t t) const { return k_w[c * len_w() + t + width - 1]; }

  std::span<const T> row_h(std::size_t c) const { return {k_h.data() + c * len_h(), len_h()}; }
  std::span<const T> row_w(std::size_t c) const { return {k_w.data() + c * len_w(), len_w()}; }

  static OversizedKernelPair delta(std::size_t c, std::size_t h, std::size_t w) {
    OversizedKernelPair k(c, h, w);
    for (std::size_t i = 0; i < c; ++i) {
      k.tap_h(i, 0) = T(1);
      k.tap_w(i, 0) = T(1);
    }
    return k;
  }

  std::size_t param_count() const { return k_h.size() + k_w.size() + bias.size(); }
};

/// Depthwise kernel with odd extents, centre-indexed, applied with "same"
/// zero padding ((kh-1)/2, (kw-1)/2). Also represents the 1D passes
/// (kw == 1 or kh == 1) and reparameterized fused kernels.
template <class T> struct Dense2DKernel {
  std::size_t channels = 0, kh = 0, kw = 0;
  std::vector<T> k;    // channels x kh x kw
  std::vector<T> bias; // empty or per channel

  Dense2DKernel() = default;
  Dense2DKernel(std::size_t c, std::size_t rows, std::size_t cols, bool with_bias = false)
      : channels(c), kh(rows), kw(cols), k(c * rows * cols, T(0)), bias(with_bias ? c : 0, T(0)) {
    if (rows % 2 == 0 || cols % 2 == 0)
      throw DimensionError(detail::concat("Dense2DKernel: extents must be odd, got ", rows, "x",
                                          cols));
  }

  T &at(std::size_t c, std::size_t u, std::size_t v) { return k[(c * kh + u) * kw + v]; }
  T at(std::size_t c, std::size_t u, std::size_t v) const { return k[(c * kh + u) * kw + v]; }
  std::span<const T> slice(std::size_t c) const { return {k.data() + c * kh * kw, kh * kw}; }

  static Dense2DKernel delta(std::size_t c, std::size_t rows, std::size_t cols) {
    Dense2DKernel d(c, rows, cols);
    for (std::size_t i = 0; i < c; ++i)
      d.at(i, rows / 2, cols / 2) = T(1);
    return d;
  }
};

template <class T> struct LocalKernel7 {
  static constexpr std::size_t kSize = 7;
  std::size_t channels = 0;
  std::vector<T> k;    // channels x 7 x 7
  std::vector<T> bias; // empty or per channel

  LocalKernel7() = default;
  explicit LocalKernel7(std::size_t c, bool with_bias = false)
      : channels(c), k(c * kSize * kSize, T(0)), bias(with_bias ? c : 0, T(0)) {}

  T &at(std::size_t c, std::size_t u, std::size_t v) { return k[(c * kSize + u) * kSize + v]; }
  T at(std::size_t c, std::size_t u, std::size_t v) const { return k[(c * kSize + u) * kSize + v]; }

  Dense2DKernel<T> as_dense() const {
    Dense2DKernel<T> d(channels, kSize, kSize, !bias.empty());
    d.k = k;
    d.bias = bias;
    return d;
  }

  static LocalKernel7 delta(std::size_t c) {
    LocalKernel7 l(c);
    for (std::size_t i = 0; i < c; ++i)
      l.at(i, 3, 3) = T(1);
    return l;
  }

  std::size_t param_count() const { return k.size() + bias.size(); }
};

template <class T> struct KernelGrads {
  FeatureMap<T> grad_input;
  std::vector<T> grad_kernel;
  std::vector<T> grad_bias; // empty when the forward pass has no bias
};

namespace detail {

template <class T> void check_pair_binding(const FeatureMap<T> &x, const OversizedKernelPair<T> &k,
                                           const char *op) {
  if (k.channels != x.channels())
    throw DimensionError(concat(op, ": kernel has ", k.channels, " channels, input has ",
                                x.channels()));
  if (k.height != x.height() || k.width != x.width())
    throw DimensionError(concat(op, ": kernel bound to ", k.height, "x", k.width,
                                " but input is ", x.height(), "x", x.width(),
                                "; resize the kernel first"));
}

template <class T> void add_channel_bias(FeatureMap<T> &y, std::span<const T> bias) {
  if (bias.empty())
    return;
  for (std::size_t n = 0; n < y.batch(); ++n)
    for (std::size_t c = 0; c < y.channels(); ++c)
      for (T &v : y.plane(n, c))
        v += bias[c];
}

// Y[i,:] = sum_s taps[s] * X[i+s,:] over the valid range of s (vertical pass).
template <class T>
void vertical_pass_plane(std::span<const T> x, std::span<T> y, std::size_t h, std::size_t w,
                         std::span<const T> taps) {
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(h);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  for (std::ptrdiff_t i = 0; i < H; ++i) {
    T *yr = y.data() + i * w;
    std::fill(yr, yr + w, T(0));
    const std::ptrdiff_t s_lo = std::max(-half, -i), s_hi = std::min(half, H - 1 - i);
    for (std::ptrdiff_t s = s_lo; s <= s_hi; ++s) {
      const T kv = taps[s + half];
      const T *xr = x.data() + (i + s) * w;
      for (std::size_t j = 0; j < w; ++j)
        yr[j] += kv * xr[j];
    }
  }
}

template <class T>
void horizontal_pass_plane(std::span<const T> x, std::span<T> y, std::size_t h, std::size_t w,
                           std::span<const T> taps) {
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  for (std::size_t i = 0; i < h; ++i) {
    const T *xr = x.data() + i * w;
    T *yr = y.data() + i * w;
    for (std::ptrdiff_t j = 0; j < W; ++j) {
      const std::ptrdiff_t t_lo = std::max(-half, -j), t_hi = std::min(half, W - 1 - j);
      T acc = 0;
      for (std::ptrdiff_t t = t_lo; t <= t_hi; ++t)
        acc += taps[t + half] * xr[j + t];
      yr[j] = acc;
    }
  }
}

} // namespace detail

/// Vertical oversized pass: Y[i,j] = sum_s k_h[s] X[i+s,j]. No bias.
template <class T>
FeatureMap<T> parc_oh(const FeatureMap<T> &x, const OversizedKernelPair<T> &k) {
  detail::check_pair_binding(x, k, "parc_oh");
  FeatureMap<T> y(x.shape());
  const Shape4 s = x.shape();
  parallel_for(s.n * s.c, [&](std::size_t job) {
    const std::size_t n = job / s.c, c = job % s.c;
    detail::vertical_pass_plane<T>(x.plane(n, c), y.plane(n, c), s.h, s.w, k.row_h(c));
  });
  return y;
}

/// Horizontal oversized pass: Z[i,j] = sum_t k_w[t] Y[i,j+t], then bias.
template <class T>
FeatureMap<T> parc_ow(const FeatureMap<T> &y, const OversizedKernelPair<T> &k) {
  detail::check_pair_binding(y, k, "parc_ow");
  FeatureMap<T> z(y.shape());
  const Shape4 s = y.shape();
  parallel_for(s.n * s.c, [&](std::size_t job) {
    const std::size_t n = job / s.c, c = job % s.c;
    detail::horizontal_pass_plane<T>(y.plane(n, c), z.plane(n, c), s.h, s.w, k.row_w(c));
  });
  detail::add_channel_bias<T>(z, k.bias);
  return z;
}

/// Full oversized convolution, vertical pass first.
template <class T>
FeatureMap<T> parc_oversized(const FeatureMap<T> &x, const OversizedKernelPair<T> &k) {
  return parc_ow(parc_oh(x, k), k);
}

/// Same operator with the horizontal pass first; bias still applied last.
template <class T>
FeatureMap<T> parc_oversized_wh(const FeatureMap<T> &x, const OversizedKernelPair<T> &k) {
  OversizedKernelPair<T> no_bias = k;
  no_bias.bias.clear();
  FeatureMap<T> out = parc_oh(parc_ow(x, no_bias), k);
  detail::add_channel_bias<T>(out, k.bias);
  return out;
}

/// Depthwise "same" convolution with an arbitrary odd kernel.
template <class T>
FeatureMap<T> depthwise_conv2d(const FeatureMap<T> &x, const Dense2DKernel<T> &k) {
  const Shape4 s = x.shape();
  if (k.channels != s.c)
    throw DimensionError(detail::concat("depthwise_conv2d: kernel has ", k.channels,
                                        " channels, input has ", s.c));
  FeatureMap<T> out(s);
  const std::ptrdiff_t H = s.h, W = s.w;
  const std::ptrdiff_t ph = k.kh / 2, pw = k.kw / 2;
  parallel_for(s.n * s.c, [&](std::size_t job) {
    const std::size_t n = job / s.c, c = job % s.c;
    auto xp = x.plane(n, c);
    auto op = out.plane(n, c);
    auto taps = k.slice(c);
    for (std::ptrdiff_t i = 0; i < H; ++i) {
      T *orow = op.data() + i * W;
      for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(k.kh); ++u) {
        const std::ptrdiff_t r = i + u - ph;
        if (r < 0 || r >= H)
          continue;
        const T *xrow = xp.data() + r * W;
        for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(k.kw); ++v) {
          const T kv = taps[u * k.kw + v];
          const std::ptrdiff_t off = v - pw;
          const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(W, W - off);
          for (std::ptrdiff_t j = j_lo; j < j_hi; ++j)
            orow[j] += kv * xrow[j + off];
        }
      }
    }
  });
  detail::add_channel_bias<T>(out, k.bias);
  return out;
}

template <class T> FeatureMap<T> dwconv7x7(const FeatureMap<T> &x, const LocalKernel7<T> &k) {
  if (k.channels != x.channels())
    throw DimensionError("dwconv7x7: channel mismatch");
  return depthwise_conv2d(x, k.as_dense());
}

/// Rank-1 dense kernel K[c,s,t] = k_h[c,s] * k_w[c,t]; the pair's bias carries over.
template <class T> Dense2DKernel<T> compose_2d(const OversizedKernelPair<T> &k) {
  Dense2DKernel<T> d(k.channels, k.len_h(), k.len_w(), !k.bias.empty());
  for (std::size_t c = 0; c < k.channels; ++c) {
    auto kh = k.row_h(c);
    auto kw = k.row_w(c);
    for (std::size_t u = 0; u < d.kh; ++u)
      for (std::size_t v = 0; v < d.kw; ++v)
        d.at(c, u, v) = kh[u] * kw[v];
  }
  d.bias = k.bias;
  return d;
}

/// Adds the 7x7 local kernel into the centred 7x7 window of a dense kernel.
/// A dense kernel narrower than 7 on either axis is zero-padded to 7 first.
/// Biases add.
template <class T>
Dense2DKernel<T> fuse_local_global(const Dense2DKernel<T> &k2d, const LocalKernel7<T> &k7) {
  constexpr std::size_t K = LocalKernel7<T>::kSize;
  if (k2d.channels != k7.channels)
    throw DimensionError("fuse_local_global: channel mismatch");
  const std::size_t kh = std::max(k2d.kh, K), kw = std::max(k2d.kw, K);
  Dense2DKernel<T> fused(k2d.channels, kh, kw);
  fused.bias = k2d.bias;
  const std::size_t d0 = kh / 2 - k2d.kh / 2, e0 = kw / 2 - k2d.kw / 2;
  const std::size_t r0 = kh / 2 - K / 2, c0 = kw / 2 - K / 2;
  for (std::size_t c = 0; c < k2d.channels; ++c) {
    for (std::size_t u = 0; u < k2d.kh; ++u)
      for (std::size_t v = 0; v < k2d.kw; ++v)
        fused.at(c, d0 + u, e0 + v) = k2d.at(c, u, v);
    for (std::size_t u = 0; u < K; ++u)
      for (std::size_t v = 0; v < K; ++v)
        fused.at(c, r0 + u, c0 + v) += k7.at(c, u, v);
  }
  if (!k7.bias.empty()) {
    if (fused.bias.empty())
      fused.bias.assign(k2d.channels, T(0));
    for (std::size_t c = 0; c < k2d.channels; ++c)
      fused.bias[c] += k7.bias[c];
  }
  return fused;
}

namespace detail {

// Align-corners linear resampling of one row of taps.
template <class T> void resample_row(std::span<const T> src, std::span<T> dst) {
  const std::size_t n = src.size(), m = dst.size();
  if (m == 1) {
    dst[0] = src[n / 2];
    return;
  }
  if (n == 1) {
    std::fill(dst.begin(), dst.end(), src[0]);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    // Exact rational position i*(n-1)/(m-1) keeps the endpoints exact.
    const std::size_t num = i * (n - 1);
    const std::size_t lo = num / (m - 1);
    const std::size_t rem = num % (m - 1);
    if (rem == 0) {
      dst[i] = src[lo];
      continue;
    }
    const double frac = static_cast<double>(rem) / static_cast<double>(m - 1);
    dst[i] = static_cast<T>((1.0 - frac) * static_cast<double>(src[lo]) +
                            frac * static_cast<double>(src[lo + 1]));
  }
}

} // namespace detail

/// Rebinds an oversized pair to a new feature size by resampling each 1D
/// kernel to 2*new_h-1 / 2*new_w-1 taps (align-corners linear).
template <class T>
OversizedKernelPair<T> resize_kernel_linear(const OversizedKernelPair<T> &k, std::size_t new_h,
                                            std::size_t new_w) {
  if (new_h == 0 || new_w == 0)
    throw DimensionError("resize_kernel_linear: target size must be >= 1");
  OversizedKernelPair<T> out(k.channels, new_h, new_w, false);
  out.bias = k.bias;
  for (std::size_t c = 0; c < k.channels; ++c) {
    detail::resample_row<T>(k.row_h(c), {out.k_h.data() + c * out.len_h(), out.len_h()});
    detail::resample_row<T>(k.row_w(c), {out.k_w.data() + c * out.len_w(), out.len_w()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vector-Jacobian products

/// grad_input[i'] = sum_i g[i] k_h[i'-i]; grad_kernel[c,s] = sum g[n,c,i,j] X[n,c,i+s,j].
template <class T>
KernelGrads<T> parc_oh_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x,
                           const OversizedKernelPair<T> &k) {
  detail::check_pair_binding(x, k, "parc_oh_vjp");
  require_same_shape(grad_out, x, "parc_oh_vjp");
  const Shape4 s = x.shape();
  const std::ptrdiff_t H = s.h, half = H - 1;
  KernelGrads<T> g{FeatureMap<T>(s), std::vector<T>(k.k_h.size(), T(0)), {}};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto go = grad_out.plane(n, c);
      auto xp = x.plane(n, c);
      auto gi = g.grad_input.plane(n, c);
      T *gk = g.grad_kernel.data() + c * k.len_h();
      for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t sidx = std::max(-half, -i); sidx <= std::min(half, H - 1 - i); ++sidx) {
          const T kv = k.tap_h(c, sidx);
          T acc = 0;
          for (std::size_t j = 0; j < s.w; ++j) {
            gi[(i + sidx) * s.w + j] += kv * go[i * s.w + j];
            acc += go[i * s.w + j] * xp[(i + sidx) * s.w + j];
          }
          gk[sidx + half] += acc;
        }
    }
  return g;
}

template <class T>
KernelGrads<T> parc_ow_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &y,
                           const OversizedKernelPair<T> &k) {
  detail::check_pair_binding(y, k, "parc_ow_vjp");
  require_same_shape(grad_out, y, "parc_ow_vjp");
  const Shape4 s = y.shape();
  const std::ptrdiff_t W = s.w, half = W - 1;
  KernelGrads<T> g{FeatureMap<T>(s), std::vector<T>(k.k_w.size(), T(0)),
                   std::vector<T>(k.bias.size(), T(0))};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto go = grad_out.plane(n, c);
      auto yp = y.plane(n, c);
      auto gi = g.grad_input.plane(n, c);
      T *gk = g.grad_kernel.data() + c * k.len_w();
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j) {
          const T gv = go[i * s.w + j];
          if (!g.grad_bias.empty())
            g.grad_bias[c] += gv;
          for (std::ptrdiff_t t = std::max(-half, -j); t <= std::min(half, W - 1 - j); ++t) {
            gi[i * s.w + j + t] += k.tap_w(c, t) * gv;
            gk[t + half] += gv * yp[i * s.w + j + t];
          }
        }
    }
  return g;
}

/// Gradients of parc_oversized. grad_kernel holds the k_h grads followed by
/// the k_w grads.
template <class T>
KernelGrads<T> parc_oversized_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x,
                                  const OversizedKernelPair<T> &k) {
  const FeatureMap<T> mid = parc_oh(x, k);
  KernelGrads<T> gw = parc_ow_vjp(grad_out, mid, k);
  KernelGrads<T> gh = parc_oh_vjp(gw.grad_input, x, k);
  KernelGrads<T> out{std::move(gh.grad_input), std::move(gh.grad_kernel), std::move(gw.grad_bias)};
  out.grad_kernel.insert(out.grad_kernel.end(), gw.grad_kernel.begin(), gw.grad_kernel.end());
  return out;
}

template <class T>
KernelGrads<T> depthwise_conv2d_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x,
                                    const Dense2DKernel<T> &k) {
  require_same_shape(grad_out, x, "depthwise_conv2d_vjp");
  if (k.channels != x.channels())
    throw DimensionError("depthwise_conv2d_vjp: channel mismatch");
  const Shape4 s = x.shape();
  const std::ptrdiff_t H = s.h, W = s.w, ph = k.kh / 2, pw = k.kw / 2;
  KernelGrads<T> g{FeatureMap<T>(s), std::vector<T>(k.k.size(), T(0)),
                   std::vector<T>(k.bias.size(), T(0))};
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto go = grad_out.plane(n, c);
      auto xp = x.plane(n, c);
      auto gi = g.grad_input.plane(n, c);
      T *gk = g.grad_kernel.data() + c * k.kh * k.kw;
      if (!g.grad_bias.empty())
        for (T v : go)
          g.grad_bias[c] += v;
      for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(k.kh); ++u)
        for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(k.kw); ++v) {
          const T kv = k.at(c, u, v);
          T acc = 0;
          for (std::ptrdiff_t i = 0; i < H; ++i) {
            const std::ptrdiff_t r = i + u - ph;
            if (r < 0 || r >= H)
              continue;
            for (std::ptrdiff_t j = 0; j < W; ++j) {
              const std::ptrdiff_t col = j + v - pw;
              if (col < 0 || col >= W)
                continue;
              acc += go[i * W + j] * xp[r * W + col];
              gi[r * W + col] += kv * go[i * W + j];
            }
          }
          gk[u * k.kw + v] += acc;
        }
    }
  return g;
}

template <class T>
KernelGrads<T> dwconv7x7_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x,
                             const LocalKernel7<T> &k) {
  return depthwise_conv2d_vjp(grad_out, x, k.as_dense());
}

} // namespace parc2
