#pragma once

// Tiled lowering of depthwise convolutions to blocked matrix products.
//
// For one channel and one output tile, the convolution is the product of a
// patch matrix (one row per output pixel, one column per kernel tap) with the
// kernel vector. The patch matrix is never duplicated K times: its rows are
// overlapping windows of a gathered, zero-padded input block held in the
// workspace, so each column of the product becomes a strided axpy over that
// block. Taps are visited in row-major (u, v) order for every output element,
// which fixes the accumulation order independently of threads and tiles.

#include <cstdint>

#include "parc2/ops.hpp"

namespace parc2 {

inline constexpr std::size_t kDefaultWorkspaceBytes = 256 * 1024;

struct LoweringPlan {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t kh = 0, kw = 0;
  std::size_t tile_h = 0, tile_w = 0;
  std::size_t tiles_y = 0, tiles_x = 0;
  std::size_t channel_block = 1;  // channels per parallel work item
  std::size_t patch_rows = 0;     // tile_h * tile_w output pixels per tile
  std::size_t patch_cols = 0;     // kh * kw taps
  std::size_t elem_bytes = sizeof(float);
  std::size_t workspace_bytes = 0; // gathered block for a full tile
  std::size_t workspace_limit = kDefaultWorkspaceBytes;
  std::uint64_t macs = 0; // per batch item: channels * H * W * kh * kw

  bool matches(std::size_t c, std::size_t h, std::size_t w, std::size_t rows,
               std::size_t cols) const {
    return c == channels && h == height && w == width && rows == kh && cols == kw;
  }
};

/// Picks the largest output tile whose gathered input block
/// (tile_h + kh - 1) x (tile_w + kw - 1) fits the workspace budget. Tiles
/// shrink by halving the longer side; edge tiles are clipped.
inline LoweringPlan plan_lowering(std::size_t channels, std::size_t height, std::size_t width,
                                  std::size_t kh, std::size_t kw,
                                  std::size_t workspace_limit = kDefaultWorkspaceBytes,
                                  std::size_t elem_bytes = sizeof(float)) {
  if (channels == 0 || height == 0 || width == 0)
    throw DimensionError("plan_lowering: degenerate feature size");
  if (kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0)
    throw DimensionError(detail::concat("plan_lowering: kernel extents must be odd, got ", kh,
                                        "x", kw));
  LoweringPlan p;
  p.channels = channels;
  p.height = height;
  p.width = width;
  p.kh = kh;
  p.kw = kw;
  p.elem_bytes = elem_bytes;
  p.workspace_limit = workspace_limit;
  auto block_bytes = [&](std::size_t th, std::size_t tw) {
    return (th + kh - 1) * (tw + kw - 1) * elem_bytes;
  };
  std::size_t th = height, tw = width;
  while (block_bytes(th, tw) > workspace_limit && (th > 1 || tw > 1)) {
    if (th >= tw)
      th = (th + 1) / 2;
    else
      tw = (tw + 1) / 2;
  }
  if (block_bytes(th, tw) > workspace_limit)
    throw DimensionError("plan_lowering: kernel does not fit the workspace budget");
  p.tile_h = th;
  p.tile_w = tw;
  p.tiles_y = (height + th - 1) / th;
  p.tiles_x = (width + tw - 1) / tw;
  p.patch_rows = th * tw;
  p.patch_cols = kh * kw;
  p.workspace_bytes = block_bytes(th, tw);
  const std::uint64_t per_channel = static_cast<std::uint64_t>(height) * width * kh * kw;
  p.channel_block = static_cast<std::size_t>(
      std::clamp<std::uint64_t>((1u << 16) / std::max<std::uint64_t>(per_channel, 1), 1, channels));
  p.macs = per_channel * channels;
  return p;
}

/// Vertical pass followed by horizontal pass, each lowered on its own.
struct SeparablePlan {
  LoweringPlan vertical;
  LoweringPlan horizontal;
  std::uint64_t macs() const { return vertical.macs + horizontal.macs; }
};

inline SeparablePlan plan_separable(std::size_t channels, std::size_t height, std::size_t width,
                                    std::size_t kh, std::size_t kw,
                                    std::size_t workspace_limit = kDefaultWorkspaceBytes,
                                    std::size_t elem_bytes = sizeof(float)) {
  return {plan_lowering(channels, height, width, kh, 1, workspace_limit, elem_bytes),
          plan_lowering(channels, height, width, 1, kw, workspace_limit, elem_bytes)};
}

namespace detail {

template <class T>
std::uint64_t lowered_tile(std::span<const T> in, std::span<T> out, std::size_t H,
                           std::size_t W, std::span<const T> taps, const LoweringPlan &p,
                           std::size_t y0, std::size_t x0, std::vector<T> &ws) {
  const std::size_t th = std::min(p.tile_h, H - y0);
  const std::size_t tw = std::min(p.tile_w, W - x0);
  const std::size_t bh = th + p.kh - 1, bw = tw + p.kw - 1;
  const std::ptrdiff_t ph = p.kh / 2, pw = p.kw / 2;

  // Gather the receptive field of the tile, zero outside the feature map.
  std::fill(ws.begin(), ws.begin() + bh * bw, T(0));
  for (std::size_t r = 0; r < bh; ++r) {
    const std::ptrdiff_t src_r = static_cast<std::ptrdiff_t>(y0 + r) - ph;
    if (src_r < 0 || src_r >= static_cast<std::ptrdiff_t>(H))
      continue;
    const std::ptrdiff_t c_lo = std::max<std::ptrdiff_t>(0, pw - static_cast<std::ptrdiff_t>(x0));
    const std::ptrdiff_t c_hi = std::min<std::ptrdiff_t>(
        bw, static_cast<std::ptrdiff_t>(W) + pw - static_cast<std::ptrdiff_t>(x0));
    for (std::ptrdiff_t c = c_lo; c < c_hi; ++c)
      ws[r * bw + c] = in[src_r * W + x0 + c - pw];
  }

  // Patch matrix (th*tw x kh*kw) times kernel vector, one tap column at a time.
  std::uint64_t executed = 0;
  for (std::size_t i = 0; i < th; ++i)
    std::fill_n(out.data() + (y0 + i) * W + x0, tw, T(0));
  for (std::size_t u = 0; u < p.kh; ++u)
    for (std::size_t v = 0; v < p.kw; ++v) {
      const T kv = taps[u * p.kw + v];
      for (std::size_t i = 0; i < th; ++i) {
        const T *src = ws.data() + (i + u) * bw + v;
        T *dst = out.data() + (y0 + i) * W + x0;
        for (std::size_t j = 0; j < tw; ++j)
          dst[j] += kv * src[j];
      }
      executed += th * tw;
    }
  return executed;
}

} // namespace detail

/// Depthwise "same" convolution through the lowering plan. When mac_counter
/// is given, the executed multiply-accumulates are added to it.
template <class T>
FeatureMap<T> fast_dwconv(const FeatureMap<T> &x, const Dense2DKernel<T> &k,
                          const LoweringPlan &plan, std::uint64_t *mac_counter = nullptr) {
  const Shape4 s = x.shape();
  if (!plan.matches(s.c, s.h, s.w, k.kh, k.kw) || k.channels != s.c)
    throw DimensionError(detail::concat("fast_dwconv: plan for C=", plan.channels, " ",
                                        plan.height, "x", plan.width, " kernel ", plan.kh, "x",
                                        plan.kw, " does not match input ", s, " kernel ", k.kh,
                                        "x", k.kw));
  FeatureMap<T> out(s);
  const std::size_t groups = (s.c + plan.channel_block - 1) / plan.channel_block;
  const std::size_t ws_elems = (plan.tile_h + plan.kh - 1) * (plan.tile_w + plan.kw - 1);
  std::atomic<std::uint64_t> executed{0};
  parallel_for(s.n * groups, [&](std::size_t job) {
    const std::size_t n = job / groups, g = job % groups;
    std::vector<T> ws(ws_elems);
    std::uint64_t local = 0;
    const std::size_t c_end = std::min(s.c, (g + 1) * plan.channel_block);
    for (std::size_t c = g * plan.channel_block; c < c_end; ++c)
      for (std::size_t ty = 0; ty < plan.tiles_y; ++ty)
        for (std::size_t tx = 0; tx < plan.tiles_x; ++tx)
          local += detail::lowered_tile<T>(x.plane(n, c), out.plane(n, c), s.h, s.w, k.slice(c),
                                           plan, ty * plan.tile_h, tx * plan.tile_w, ws);
    executed += local;
  });
  detail::add_channel_bias<T>(out, k.bias);
  if (mac_counter)
    *mac_counter += executed.load();
  return out;
}

template <class T> Dense2DKernel<T> vertical_kernel(const OversizedKernelPair<T> &k) {
  Dense2DKernel<T> d(k.channels, k.len_h(), 1);
  d.k = k.k_h;
  return d;
}

template <class T> Dense2DKernel<T> horizontal_kernel(const OversizedKernelPair<T> &k) {
  Dense2DKernel<T> d(k.channels, 1, k.len_w(), !k.bias.empty());
  d.k = k.k_w;
  d.bias = k.bias;
  return d;
}

/// Oversized convolution as two lowered 1D passes.
template <class T>
FeatureMap<T> fast_parc_oversized(const FeatureMap<T> &x, const OversizedKernelPair<T> &k,
                                  const SeparablePlan &plan, std::uint64_t *mac_counter = nullptr) {
  detail::check_pair_binding(x, k, "fast_parc_oversized");
  return fast_dwconv(fast_dwconv(x, vertical_kernel(k), plan.vertical, mac_counter),
                     horizontal_kernel(k), plan.horizontal, mac_counter);
}

} // namespace parc2
