#pragma once

// Spatial / channel bifurcate gate units, the ParC V2 block, four-stage model
// assembly, resolution adaptation and parameter / MAC accounting.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "parc2/lowering.hpp"

namespace parc2 {

// ---------------------------------------------------------------------------
// Parameters

template <class T> struct SpatialBGUParams {
  PointwiseParams<T> pw_in;   // channel fusion ahead of the two spatial branches
  LocalKernel7<T> local;
  OversizedKernelPair<T> oversized;
  PointwiseParams<T> pw_mid;  // ParC branch output projection
  PointwiseParams<T> pw_gate; // gate branch
  PointwiseParams<T> pw_out;  // fusion after the gate product

  /// Set by reparameterization: local + oversized merged into one kernel.
  std::optional<Dense2DKernel<T>> fused;

  SpatialBGUParams() = default;
  SpatialBGUParams(std::size_t c, std::size_t h, std::size_t w)
      : pw_in(c, c), local(c, true), oversized(c, h, w, true), pw_mid(c, c), pw_gate(c, c),
        pw_out(c, c) {}
};

template <class T> struct ChannelBGUParams {
  PointwiseParams<T> w1; // C -> hidden, GELU branch
  PointwiseParams<T> w2; // C -> hidden, linear branch
  PointwiseParams<T> w3; // hidden -> C
  double alpha_tilde = 2.5;

  ChannelBGUParams() = default;
  ChannelBGUParams(std::size_t c, std::size_t hidden, double alpha)
      : w1(c, hidden), w2(c, hidden), w3(hidden, c), alpha_tilde(alpha) {}

  std::size_t param_count() const {
    return w1.param_count() + w2.param_count() + w3.param_count();
  }
};

/// Two-layer FFN baseline (C -> alpha C -> C with GELU between).
template <class T> struct FfnParams {
  PointwiseParams<T> w1;
  PointwiseParams<T> w2;

  FfnParams() = default;
  FfnParams(std::size_t c, std::size_t hidden) : w1(c, hidden), w2(hidden, c) {}
  std::size_t param_count() const { return w1.param_count() + w2.param_count(); }
};

template <class T> struct BlockParams {
  NormParams<T> norm1, norm2;
  SpatialBGUParams<T> spatial;
  ChannelBGUParams<T> channel;
  std::vector<T> res_scale1, res_scale2;

  BlockParams() = default;
  BlockParams(std::size_t c, std::size_t h, std::size_t w, std::size_t hidden, double alpha)
      : norm1(c), norm2(c), spatial(c, h, w), channel(c, hidden, alpha), res_scale1(c, T(1)),
        res_scale2(c, T(1)) {}
};

/// Non-overlapping k x k convolution with stride k (stem and downsampling).
template <class T> struct PatchConv {
  std::size_t in = 0, out = 0, k = 0;
  std::vector<T> weight; // out x in x k x k
  std::vector<T> bias;

  PatchConv() = default;
  PatchConv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel)
      : in(in_ch), out(out_ch), k(kernel), weight(out_ch * in_ch * kernel * kernel, T(0)),
        bias(out_ch, T(0)) {}
};

// ---------------------------------------------------------------------------
// Operators

template <class T>
FeatureMap<T> patchify(const FeatureMap<T> &x, const PatchConv<T> &p) {
  const Shape4 s = x.shape();
  if (s.c != p.in)
    throw DimensionError(detail::concat("patchify: expects ", p.in, " channels, got ", s.c));
  if (s.h % p.k != 0 || s.w % p.k != 0)
    throw DimensionError(detail::concat("patchify: ", s.h, "x", s.w, " not divisible by ", p.k));
  const std::size_t oh = s.h / p.k, ow = s.w / p.k;
  FeatureMap<T> out(s.n, p.out, oh, ow);
  parallel_for(s.n * p.out, [&](std::size_t job) {
    const std::size_t n = job / p.out, co = job % p.out;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        T acc = p.bias[co];
        for (std::size_t ci = 0; ci < p.in; ++ci) {
          const T *wk = p.weight.data() + (co * p.in + ci) * p.k * p.k;
          for (std::size_t u = 0; u < p.k; ++u)
            for (std::size_t v = 0; v < p.k; ++v)
              acc += wk[u * p.k + v] * x(n, ci, i * p.k + u, j * p.k + v);
        }
        out(n, co, i, j) = acc;
      }
  });
  return out;
}

/// Uniform local-global convolution: pointwise in, 7x7 depthwise and
/// oversized separable branches summed, pointwise out. Uses the fused
/// kernel through the lowering engine when one is present.
template <class T>
FeatureMap<T> parc_branch(const FeatureMap<T> &x, const SpatialBGUParams<T> &p) {
  const FeatureMap<T> u = pointwise_conv(x, p.pw_in);
  if (p.fused) {
    const LoweringPlan plan = plan_lowering(u.channels(), u.height(), u.width(), p.fused->kh,
                                            p.fused->kw, kDefaultWorkspaceBytes, sizeof(T));
    return pointwise_conv(fast_dwconv(u, *p.fused, plan), p.pw_mid);
  }
  return pointwise_conv(add(dwconv7x7(u, p.local), parc_oversized(u, p.oversized)), p.pw_mid);
}

template <class T>
FeatureMap<T> spatial_bgu(const FeatureMap<T> &x, const SpatialBGUParams<T> &p) {
  const FeatureMap<T> feat = parc_branch(x, p);
  const FeatureMap<T> gate = pointwise_conv(x, p.pw_gate);
  return pointwise_conv(multiply(feat, gate), p.pw_out);
}

template <class T>
FeatureMap<T> channel_bgu(const FeatureMap<T> &x, const ChannelBGUParams<T> &p) {
  const FeatureMap<T> act = gelu(pointwise_conv(x, p.w1));
  const FeatureMap<T> lin = pointwise_conv(x, p.w2);
  return pointwise_conv(multiply(act, lin), p.w3);
}

template <class T> FeatureMap<T> ffn_reference(const FeatureMap<T> &x, const FfnParams<T> &p) {
  return pointwise_conv(gelu(pointwise_conv(x, p.w1)), p.w2);
}

/// Pre-norm block with two ResScale-weighted residual branches.
template <class T>
FeatureMap<T> parcv2_block(const FeatureMap<T> &x, const BlockParams<T> &p) {
  const FeatureMap<T> h =
      scaled_residual<T>(x, p.res_scale1, spatial_bgu(channel_layernorm(x, p.norm1), p.spatial));
  return scaled_residual<T>(h, p.res_scale2,
                            channel_bgu(channel_layernorm(h, p.norm2), p.channel));
}

/// 3 a C^2 + 2 a C + C, with a C rounded to the nearest integer.
inline std::uint64_t channel_bgu_param_formula(std::uint64_t c, double alpha_tilde) {
  const std::uint64_t hidden = static_cast<std::uint64_t>(std::llround(alpha_tilde * c));
  return 3 * hidden * c + 2 * hidden + c;
}

/// 2 a C^2 + a C + C
inline std::uint64_t ffn_param_formula(std::uint64_t c, double alpha) {
  const std::uint64_t hidden = static_cast<std::uint64_t>(std::llround(alpha * c));
  return 2 * hidden * c + hidden + c;
}

// ---------------------------------------------------------------------------
// Model configuration

struct ModelConfig {
  std::string variant = "custom";
  std::array<std::size_t, 4> channels{};
  std::array<std::size_t, 4> blocks{};
  std::size_t input_h = 224, input_w = 224;
  double alpha_tilde = 2.5;
  std::size_t num_classes = 1000;
  std::size_t in_channels = 3;

  static constexpr std::array<std::size_t, 4> kStageStride{4, 8, 16, 32};

  std::size_t stage_h(std::size_t s) const { return input_h / kStageStride[s]; }
  std::size_t stage_w(std::size_t s) const { return input_w / kStageStride[s]; }
  std::size_t hidden(std::size_t s) const {
    return static_cast<std::size_t>(std::llround(alpha_tilde * static_cast<double>(channels[s])));
  }

  void validate() const {
    for (std::size_t s = 0; s < 4; ++s) {
      if (channels[s] == 0)
        throw DimensionError(detail::concat("ModelConfig: stage ", s, " has zero channels"));
      if (stage_h(s) < 1 || stage_w(s) < 1)
        throw DimensionError(detail::concat("ModelConfig: input ", input_h, "x", input_w,
                                            " leaves stage ", s, " with an empty feature map"));
    }
    if (input_h % 4 != 0 || input_w % 4 != 0)
      throw DimensionError("ModelConfig: input size must be divisible by the stem stride 4");
    for (std::size_t s = 1; s < 4; ++s)
      if (stage_h(s - 1) % 2 != 0 || stage_w(s - 1) % 2 != 0)
        throw DimensionError(detail::concat("ModelConfig: stage ", s - 1, " size ", stage_h(s - 1),
                                            "x", stage_w(s - 1),
                                            " is not divisible by the downsample stride 2"));
    if (!(alpha_tilde > 0))
      throw std::invalid_argument("ModelConfig: alpha_tilde must be positive");
    if (num_classes == 0 || in_channels == 0)
      throw std::invalid_argument("ModelConfig: num_classes and in_channels must be >= 1");
  }

  /// Named variants from the model configuration table.
  static ModelConfig named(const std::string &name, std::size_t input = 224) {
    ModelConfig c;
    c.variant = name;
    c.input_h = c.input_w = input;
    if (name == "XT") {
      c.channels = {48, 96, 192, 320};
      c.blocks = {3, 3, 9, 2};
    } else if (name == "T") {
      c.channels = {64, 128, 320, 512};
      c.blocks = {3, 3, 12, 3};
    } else if (name == "S") {
      c.channels = {64, 128, 320, 512};
      c.blocks = {3, 9, 24, 3};
    } else if (name == "B") {
      c.channels = {96, 192, 384, 576};
      c.blocks = {3, 9, 24, 3};
    } else {
      throw std::invalid_argument("unknown variant '" + name + "' (expected XT, T, S or B)");
    }
    return c;
  }

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

// ---------------------------------------------------------------------------
// Model

template <class T> struct Downsample {
  NormParams<T> norm;
  PatchConv<T> conv;
};

template <class T> struct Stage {
  std::optional<Downsample<T>> downsample;
  std::vector<BlockParams<T>> blocks;
};

template <class T> struct Model {
  ModelConfig config;
  PatchConv<T> stem;
  NormParams<T> stem_norm;
  std::array<Stage<T>, 4> stages;
  NormParams<T> head_norm;
  PointwiseParams<T> head;

  bool fused() const {
    for (const auto &st : stages)
      for (const auto &b : st.blocks)
        if (b.spatial.fused)
          return true;
    return false;
  }
};

/// Calls f(name, std::vector<T>&, shape) for every persistent tensor in a
/// fixed order. Works on const and non-const models.
template <class M, class F> void for_each_tensor(M &m, F &&f) {
  using Shape = std::vector<std::size_t>;
  auto pw = [&](const std::string &base, auto &p) {
    f(base + ".weight", p.weight, Shape{p.out, p.in});
    f(base + ".bias", p.bias, Shape{p.out});
  };
  auto norm = [&](const std::string &base, auto &p) {
    f(base + ".weight", p.gamma, Shape{p.gamma.size()});
    f(base + ".bias", p.beta, Shape{p.beta.size()});
  };
  auto patch = [&](const std::string &base, auto &p) {
    f(base + ".weight", p.weight, Shape{p.out, p.in, p.k, p.k});
    f(base + ".bias", p.bias, Shape{p.out});
  };
  patch("stem.conv", m.stem);
  norm("stem.norm", m.stem_norm);
  for (std::size_t s = 0; s < 4; ++s) {
    auto &st = m.stages[s];
    const std::string sp = "stages." + std::to_string(s);
    if (st.downsample) {
      norm(sp + ".downsample.norm", st.downsample->norm);
      patch(sp + ".downsample.conv", st.downsample->conv);
    }
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      auto &blk = st.blocks[b];
      const std::string bp = sp + ".blocks." + std::to_string(b);
      const std::size_t c = blk.spatial.local.channels;
      norm(bp + ".norm1", blk.norm1);
      pw(bp + ".spatial.pw_in", blk.spatial.pw_in);
      f(bp + ".spatial.local.weight", blk.spatial.local.k, Shape{c, 7, 7});
      f(bp + ".spatial.local.bias", blk.spatial.local.bias, Shape{blk.spatial.local.bias.size()});
      f(bp + ".spatial.oversized.k_h", blk.spatial.oversized.k_h,
        Shape{c, blk.spatial.oversized.len_h()});
      f(bp + ".spatial.oversized.k_w", blk.spatial.oversized.k_w,
        Shape{c, blk.spatial.oversized.len_w()});
      f(bp + ".spatial.oversized.bias", blk.spatial.oversized.bias,
        Shape{blk.spatial.oversized.bias.size()});
      pw(bp + ".spatial.pw_mid", blk.spatial.pw_mid);
      pw(bp + ".spatial.pw_gate", blk.spatial.pw_gate);
      pw(bp + ".spatial.pw_out", blk.spatial.pw_out);
      f(bp + ".res_scale1", blk.res_scale1, Shape{blk.res_scale1.size()});
      norm(bp + ".norm2", blk.norm2);
      pw(bp + ".channel.w1", blk.channel.w1);
      pw(bp + ".channel.w2", blk.channel.w2);
      pw(bp + ".channel.w3", blk.channel.w3);
      f(bp + ".res_scale2", blk.res_scale2, Shape{blk.res_scale2.size()});
    }
  }
  norm("head.norm", m.head_norm);
  pw("head.fc", m.head);
}

namespace detail {

inline bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

/// Allocates every tensor of the model at the configured resolution, all zero.
template <class T> Model<T> allocate_model(const ModelConfig &cfg) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  m.stem = PatchConv<T>(cfg.in_channels, cfg.channels[0], 4);
  m.stem_norm = NormParams<T>(cfg.channels[0]);
  for (std::size_t s = 0; s < 4; ++s) {
    Stage<T> &st = m.stages[s];
    if (s > 0)
      st.downsample = Downsample<T>{NormParams<T>(cfg.channels[s - 1]),
                                    PatchConv<T>(cfg.channels[s - 1], cfg.channels[s], 2)};
    for (std::size_t b = 0; b < cfg.blocks[s]; ++b)
      st.blocks.emplace_back(cfg.channels[s], cfg.stage_h(s), cfg.stage_w(s), cfg.hidden(s),
                             cfg.alpha_tilde);
  }
  m.head_norm = NormParams<T>(cfg.channels[3]);
  m.head = PointwiseParams<T>(cfg.channels[3], cfg.num_classes);
  return m;
}

/// Builds and initializes a model: weights and kernels from a truncated
/// normal (std 0.02, cut at two standard deviations), biases 0, norms (1, 0),
/// residual scales 1. Tensors are drawn in for_each_tensor order.
template <class T> Model<T> build_model(const ModelConfig &cfg, Rng &rng) {
  Model<T> m = allocate_model<T>(cfg);
  for_each_tensor(m, [&](const std::string &name, std::vector<T> &v, const auto &) {
    const bool is_norm = name.find("norm") != std::string::npos;
    if (detail::ends_with(name, "res_scale1") || detail::ends_with(name, "res_scale2")) {
      std::fill(v.begin(), v.end(), T(1));
    } else if (is_norm) {
      std::fill(v.begin(), v.end(), detail::ends_with(name, ".weight") ? T(1) : T(0));
    } else if (detail::ends_with(name, ".bias")) {
      std::fill(v.begin(), v.end(), T(0));
    } else {
      fill_trunc_normal<T>(v, rng, 0.02);
    }
  });
  return m;
}

/// Runs the four stages and returns (N, num_classes, 1, 1) logits.
template <class T> FeatureMap<T> model_forward(const Model<T> &m, const FeatureMap<T> &x) {
  const ModelConfig &cfg = m.config;
  if (x.channels() != cfg.in_channels)
    throw DimensionError(detail::concat("model_forward: expected ", cfg.in_channels,
                                        " input channels, got ", x.channels()));
  if (x.height() != cfg.input_h || x.width() != cfg.input_w)
    throw DimensionError(detail::concat("model_forward: model kernels are bound to ", cfg.input_h,
                                        "x", cfg.input_w, " but the input is ", x.height(), "x",
                                        x.width(), "; call adapt_to_resolution first"));
  FeatureMap<T> h = channel_layernorm(patchify(x, m.stem), m.stem_norm);
  for (const Stage<T> &st : m.stages) {
    if (st.downsample)
      h = patchify(channel_layernorm(h, st.downsample->norm), st.downsample->conv);
    for (const BlockParams<T> &b : st.blocks)
      h = parcv2_block(h, b);
  }
  FeatureMap<T> logits = pointwise_conv(channel_layernorm(global_avg_pool(h), m.head_norm), m.head);
  require_finite(logits, "model_forward");
  return logits;
}

/// Replaces the local + oversized pair of every block with the single fused
/// depthwise kernel.
template <class T> void fuse_block_kernels(Model<T> &m) {
  for (auto &st : m.stages)
    for (auto &b : st.blocks)
      b.spatial.fused = fuse_local_global(compose_2d(b.spatial.oversized), b.spatial.local);
}

/// Rebinds every oversized kernel to the stage sizes of an H x W input. Both
/// sizes must be multiples of 32.
template <class T> Model<T> adapt_to_resolution(const Model<T> &m, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0)
    throw DimensionError(detail::concat("adapt_to_resolution: ", h, "x", w,
                                        " is not a multiple of 32"));
  Model<T> out = m;
  out.config.input_h = h;
  out.config.input_w = w;
  out.config.validate();
  for (std::size_t s = 0; s < 4; ++s)
    for (auto &b : out.stages[s].blocks) {
      b.spatial.oversized =
          resize_kernel_linear(b.spatial.oversized, out.config.stage_h(s), out.config.stage_w(s));
      if (b.spatial.fused)
        b.spatial.fused = fuse_local_global(compose_2d(b.spatial.oversized), b.spatial.local);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Accounting

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : shape)
      n *= d;
    return n;
  }
  friend bool operator==(const TensorSpec &, const TensorSpec &) = default;
};

/// Names and shapes of every persistent tensor, without allocating the model.
inline std::vector<TensorSpec> tensor_specs(const ModelConfig &cfg) {
  cfg.validate();
  using Shape = std::vector<std::size_t>;
  std::vector<TensorSpec> out;
  auto add = [&](std::string name, Shape shape) { out.push_back({std::move(name), std::move(shape)}); };
  auto pw = [&](const std::string &b, std::size_t in, std::size_t o) {
    add(b + ".weight", {o, in});
    add(b + ".bias", {o});
  };
  auto norm = [&](const std::string &b, std::size_t c) {
    add(b + ".weight", {c});
    add(b + ".bias", {c});
  };
  auto patch = [&](const std::string &b, std::size_t in, std::size_t o, std::size_t k) {
    add(b + ".weight", {o, in, k, k});
    add(b + ".bias", {o});
  };
  patch("stem.conv", cfg.in_channels, cfg.channels[0], 4);
  norm("stem.norm", cfg.channels[0]);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string sp = "stages." + std::to_string(s);
    const std::size_t c = cfg.channels[s];
    if (s > 0) {
      norm(sp + ".downsample.norm", cfg.channels[s - 1]);
      patch(sp + ".downsample.conv", cfg.channels[s - 1], c, 2);
    }
    for (std::size_t b = 0; b < cfg.blocks[s]; ++b) {
      const std::string bp = sp + ".blocks." + std::to_string(b);
      norm(bp + ".norm1", c);
      pw(bp + ".spatial.pw_in", c, c);
      add(bp + ".spatial.local.weight", {c, 7, 7});
      add(bp + ".spatial.local.bias", {c});
      add(bp + ".spatial.oversized.k_h", {c, 2 * cfg.stage_h(s) - 1});
      add(bp + ".spatial.oversized.k_w", {c, 2 * cfg.stage_w(s) - 1});
      add(bp + ".spatial.oversized.bias", {c});
      pw(bp + ".spatial.pw_mid", c, c);
      pw(bp + ".spatial.pw_gate", c, c);
      pw(bp + ".spatial.pw_out", c, c);
      add(bp + ".res_scale1", {c});
      norm(bp + ".norm2", c);
      pw(bp + ".channel.w1", c, cfg.hidden(s));
      pw(bp + ".channel.w2", c, cfg.hidden(s));
      pw(bp + ".channel.w3", cfg.hidden(s), c);
      add(bp + ".res_scale2", {c});
    }
  }
  norm("head.norm", cfg.channels[3]);
  pw("head.fc", cfg.channels[3], cfg.num_classes);
  return out;
}

struct CountLine {
  std::string module;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CountReport {
  ModelConfig config;
  std::vector<CountLine> lines; // stem, per-stage downsample / spatial / channel / other, head
  std::array<std::uint64_t, 4> channel_bgu_per_block{};
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
};

/// Parameters by enumerating tensor_specs(); MACs as one multiply-accumulate
/// per weight tap per output element for every convolution and linear layer
/// (norms, activations, products and residual adds excluded). Oversized
/// kernels count all 2H-1 / 2W-1 taps at every output position.
inline CountReport count_params_and_macs(const ModelConfig &cfg) {
  CountReport r;
  r.config = cfg;
  std::map<std::string, CountLine> by_module;
  std::vector<std::string> order;
  auto module_of = [](const std::string &name) -> std::string {
    if (name.rfind("stem.", 0) == 0)
      return "stem";
    if (name.rfind("head.", 0) == 0)
      return "head";
    const std::string stage = name.substr(0, name.find('.', 7));
    if (name.find(".downsample.") != std::string::npos)
      return stage + ".downsample";
    if (name.find(".spatial.") != std::string::npos)
      return stage + ".spatial_bgu";
    if (name.find(".channel.") != std::string::npos)
      return stage + ".channel_bgu";
    return stage + ".norms_and_scales";
  };
  auto line = [&](const std::string &mod) -> CountLine & {
    auto [it, inserted] = by_module.try_emplace(mod, CountLine{mod, 0, 0});
    if (inserted)
      order.push_back(mod);
    return it->second;
  };
  for (const TensorSpec &t : tensor_specs(cfg))
    line(module_of(t.name)).params += t.numel();

  const std::uint64_t in_pixels = static_cast<std::uint64_t>(cfg.input_h) * cfg.input_w;
  line("stem").macs += in_pixels / 16 * cfg.in_channels * 16 * cfg.channels[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string sp = "stages." + std::to_string(s);
    const std::uint64_t c = cfg.channels[s], hid = cfg.hidden(s);
    const std::uint64_t hw = static_cast<std::uint64_t>(cfg.stage_h(s)) * cfg.stage_w(s);
    const std::uint64_t nb = cfg.blocks[s];
    if (s > 0)
      line(sp + ".downsample").macs += hw * cfg.channels[s - 1] * 4 * c;
    const std::uint64_t taps = 49 + (2 * cfg.stage_h(s) - 1) + (2 * cfg.stage_w(s) - 1);
    line(sp + ".spatial_bgu").macs += nb * hw * (4 * c * c + taps * c);
    line(sp + ".channel_bgu").macs += nb * hw * 3 * c * hid;
    line(sp + ".norms_and_scales");
    r.channel_bgu_per_block[s] = line(sp + ".channel_bgu").params / std::max<std::uint64_t>(nb, 1);
  }
  line("head").macs += static_cast<std::uint64_t>(cfg.channels[3]) * cfg.num_classes;

  // Move head to the end so the table reads top to bottom.
  std::stable_partition(order.begin(), order.end(), [](const std::string &m) { return m != "head"; });
  for (const auto &m : order) {
    r.lines.push_back(by_module[m]);
    r.total_params += by_module[m].params;
    r.total_macs += by_module[m].macs;
  }
  return r;
}

} // namespace parc2
