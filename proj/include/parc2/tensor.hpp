#pragma once

// Dense NCHW feature maps and the elementwise / pointwise primitives the rest
// of the library is assembled from.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace parc2 {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads and RNG streams assume a little-endian host");

class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class... Args> std::string concat(const Args &...args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline std::atomic<unsigned> &thread_limit_slot() {
  static std::atomic<unsigned> slot{0};
  return slot;
}

} // namespace detail

struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  friend bool operator==(const Shape4 &, const Shape4 &) = default;
};

inline std::ostream &operator<<(std::ostream &os, const Shape4 &s) {
  return os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
}

/// Worker count for internal parallel loops.
///
/// Reads PARC2_THREADS once (0 or unset means hardware concurrency). A
/// non-zero value passed to set_thread_limit() overrides the environment.
inline unsigned worker_count() {
  unsigned forced = detail::thread_limit_slot().load();
  if (forced != 0)
    return forced;
  static const unsigned from_env = [] {
    const char *env = std::getenv("PARC2_THREADS");
    long v = env ? std::strtol(env, nullptr, 10) : 0;
    if (v > 0)
      return static_cast<unsigned>(v);
    return std::max(1u, std::thread::hardware_concurrency());
  }();
  return from_env;
}

inline void set_thread_limit(unsigned n) { detail::thread_limit_slot() = n; }

/// Runs body(i) for i in [0, count). Work items are independent, so the
/// partitioning never affects results.
template <class Body> void parallel_for(std::size_t count, Body &&body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(worker_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++)
      body(i);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t)
    pool.emplace_back(run);
  run();
}

/// Row-major NCHW tensor. The scalar type is the precision switch: float for
/// production, double for gradient verification.
template <class T> class FeatureMap {
public:
  using value_type = T;

  FeatureMap() = default;
  explicit FeatureMap(Shape4 shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}
  FeatureMap(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : FeatureMap(Shape4{n, c, h, w}, fill) {}
  FeatureMap(Shape4 shape, std::vector<T> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel())
      throw DimensionError(detail::concat("FeatureMap: ", data_.size(),
                                          " values do not fill shape ", shape_));
  }

  const Shape4 &shape() const { return shape_; }
  std::size_t batch() const { return shape_.n; }
  std::size_t channels() const { return shape_.c; }
  std::size_t height() const { return shape_.h; }
  std::size_t width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  T &operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T &operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  std::span<T> plane(std::size_t n, std::size_t c) {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T> &storage() { return data_; }
  const std::vector<T> &storage() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U> FeatureMap<U> cast() const {
    return FeatureMap<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const FeatureMap &, const FeatureMap &) = default;

private:
  Shape4 shape_{};
  std::vector<T> data_;
};

/// 1x1 convolution / linear layer: weight is row-major (out x in).
template <class T> struct PointwiseParams {
  std::size_t in = 0, out = 0;
  std::vector<T> weight;
  std::vector<T> bias;

  PointwiseParams() = default;
  PointwiseParams(std::size_t in_ch, std::size_t out_ch)
      : in(in_ch), out(out_ch), weight(in_ch * out_ch, T(0)), bias(out_ch, T(0)) {}

  T &w(std::size_t o, std::size_t i) { return weight[o * in + i]; }
  const T &w(std::size_t o, std::size_t i) const { return weight[o * in + i]; }

  static PointwiseParams identity(std::size_t c) {
    PointwiseParams p(c, c);
    for (std::size_t i = 0; i < c; ++i)
      p.w(i, i) = T(1);
    return p;
  }

  std::size_t param_count() const { return weight.size() + bias.size(); }
};

template <class T> struct NormParams {
  std::vector<T> gamma;
  std::vector<T> beta;

  NormParams() = default;
  explicit NormParams(std::size_t c) : gamma(c, T(1)), beta(c, T(0)) {}
  std::size_t param_count() const { return gamma.size() + beta.size(); }
};

inline constexpr double kNormEps = 1e-6;

// ---------------------------------------------------------------------------
// RNG

/// Seeded generator: std::mt19937_64 (whose output sequence is fixed by the
/// standard) feeding a hand-written Box-Muller transform, so the normal stream
/// is identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Standard normal resampled until it falls inside [-2, 2].
  double truncated_normal() {
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0)
        return z;
    }
  }

  /// Magnitude uniform in [lo, hi] with a random sign.
  double signed_uniform(double lo, double hi) {
    double mag = uniform(lo, hi);
    return uniform() < 0.5 ? -mag : mag;
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class T> void fill_normal(std::span<T> out, Rng &rng, double stddev) {
  for (T &v : out)
    v = static_cast<T>(stddev * rng.normal());
}

template <class T> void fill_trunc_normal(std::span<T> out, Rng &rng, double stddev) {
  for (T &v : out)
    v = static_cast<T>(stddev * rng.truncated_normal());
}

template <class T> void fill_signed_uniform(std::span<T> out, Rng &rng, double lo, double hi) {
  for (T &v : out)
    v = static_cast<T>(rng.signed_uniform(lo, hi));
}

template <class T> FeatureMap<T> random_normal(Shape4 shape, Rng &rng, double stddev) {
  if (stddev < 0)
    throw std::invalid_argument("random_normal: negative stddev");
  FeatureMap<T> out(shape);
  fill_normal<T>(out.values(), rng, stddev);
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

template <class T> void require_finite(const FeatureMap<T> &x, const char *where) {
  if (!x.all_finite())
    throw NumericError(detail::concat(where, ": non-finite value in output"));
}

template <class T> void require_same_shape(const FeatureMap<T> &a, const FeatureMap<T> &b,
                                           const char *where) {
  if (a.shape() != b.shape())
    throw DimensionError(detail::concat(where, ": shape ", a.shape(), " vs ", b.shape()));
}

template <class T> FeatureMap<T> add(const FeatureMap<T> &a, const FeatureMap<T> &b) {
  require_same_shape(a, b, "add");
  FeatureMap<T> out = a;
  auto o = out.values();
  auto v = b.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] += v[i];
  return out;
}

template <class T> FeatureMap<T> multiply(const FeatureMap<T> &a, const FeatureMap<T> &b) {
  require_same_shape(a, b, "multiply");
  FeatureMap<T> out = a;
  auto o = out.values();
  auto v = b.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    o[i] *= v[i];
  return out;
}

/// x + scale[c] * branch[n,c,h,w]
template <class T>
FeatureMap<T> scaled_residual(const FeatureMap<T> &x, std::span<const T> scale,
                              const FeatureMap<T> &branch) {
  require_same_shape(x, branch, "scaled_residual");
  if (scale.size() != x.channels())
    throw DimensionError("scaled_residual: scale length does not match channels");
  FeatureMap<T> out = x;
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      auto o = out.plane(n, c);
      auto b = branch.plane(n, c);
      for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += scale[c] * b[i];
    }
  return out;
}

template <class T>
FeatureMap<T> pad_zero(const FeatureMap<T> &x, std::size_t top, std::size_t bottom,
                       std::size_t left, std::size_t right) {
  const Shape4 s = x.shape();
  FeatureMap<T> out(s.n, s.c, s.h + top + bottom, s.w + left + right);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        std::copy_n(&x(n, c, h, 0), s.w, &out(n, c, h + top, left));
  return out;
}

template <class T> T gelu_scalar(T v) {
  return T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2))));
}

/// d/dv gelu(v) = Phi(v) + v * phi(v)
template <class T> T gelu_derivative(T v) {
  const T cdf = T(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
  const T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * T(3.14159265358979323846));
  return cdf + v * pdf;
}

template <class T> FeatureMap<T> gelu(const FeatureMap<T> &x) {
  FeatureMap<T> out = x;
  for (T &v : out.values())
    v = gelu_scalar(v);
  return out;
}

template <class T> FeatureMap<T> gelu_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x) {
  require_same_shape(grad_out, x, "gelu_vjp");
  FeatureMap<T> g = grad_out;
  auto xv = x.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    gv[i] *= gelu_derivative(xv[i]);
  return g;
}

template <class T>
FeatureMap<T> pointwise_conv(const FeatureMap<T> &x, const PointwiseParams<T> &p) {
  const Shape4 s = x.shape();
  if (p.in != s.c)
    throw DimensionError(detail::concat("pointwise_conv: weight expects ", p.in,
                                        " input channels, got ", s.c));
  if (p.weight.size() != p.in * p.out || p.bias.size() != p.out)
    throw DimensionError("pointwise_conv: malformed parameters");
  FeatureMap<T> out(s.n, p.out, s.h, s.w);
  const std::size_t hw = s.plane();
  parallel_for(s.n * p.out, [&](std::size_t job) {
    const std::size_t n = job / p.out, co = job % p.out;
    auto o = out.plane(n, co);
    std::fill(o.begin(), o.end(), p.bias[co]);
    for (std::size_t ci = 0; ci < p.in; ++ci) {
      const T wv = p.w(co, ci);
      auto xi = x.plane(n, ci);
      for (std::size_t i = 0; i < hw; ++i)
        o[i] += wv * xi[i];
    }
  });
  return out;
}

template <class T> struct PointwiseGrads {
  FeatureMap<T> grad_input;
  std::vector<T> grad_weight;
  std::vector<T> grad_bias;
};

template <class T>
PointwiseGrads<T> pointwise_vjp(const FeatureMap<T> &grad_out, const FeatureMap<T> &x,
                                const PointwiseParams<T> &p) {
  const Shape4 s = x.shape();
  if (grad_out.shape() != Shape4{s.n, p.out, s.h, s.w} || p.in != s.c)
    throw DimensionError("pointwise_vjp: shape mismatch");
  PointwiseGrads<T> g{FeatureMap<T>(s), std::vector<T>(p.weight.size(), T(0)),
                      std::vector<T>(p.out, T(0))};
  const std::size_t hw = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t co = 0; co < p.out; ++co) {
      auto go = grad_out.plane(n, co);
      for (std::size_t i = 0; i < hw; ++i)
        g.grad_bias[co] += go[i];
      for (std::size_t ci = 0; ci < p.in; ++ci) {
        auto xi = x.plane(n, ci);
        auto gi = g.grad_input.plane(n, ci);
        const T wv = p.w(co, ci);
        T acc = T(0);
        for (std::size_t i = 0; i < hw; ++i) {
          acc += go[i] * xi[i];
          gi[i] += wv * go[i];
        }
        g.grad_weight[co * p.in + ci] += acc;
      }
    }
  return g;
}

/// Layer norm across the channel axis at every (n, h, w) position.
template <class T>
FeatureMap<T> channel_layernorm(const FeatureMap<T> &x, std::span<const T> gamma,
                                std::span<const T> beta, double eps = kNormEps) {
  const Shape4 s = x.shape();
  if (gamma.size() != s.c || beta.size() != s.c)
    throw DimensionError("channel_layernorm: gamma/beta length does not match channels");
  if (!(eps > 0))
    throw std::invalid_argument("channel_layernorm: eps must be positive");
  FeatureMap<T> out(s);
  const std::size_t hw = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      T mean = 0;
      for (std::size_t c = 0; c < s.c; ++c)
        mean += x.plane(n, c)[i];
      mean /= static_cast<T>(s.c);
      T var = 0;
      for (std::size_t c = 0; c < s.c; ++c) {
        T d = x.plane(n, c)[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(s.c);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
      for (std::size_t c = 0; c < s.c; ++c)
        out.plane(n, c)[i] = (x.plane(n, c)[i] - mean) * inv * gamma[c] + beta[c];
    }
  return out;
}

template <class T>
FeatureMap<T> channel_layernorm(const FeatureMap<T> &x, const NormParams<T> &p,
                                double eps = kNormEps) {
  return channel_layernorm<T>(x, p.gamma, p.beta, eps);
}

/// Mean over spatial positions; the result is shaped (N, C, 1, 1).
template <class T> FeatureMap<T> global_avg_pool(const FeatureMap<T> &x) {
  const Shape4 s = x.shape();
  if (s.h == 0 || s.w == 0)
    throw DimensionError("global_avg_pool: empty spatial extent");
  FeatureMap<T> out(s.n, s.c, 1, 1);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      T acc = 0;
      for (T v : x.plane(n, c))
        acc += v;
      out(n, c, 0, 0) = acc / static_cast<T>(s.plane());
    }
  return out;
}

} // namespace parc2
