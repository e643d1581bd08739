#pragma once

// Reference implementations used as ground truth. Everything in this header is
// deliberately literal: nested loops over every output element and every tap,
// explicit bounds tests, no shared helpers with the production operators.

#include <array>
#include <functional>
#include <vector>

#include "parc2/tensor.hpp"

namespace parc2::oracle {

enum class PadMode { zero, circular };

/// Per-channel kernel of arbitrary extents. A vertical 1D kernel is rows x 1,
/// a horizontal one is 1 x cols.
template <class T> struct Kernel {
  std::size_t channels = 0, rows = 0, cols = 0;
  std::vector<T> taps; // channels x rows x cols

  T tap(std::size_t c, std::size_t u, std::size_t v) const {
    return taps[(c * rows + u) * cols + v];
  }
};

struct Padding {
  std::size_t top = 0, bottom = 0, left = 0, right = 0;
};

/// out[n,c,i,j] = sum_{u,v} K[c,u,v] * X[n,c,i-top+u, j-left+v]
///
/// Zero mode treats out-of-range input as 0; circular mode wraps indices
/// modulo the spatial extent.
template <class T>
FeatureMap<T> naive_conv(const FeatureMap<T> &x, const Kernel<T> &k, Padding pad,
                         PadMode mode = PadMode::zero) {
  if (k.channels != x.channels())
    throw DimensionError("naive_conv: kernel channel count does not match input");
  if (k.taps.size() != k.channels * k.rows * k.cols)
    throw DimensionError("naive_conv: malformed kernel");
  const long H = static_cast<long>(x.height());
  const long W = static_cast<long>(x.width());
  const long out_h = H + static_cast<long>(pad.top + pad.bottom) - static_cast<long>(k.rows) + 1;
  const long out_w = W + static_cast<long>(pad.left + pad.right) - static_cast<long>(k.cols) + 1;
  if (out_h <= 0 || out_w <= 0)
    throw DimensionError("naive_conv: kernel larger than padded input");
  FeatureMap<T> out(x.batch(), x.channels(), static_cast<std::size_t>(out_h),
                    static_cast<std::size_t>(out_w));
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (long i = 0; i < out_h; ++i)
        for (long j = 0; j < out_w; ++j) {
          T acc = 0;
          for (long u = 0; u < static_cast<long>(k.rows); ++u)
            for (long v = 0; v < static_cast<long>(k.cols); ++v) {
              long r = i - static_cast<long>(pad.top) + u;
              long q = j - static_cast<long>(pad.left) + v;
              T value;
              if (mode == PadMode::circular) {
                r = ((r % H) + H) % H;
                q = ((q % W) + W) % W;
                value = x(n, c, r, q);
              } else if (r < 0 || r >= H || q < 0 || q >= W) {
                value = 0;
              } else {
                value = x(n, c, r, q);
              }
              acc += k.tap(c, u, v) * value;
            }
          out(n, c, i, j) = acc;
        }
  return out;
}

/// Convenience for odd kernels with "same" padding on both axes.
template <class T> FeatureMap<T> naive_conv_same(const FeatureMap<T> &x, const Kernel<T> &k) {
  return naive_conv(x, k, Padding{k.rows / 2, k.rows / 2, k.cols / 2, k.cols / 2});
}

template <class T> FeatureMap<T> add_bias(FeatureMap<T> x, const std::vector<T> &bias) {
  if (bias.empty())
    return x;
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t i = 0; i < x.height(); ++i)
        for (std::size_t j = 0; j < x.width(); ++j)
          x(n, c, i, j) += bias[c];
  return x;
}

/// Circular shift of the spatial axes by (dy, dx).
template <class T> FeatureMap<T> roll(const FeatureMap<T> &x, long dy, long dx) {
  FeatureMap<T> out(x.shape());
  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (long i = 0; i < H; ++i)
        for (long j = 0; j < W; ++j)
          out(n, c, static_cast<std::size_t>(((i + dy) % H + H) % H),
              static_cast<std::size_t>(((j + dx) % W + W) % W)) = x(n, c, i, j);
  return out;
}

/// Global circular convolution: a length-H vertical kernel
/// then a length-W horizontal kernel, both with wrap-around indexing.
template <class T>
FeatureMap<T> circular_conv_reference(const FeatureMap<T> &x, const Kernel<T> &k_h,
                                      const Kernel<T> &k_w) {
  if (k_h.rows != x.height() || k_h.cols != 1 || k_w.cols != x.width() || k_w.rows != 1)
    throw DimensionError("circular_conv_reference: kernel lengths must equal H and W");
  const std::size_t top = (x.height() - 1) / 2, left = (x.width() - 1) / 2;
  FeatureMap<T> y =
      naive_conv(x, k_h, Padding{top, x.height() - 1 - top, 0, 0}, PadMode::circular);
  return naive_conv(y, k_w, Padding{0, 0, left, x.width() - 1 - left}, PadMode::circular);
}

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
inline FeatureMap<double>
finite_diff_grad(const std::function<double(const FeatureMap<double> &)> &f,
                 const FeatureMap<double> &x, double eps = 1e-5) {
  if (!(eps >= 1e-6 && eps <= 1e-4))
    throw std::invalid_argument("finite_diff_grad: eps must lie in [1e-6, 1e-4]");
  FeatureMap<double> grad(x.shape());
  FeatureMap<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + eps;
    const double up = f(probe);
    probe.values()[i] = orig - eps;
    const double down = f(probe);
    probe.values()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: non-finite function value");
    grad.values()[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

/// Same as above over a flat parameter vector.
inline std::vector<double>
finite_diff_grad(const std::function<double(const std::vector<double> &)> &f,
                 const std::vector<double> &params, double eps = 1e-5) {
  if (!(eps >= 1e-6 && eps <= 1e-4))
    throw std::invalid_argument("finite_diff_grad: eps must lie in [1e-6, 1e-4]");
  std::vector<double> grad(params.size());
  std::vector<double> probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: non-finite function value");
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

struct EquivalenceReport {
  double max_abs_diff = 0;
  double max_rel_diff = 0;
  std::array<std::size_t, 4> argmax_location{}; // (n, c, h, w) of max_abs_diff
  double tolerance = 0;
  bool pass = true;
};

/// Relative error uses max(|a|, |b|, 1e-8) as the denominator.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <class T>
EquivalenceReport check_equivalence(const FeatureMap<T> &a, const FeatureMap<T> &b, double tol) {
  if (a.shape() != b.shape())
    throw DimensionError(detail::concat("check_equivalence: shape ", a.shape(), " vs ",
                                        b.shape()));
  EquivalenceReport r;
  r.tolerance = tol;
  const Shape4 s = a.shape();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          const double av = a(n, c, h, w), bv = b(n, c, h, w);
          const double d = std::abs(av - bv);
          if (!(d <= r.max_abs_diff)) { // also captures NaN
            r.max_abs_diff = std::isnan(d) ? std::numeric_limits<double>::infinity() : d;
            r.argmax_location = {n, c, h, w};
          }
          r.max_rel_diff = std::max(r.max_rel_diff, relative_error(av, bv));
        }
  r.pass = r.max_abs_diff <= tol;
  return r;
}

/// Boolean dependency matrix of a single-channel op: entry [p_out][p_in] is
/// true iff d out(p_out) / d in(p_in) != 0. The op is supplied through its
/// vector-Jacobian product, swept with one-hot cotangents.
template <class T>
std::vector<std::vector<bool>>
receptive_field_probe(const std::function<FeatureMap<T>(const FeatureMap<T> &)> &vjp,
                      Shape4 shape) {
  if (shape.n != 1 || shape.c != 1)
    throw DimensionError("receptive_field_probe: expects a (1,1,H,W) shape");
  const std::size_t P = shape.plane();
  std::vector<std::vector<bool>> deps(P, std::vector<bool>(P, false));
  for (std::size_t p = 0; p < P; ++p) {
    FeatureMap<T> cot(shape);
    cot.values()[p] = T(1);
    FeatureMap<T> g = vjp(cot);
    for (std::size_t q = 0; q < P; ++q)
      deps[p][q] = std::abs(g.values()[q]) > T(0);
  }
  return deps;
}

} // namespace parc2::oracle
