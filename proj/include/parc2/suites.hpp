#pragma once

// Seeded verification suites behind `parc2 check`. Each suite compares
// production operators with the oracles in oracle.hpp and returns a
// machine-readable summary.

#include <functional>

#include <nlohmann/json.hpp>

#include "parc2/bench.hpp"
#include "parc2/oracle.hpp"

namespace parc2::suites {

struct Tolerances {
  double oracle_f32 = 1e-4;
  double oracle_f64 = 1e-10;
  double commute_f32 = 1e-5;
  double commute_f64 = 1e-12;
  double reparam_f32 = 1e-4;
  double model_logits = 1e-3;
  double grad_rel = 1e-6;
  double circular_equivariance = 1e-6;
  double oversized_violation = 1e-3;
};

struct Options {
  std::uint64_t seed = 20240611;
  std::size_t cases = 100;     // randomized oracle / commutativity cases
  std::size_t grad_cases = 20; // per operator
  std::size_t model_inputs = 32;
  bool inject_fault = false;   // perturb one 7x7 tap in the oracle suite
  Tolerances tol;
};

struct Result {
  std::string name;
  bool pass = true;
  std::size_t cases = 0;
  double worst = 0; // worst observed metric (abs diff, rel error, ...)
  nlohmann::json details = nlohmann::json::object();
};

inline nlohmann::json to_json(const Result &r) {
  return {{"suite", r.name}, {"pass", r.pass}, {"cases", r.cases}, {"worst", r.worst},
          {"details", r.details}};
}

/// A random problem: input, oversized pair (with bias), local 7x7 (with bias).
template <class T> struct Problem {
  std::uint64_t seed = 0;
  FeatureMap<T> x;
  OversizedKernelPair<T> pair;
  LocalKernel7<T> local;
};

/// Shapes up to (2, 8, 16, 16); the i-th case derives its own seed.
template <class T> Problem<T> make_problem(std::uint64_t base_seed, std::size_t i) {
  Problem<T> p;
  p.seed = base_seed * 1000003ULL + i;
  Rng rng(p.seed);
  const Shape4 s{1 + rng.below(2), 1 + rng.below(8), 1 + rng.below(16),
                 1 + rng.below(16)};
  p.x = random_normal<T>(s, rng, 1.0);
  p.pair = OversizedKernelPair<T>(s.c, s.h, s.w, true);
  fill_normal<T>(p.pair.k_h, rng, 0.3);
  fill_normal<T>(p.pair.k_w, rng, 0.3);
  fill_normal<T>(p.pair.bias, rng, 0.3);
  p.local = LocalKernel7<T>(s.c, true);
  fill_normal<T>(p.local.k, rng, 0.3);
  fill_normal<T>(p.local.bias, rng, 0.3);
  return p;
}

namespace detail {

template <class T> oracle::Kernel<T> vertical(const OversizedKernelPair<T> &k) {
  return {k.channels, k.len_h(), 1, k.k_h};
}
template <class T> oracle::Kernel<T> horizontal(const OversizedKernelPair<T> &k) {
  return {k.channels, 1, k.len_w(), k.k_w};
}
template <class T> oracle::Kernel<T> local7(const LocalKernel7<T> &k) {
  return {k.channels, 7, 7, k.k};
}
template <class T> oracle::Kernel<T> dense(const Dense2DKernel<T> &k) {
  return {k.channels, k.kh, k.kw, k.k};
}

/// Oracle oversized conv as a single literal 2D sum over the outer product.
template <class T> FeatureMap<T> oracle_oversized(const Problem<T> &p) {
  oracle::Kernel<T> k{p.pair.channels, p.pair.len_h(), p.pair.len_w(), {}};
  for (std::size_t c = 0; c < k.channels; ++c)
    for (std::size_t u = 0; u < k.rows; ++u)
      for (std::size_t v = 0; v < k.cols; ++v)
        k.taps.push_back(p.pair.k_h[c * k.rows + u] * p.pair.k_w[c * k.cols + v]);
  return oracle::add_bias(oracle::naive_conv_same(p.x, k), p.pair.bias);
}

inline void record(Result &r, const std::string &path, std::uint64_t seed, const Shape4 &s,
                   const oracle::EquivalenceReport &rep) {
  ++r.cases;
  r.worst = std::max(r.worst, rep.max_abs_diff);
  if (!rep.pass) {
    r.pass = false;
    if (!r.details.contains("failures"))
      r.details["failures"] = nlohmann::json::array();
    if (r.details["failures"].size() < 16)
      r.details["failures"].push_back({{"path", path},
                                       {"seed", seed},
                                       {"shape", {s.n, s.c, s.h, s.w}},
                                       {"max_abs_diff", rep.max_abs_diff},
                                       {"tolerance", rep.tolerance},
                                       {"argmax", rep.argmax_location}});
  }
}

template <class T>
void oracle_cases(Result &r, const Options &o, double tol, const char *prec) {
  for (std::size_t i = 0; i < o.cases; ++i) {
    Problem<T> p = make_problem<T>(o.seed, i);
    const Shape4 s = p.x.shape();
    LocalKernel7<T> local_prod = p.local;
    if (o.inject_fault && i == 0)
      local_prod.at(0, 3, 3) += T(1e-2);
    auto tag = [&](const char *path) { return std::string(path) + "/" + prec; };

    const auto ref_v = oracle::naive_conv_same(p.x, vertical(p.pair));
    record(r, tag("parc_oh"), p.seed, s, oracle::check_equivalence(parc_oh(p.x, p.pair), ref_v, tol));
    const auto ref_h =
        oracle::add_bias(oracle::naive_conv_same(p.x, horizontal(p.pair)), p.pair.bias);
    record(r, tag("parc_ow"), p.seed, s, oracle::check_equivalence(parc_ow(p.x, p.pair), ref_h, tol));
    const auto ref_local = oracle::add_bias(oracle::naive_conv_same(p.x, local7(p.local)), p.local.bias);
    record(r, tag("dwconv7x7"), p.seed, s,
           oracle::check_equivalence(dwconv7x7(p.x, local_prod), ref_local, tol));
    const auto ref_global = oracle_oversized(p);
    record(r, tag("parc_oversized"), p.seed, s,
           oracle::check_equivalence(parc_oversized(p.x, p.pair), ref_global, tol));
    const Dense2DKernel<T> rank1 = compose_2d(p.pair);
    record(r, tag("dense2d"), p.seed, s,
           oracle::check_equivalence(depthwise_conv2d(p.x, rank1), ref_global, tol));
    const SeparablePlan sp = plan_separable(s.c, s.h, s.w, p.pair.len_h(), p.pair.len_w(),
                                            kDefaultWorkspaceBytes, sizeof(T));
    record(r, tag("fast_separable"), p.seed, s,
           oracle::check_equivalence(fast_parc_oversized(p.x, p.pair, sp), ref_global, tol));
    const LoweringPlan lp7 = plan_lowering(s.c, s.h, s.w, 7, 7, kDefaultWorkspaceBytes, sizeof(T));
    record(r, tag("fast_dwconv7x7"), p.seed, s,
           oracle::check_equivalence(fast_dwconv(p.x, local_prod.as_dense(), lp7), ref_local, tol));
    {
      const Dense2DKernel<T> fused = fuse_local_global(rank1, local_prod);
      const FeatureMap<T> ref_sum = add(ref_local, ref_global);
      record(r, tag("fused"), p.seed, s,
             oracle::check_equivalence(depthwise_conv2d(p.x, fused), ref_sum, tol));
      const LoweringPlan lp = plan_lowering(s.c, s.h, s.w, fused.kh, fused.kw,
                                            kDefaultWorkspaceBytes, sizeof(T));
      record(r, tag("fast_fused"), p.seed, s,
             oracle::check_equivalence(fast_dwconv(p.x, fused, lp), ref_sum, tol));
    }
  }
}

} // namespace detail

/// Every production convolution path against the literal oracle, f32 and f64.
inline Result oracle_suite(const Options &o) {
  Result r{"oracle"};
  detail::oracle_cases<float>(r, o, o.tol.oracle_f32, "f32");
  detail::oracle_cases<double>(r, o, o.tol.oracle_f64, "f64");
  r.details["problems"] = o.cases;
  return r;
}

/// Vertical-then-horizontal equals horizontal-then-vertical.
inline Result commute_suite(const Options &o) {
  Result r{"commute"};
  auto run = [&]<class T>(T, double tol, const char *prec) {
    for (std::size_t i = 0; i < o.cases; ++i) {
      const Problem<T> p = make_problem<T>(o.seed, i);
      detail::record(r, std::string("hw_vs_wh/") + prec, p.seed, p.x.shape(),
                     oracle::check_equivalence(parc_oversized(p.x, p.pair),
                                               parc_oversized_wh(p.x, p.pair), tol));
    }
  };
  run(float{}, o.tol.commute_f32, "f32");
  run(double{}, o.tol.commute_f64, "f64");
  return r;
}

/// Separable == rank-1 dense; branches == fused kernel; fused model logits
/// match the unfused model on seeded XT @ 64x64 inputs.
inline Result reparam_suite(const Options &o, bool include_model = true) {
  Result r{"reparam"};
  for (std::size_t i = 0; i < o.cases; ++i) {
    const Problem<float> p = make_problem<float>(o.seed, i);
    const Shape4 s = p.x.shape();
    const FeatureMap<float> sep = parc_oversized(p.x, p.pair);
    detail::record(r, "separable_vs_rank1", p.seed, s,
                   oracle::check_equivalence(sep, depthwise_conv2d(p.x, compose_2d(p.pair)),
                                             o.tol.reparam_f32));
    {
      const FeatureMap<float> branches = add(dwconv7x7(p.x, p.local), sep);
      const auto fused = fuse_local_global(compose_2d(p.pair), p.local);
      detail::record(r, "branches_vs_fused", p.seed, s,
                     oracle::check_equivalence(branches, depthwise_conv2d(p.x, fused),
                                               o.tol.reparam_f32));
    }
  }
  if (!include_model)
    return r;

  Rng rng(o.seed);
  const Model<float> model = build_model<float>(ModelConfig::named("XT", 64), rng);
  const Model<float> fused = reparam_inference_mode(model);
  const FeatureMap<float> x = random_normal<float>({o.model_inputs, 3, 64, 64}, rng, 1.0);
  const FeatureMap<float> a = model_forward(model, x);
  const FeatureMap<float> b = model_forward(fused, x);
  const auto rep = oracle::check_equivalence(a, b, o.tol.model_logits);
  detail::record(r, "model_logits_xt64", o.seed, x.shape(), rep);
  std::size_t argmax_kept = 0;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t k = 1; k < a.channels(); ++k) {
      if (a(n, k, 0, 0) > a(n, ia, 0, 0))
        ia = k;
      if (b(n, k, 0, 0) > b(n, ib, 0, 0))
        ib = k;
    }
    argmax_kept += ia == ib;
  }
  r.details["model_logits_max_abs_diff"] = rep.max_abs_diff;
  r.details["argmax_preserved"] = argmax_kept;
  r.details["model_inputs"] = x.batch();
  if (argmax_kept != x.batch())
    r.pass = false;
  return r;
}

namespace detail {

/// Dyadic rationals k/64, |k| <= 64. With a dyadic step the forward sums of
/// the linear operators are exact in f64, so central differences of linear
/// maps carry no rounding error.
inline void fill_dyadic(std::span<double> v, Rng &rng) {
  for (double &x : v)
    x = static_cast<double>(static_cast<long>(rng.uniform() * 129.0) - 64) / 64.0;
}

inline double dot(const FeatureMap<double> &a, const FeatureMap<double> &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a.values()[i] * b.values()[i];
  return s;
}

inline double max_rel(std::span<const double> a, std::span<const double> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, oracle::relative_error(a[i], b[i]));
  return worst;
}

inline constexpr double kDyadicStep = 0x1.0p-17; // 7.6e-6, inside [1e-6, 1e-4]

} // namespace detail

/// Analytic VJPs against central finite differences in f64.
inline Result grad_suite(const Options &o) {
  Result r{"grad"};
  using FM = FeatureMap<double>;
  const double eps = detail::kDyadicStep;
  auto note = [&](const std::string &op, std::uint64_t seed, double err) {
    ++r.cases;
    r.worst = std::max(r.worst, err);
    auto &slot = r.details[op];
    if (slot.is_null())
      slot = nlohmann::json::object();
    slot["cases"] = slot.value("cases", 0) + 1;
    slot["worst_rel"] = std::max(slot.value("worst_rel", 0.0), err);
    if (err > o.tol.grad_rel) {
      r.pass = false;
      slot["failing_seed"] = seed;
    }
  };
  // Checks a gradient vector wrt a flat parameter list via a rebuild callback.
  auto check_params = [&](const std::string &op, std::uint64_t seed, std::vector<double> params,
                          const std::function<double(const std::vector<double> &)> &loss,
                          const std::vector<double> &analytic) {
    const auto fd = oracle::finite_diff_grad(loss, params, eps);
    note(op, seed, detail::max_rel(analytic, fd));
  };

  for (std::size_t i = 0; i < o.grad_cases; ++i) {
    const std::uint64_t seed = o.seed * 7919ULL + i;
    Rng rng(seed);
    const Shape4 s{1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(4),
                   2 + rng.below(4)};
    FM x(s), cot(s);
    detail::fill_dyadic(x.values(), rng);
    detail::fill_dyadic(cot.values(), rng);
    OversizedKernelPair<double> k(s.c, s.h, s.w, true);
    detail::fill_dyadic(k.k_h, rng);
    detail::fill_dyadic(k.k_w, rng);
    detail::fill_dyadic(k.bias, rng);
    LocalKernel7<double> k7(s.c, true);
    detail::fill_dyadic(k7.k, rng);
    detail::fill_dyadic(k7.bias, rng);
    PointwiseParams<double> pw(s.c, 1 + rng.below(4));
    detail::fill_dyadic(pw.weight, rng);
    detail::fill_dyadic(pw.bias, rng);
    FM pw_cot(Shape4{s.n, pw.out, s.h, s.w});
    detail::fill_dyadic(pw_cot.values(), rng);

    // parc_oh
    {
      const auto g = parc_oh_vjp(cot, x, k);
      note("parc_oh.input", seed,
           detail::max_rel(g.grad_input.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(parc_oh(v, k), cot); }, x, eps).values()));
      check_params("parc_oh.kernel", seed, k.k_h, [&](const std::vector<double> &v) {
        auto kk = k;
        kk.k_h = v;
        return detail::dot(parc_oh(x, kk), cot);
      }, g.grad_kernel);
    }
    // parc_ow
    {
      const auto g = parc_ow_vjp(cot, x, k);
      note("parc_ow.input", seed,
           detail::max_rel(g.grad_input.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(parc_ow(v, k), cot); }, x, eps).values()));
      check_params("parc_ow.kernel", seed, k.k_w, [&](const std::vector<double> &v) {
        auto kk = k;
        kk.k_w = v;
        return detail::dot(parc_ow(x, kk), cot);
      }, g.grad_kernel);
      check_params("parc_ow.bias", seed, k.bias, [&](const std::vector<double> &v) {
        auto kk = k;
        kk.bias = v;
        return detail::dot(parc_ow(x, kk), cot);
      }, g.grad_bias);
    }
    // parc_oversized (composite)
    {
      const auto g = parc_oversized_vjp(cot, x, k);
      note("parc_oversized.input", seed,
           detail::max_rel(g.grad_input.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(parc_oversized(v, k), cot); }, x, eps).values()));
      std::vector<double> both = k.k_h;
      both.insert(both.end(), k.k_w.begin(), k.k_w.end());
      check_params("parc_oversized.kernel", seed, both, [&](const std::vector<double> &v) {
        auto kk = k;
        std::copy_n(v.begin(), kk.k_h.size(), kk.k_h.begin());
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(kk.k_h.size()), v.end(), kk.k_w.begin());
        return detail::dot(parc_oversized(x, kk), cot);
      }, g.grad_kernel);
    }
    // dwconv7x7
    {
      const auto g = dwconv7x7_vjp(cot, x, k7);
      note("dwconv7x7.input", seed,
           detail::max_rel(g.grad_input.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(dwconv7x7(v, k7), cot); }, x, eps).values()));
      check_params("dwconv7x7.kernel", seed, k7.k, [&](const std::vector<double> &v) {
        auto kk = k7;
        kk.k = v;
        return detail::dot(dwconv7x7(x, kk), cot);
      }, g.grad_kernel);
      check_params("dwconv7x7.bias", seed, k7.bias, [&](const std::vector<double> &v) {
        auto kk = k7;
        kk.bias = v;
        return detail::dot(dwconv7x7(x, kk), cot);
      }, g.grad_bias);
    }
    // pointwise
    {
      const auto g = pointwise_vjp(pw_cot, x, pw);
      note("pointwise.input", seed,
           detail::max_rel(g.grad_input.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(pointwise_conv(v, pw), pw_cot); }, x, eps).values()));
      check_params("pointwise.weight", seed, pw.weight, [&](const std::vector<double> &v) {
        auto pp = pw;
        pp.weight = v;
        return detail::dot(pointwise_conv(x, pp), pw_cot);
      }, g.grad_weight);
      check_params("pointwise.bias", seed, pw.bias, [&](const std::vector<double> &v) {
        auto pp = pw;
        pp.bias = v;
        return detail::dot(pointwise_conv(x, pp), pw_cot);
      }, g.grad_bias);
    }
    // gelu (nonlinear: generic inputs, 1e-5 step)
    {
      const FM xg = random_normal<double>(s, rng, 1.0);
      const auto g = gelu_vjp(cot, xg);
      note("gelu.input", seed,
           detail::max_rel(g.values(),
                           oracle::finite_diff_grad([&](const FM &v) { return detail::dot(gelu(v), cot); }, xg, 1e-5).values()));
    }
  }
  return r;
}

/// The circular reference commutes with cyclic shifts. The zero-padded
/// oversized convolution must not.
inline Result shift_suite(const Options &o) {
  Result r{"shift"};
  Rng rng(o.seed + 17);
  const Shape4 s{1, 2, 6, 6};
  const std::size_t trials = 8;
  double worst_circular = 0, weakest_violation = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    const FeatureMap<double> x = random_normal<double>(s, rng, 1.0);
    OversizedKernelPair<double> k(s.c, s.h, s.w);
    fill_signed_uniform<double>(k.k_h, rng, 0.1, 1.0);
    fill_signed_uniform<double>(k.k_w, rng, 0.1, 1.0);
    // Circular kernels: the centred length-H / length-W crop of the oversized pair.
    oracle::Kernel<double> ch{s.c, s.h, 1, {}}, cw{s.c, 1, s.w, {}};
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t u = 0; u < s.h; ++u)
        ch.taps.push_back(k.k_h[c * k.len_h() + (s.h - 1) / 2 + u]);
      for (std::size_t v = 0; v < s.w; ++v)
        cw.taps.push_back(k.k_w[c * k.len_w() + (s.w - 1) / 2 + v]);
    }
    const auto fc = oracle::circular_conv_reference(x, ch, cw);
    const auto fo = parc_oversized(x, k);
    double violation = 0;
    for (long dy = 0; dy < static_cast<long>(s.h); ++dy)
      for (long dx = 0; dx < static_cast<long>(s.w); ++dx) {
        if (dy == 0 && dx == 0)
          continue;
        const auto xs = oracle::roll(x, dy, dx);
        const auto c_rep = oracle::check_equivalence(oracle::circular_conv_reference(xs, ch, cw),
                                                     oracle::roll(fc, dy, dx), o.tol.circular_equivariance);
        worst_circular = std::max(worst_circular, c_rep.max_abs_diff);
        const auto o_rep = oracle::check_equivalence(parc_oversized(xs, k), oracle::roll(fo, dy, dx), 0.0);
        violation = std::max(violation, o_rep.max_abs_diff);
        ++r.cases;
      }
    weakest_violation = std::min(weakest_violation, violation);
  }
  r.details["circular_max_equivariance_error"] = worst_circular;
  r.details["oversized_min_violation"] = weakest_violation;
  r.worst = worst_circular;
  r.pass = worst_circular <= o.tol.circular_equivariance &&
           weakest_violation > o.tol.oversized_violation;
  return r;
}

/// Receptive-field probes via VJP sweeps.
inline Result rf_suite(const Options &o) {
  Result r{"rf"};
  Rng rng(o.seed + 31);
  using FM = FeatureMap<double>;
  {
    const Shape4 s{1, 1, 5, 4};
    OversizedKernelPair<double> k(1, 5, 4);
    fill_signed_uniform<double>(k.k_h, rng, 0.1, 1.0);
    fill_signed_uniform<double>(k.k_w, rng, 0.1, 1.0);
    const FM x0(s);
    const auto deps = oracle::receptive_field_probe<double>(
        [&](const FM &g) { return parc_oversized_vjp(g, x0, k).grad_input; }, s);
    bool all = true;
    for (const auto &row : deps)
      for (bool b : row)
        all = all && b;
    r.details["oversized_all_true"] = all;
    r.pass = r.pass && all;
    ++r.cases;
  }
  {
    const Shape4 s{1, 1, 20, 20};
    LocalKernel7<double> k(1);
    fill_signed_uniform<double>(k.k, rng, 0.1, 1.0);
    const FM x0(s);
    const auto deps = oracle::receptive_field_probe<double>(
        [&](const FM &g) { return dwconv7x7_vjp(g, x0, k).grad_input; }, s);
    bool bounded = true;
    for (std::size_t p = 0; p < s.plane(); ++p)
      for (std::size_t q = 0; q < s.plane(); ++q) {
        const long dy = std::labs(static_cast<long>(p / s.w) - static_cast<long>(q / s.w));
        const long dx = std::labs(static_cast<long>(p % s.w) - static_cast<long>(q % s.w));
        bounded = bounded && (deps[p][q] == (std::max(dy, dx) <= 3));
      }
    r.details["dwconv7x7_support_bounded"] = bounded;
    r.pass = r.pass && bounded;
    ++r.cases;
  }
  {
    const Shape4 s{1, 1, 5, 4};
    const auto k = OversizedKernelPair<double>::delta(1, 5, 4);
    const FM x0(s);
    const auto deps = oracle::receptive_field_probe<double>(
        [&](const FM &g) { return parc_oversized_vjp(g, x0, k).grad_input; }, s);
    bool diagonal = true;
    for (std::size_t p = 0; p < s.plane(); ++p)
      for (std::size_t q = 0; q < s.plane(); ++q)
        diagonal = diagonal && (deps[p][q] == (p == q));
    r.details["delta_diagonal_only"] = diagonal;
    r.pass = r.pass && diagonal;
    ++r.cases;
  }
  return r;
}

inline const std::vector<std::string> &suite_names() {
  static const std::vector<std::string> names{"oracle", "grad", "commute", "reparam", "shift", "rf"};
  return names;
}

inline Result run_suite(const std::string &name, const Options &o) {
  if (name == "oracle") return oracle_suite(o);
  if (name == "grad") return grad_suite(o);
  if (name == "commute") return commute_suite(o);
  if (name == "reparam") return reparam_suite(o);
  if (name == "shift") return shift_suite(o);
  if (name == "rf") return rf_suite(o);
  throw std::invalid_argument("unknown suite '" + name + "'");
}

} // namespace parc2::suites
