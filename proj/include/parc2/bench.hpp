#pragma once

// Latency harness for the depthwise paths and the reparameterized inference
// model.

#include <chrono>
#include <ostream>

#include <nlohmann/json.hpp>

#include "parc2/blocks.hpp"
#include "parc2/oracle.hpp"

namespace parc2 {

enum class BenchOp {
  separable_fast,   // two lowered 1D passes
  separable_naive,  // two literal oracle passes
  separable_direct, // production parc_oversized
  dense_fast,       // fused dense kernel through the lowering engine
  dense_naive,      // fused dense kernel through the oracle
};

inline const char *to_string(BenchOp op) {
  switch (op) {
  case BenchOp::separable_fast: return "separable-fast";
  case BenchOp::separable_naive: return "separable-naive";
  case BenchOp::separable_direct: return "separable-direct";
  case BenchOp::dense_fast: return "dense-fast";
  case BenchOp::dense_naive: return "dense-naive";
  }
  return "?";
}

inline BenchOp parse_bench_op(const std::string &s) {
  for (BenchOp op : {BenchOp::separable_fast, BenchOp::separable_naive, BenchOp::separable_direct,
                     BenchOp::dense_fast, BenchOp::dense_naive})
    if (s == to_string(op))
      return op;
  throw std::invalid_argument("unknown bench op '" + s + "'");
}

struct BenchReport {
  std::string label;
  Shape4 shape;
  std::size_t kh = 0, kw = 0;
  std::string path;
  std::size_t warmup = 0, iters = 0;
  double median_ns = 0, p10_ns = 0, p90_ns = 0;
  bool verified = false;
  std::uint64_t plan_macs = 0;
};

class VerificationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char *kBenchCsvHeader =
    "label,N,C,H,W,kh,kw,path,median_ns,p10_ns,p90_ns,verified";

inline void write_csv_row(std::ostream &os, const BenchReport &r) {
  os << r.label << ',' << r.shape.n << ',' << r.shape.c << ',' << r.shape.h << ',' << r.shape.w
     << ',' << r.kh << ',' << r.kw << ',' << r.path << ',' << static_cast<std::uint64_t>(r.median_ns)
     << ',' << static_cast<std::uint64_t>(r.p10_ns) << ',' << static_cast<std::uint64_t>(r.p90_ns)
     << ',' << (r.verified ? "true" : "false") << '\n';
}

inline nlohmann::json to_json(const BenchReport &r) {
  return {{"label", r.label},
          {"N", r.shape.n},
          {"C", r.shape.c},
          {"H", r.shape.h},
          {"W", r.shape.w},
          {"kh", r.kh},
          {"kw", r.kw},
          {"path", r.path},
          {"median_ns", static_cast<std::uint64_t>(r.median_ns)},
          {"p10_ns", static_cast<std::uint64_t>(r.p10_ns)},
          {"p90_ns", static_cast<std::uint64_t>(r.p90_ns)},
          {"verified", r.verified}};
}

namespace detail {

inline double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

template <class T> oracle::Kernel<T> oracle_kernel(const Dense2DKernel<T> &k) {
  return {k.channels, k.kh, k.kw, k.k};
}

} // namespace detail

/// Times one depthwise path on a random oversized problem bound to the
/// shape's H x W. The output is checked against the oracle (or, for the
/// oracle paths, against the production operator) before any timing;
/// a mismatch throws VerificationError and no report is produced.
inline BenchReport bench(BenchOp op, Shape4 shape, std::size_t warmup, std::size_t iters,
                         Rng &rng, bool parallel = false, double tol = 1e-4) {
  if (iters < 10)
    throw std::invalid_argument("bench: iters must be >= 10");
  if (warmup < 3)
    throw std::invalid_argument("bench: warmup must be >= 3");
  if (shape.numel() == 0)
    throw DimensionError("bench: empty shape");

  const FeatureMap<float> x = random_normal<float>(shape, rng, 1.0);
  OversizedKernelPair<float> pair(shape.c, shape.h, shape.w, true);
  fill_normal<float>(pair.k_h, rng, 0.1);
  fill_normal<float>(pair.k_w, rng, 0.1);
  fill_normal<float>(pair.bias, rng, 0.1);
  const bool dense = op == BenchOp::dense_fast || op == BenchOp::dense_naive;
  Dense2DKernel<float> fused;
  if (dense) {
    LocalKernel7<float> local(shape.c, true);
    fill_normal<float>(local.k, rng, 0.1);
    fill_normal<float>(local.bias, rng, 0.1);
    fused = fuse_local_global(compose_2d(pair), local);
  }

  const SeparablePlan sep_plan = plan_separable(shape.c, shape.h, shape.w, pair.len_h(),
                                                pair.len_w());
  const LoweringPlan dense_plan =
      dense ? plan_lowering(shape.c, shape.h, shape.w, fused.kh, fused.kw) : LoweringPlan{};

  auto naive_separable = [&] {
    const oracle::Kernel<float> kv{shape.c, pair.len_h(), 1, pair.k_h};
    const oracle::Kernel<float> kh{shape.c, 1, pair.len_w(), pair.k_w};
    return oracle::add_bias(oracle::naive_conv_same(oracle::naive_conv_same(x, kv), kh), pair.bias);
  };
  auto naive_dense = [&] {
    return oracle::add_bias(oracle::naive_conv_same(x, detail::oracle_kernel(fused)), fused.bias);
  };

  std::function<FeatureMap<float>()> run;
  std::function<FeatureMap<float>()> reference;
  switch (op) {
  case BenchOp::separable_fast:
    run = [&] { return fast_parc_oversized(x, pair, sep_plan); };
    reference = naive_separable;
    break;
  case BenchOp::separable_naive:
    run = naive_separable;
    reference = [&] { return parc_oversized(x, pair); };
    break;
  case BenchOp::separable_direct:
    run = [&] { return parc_oversized(x, pair); };
    reference = naive_separable;
    break;
  case BenchOp::dense_fast:
    run = [&] { return fast_dwconv(x, fused, dense_plan); };
    reference = naive_dense;
    break;
  case BenchOp::dense_naive:
    run = naive_dense;
    reference = [&] { return fast_dwconv(x, fused, dense_plan); };
    break;
  }

  const unsigned threads = parallel ? 0u : 1u;
  struct ThreadGuard {
    explicit ThreadGuard(unsigned n) { set_thread_limit(n); }
    ~ThreadGuard() { set_thread_limit(0); }
  } guard(threads);

  const auto report = oracle::check_equivalence(run(), reference(), tol);
  if (!report.pass)
    throw VerificationError(detail::concat("bench ", to_string(op), ": output differs from reference by ",
                                           report.max_abs_diff, " > ", tol));

  for (std::size_t i = 0; i < warmup; ++i)
    (void)run();
  std::vector<double> samples;
  samples.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    FeatureMap<float> out = run();
    const auto t1 = std::chrono::steady_clock::now();
    if (out.size() == 0)
      throw std::logic_error("bench: empty output");
    samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }

  BenchReport r;
  r.path = to_string(op);
  r.label = detail::concat(r.path, "_C", shape.c, "_", shape.h, "x", shape.w);
  r.shape = shape;
  r.kh = dense ? fused.kh : pair.len_h();
  r.kw = dense ? fused.kw : pair.len_w();
  r.warmup = warmup;
  r.iters = iters;
  r.median_ns = detail::percentile(samples, 0.5);
  r.p10_ns = detail::percentile(samples, 0.1);
  r.p90_ns = detail::percentile(samples, 0.9);
  r.verified = true;
  r.plan_macs = dense ? dense_plan.macs : sep_plan.macs();
  return r;
}

/// Inference form of a model: every ParC branch runs one fused dense
/// depthwise kernel (rank-1 oversized product plus the centred 7x7) through
/// the lowering engine.
template <class T> Model<T> reparam_inference_mode(const Model<T> &m) {
  Model<T> out = m;
  fuse_block_kernels(out);
  return out;
}

} // namespace parc2
