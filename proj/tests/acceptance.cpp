// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "parc2/parc2.hpp"

#ifndef PARC2_CLI_PATH
#define PARC2_CLI_PATH "parc2"
#endif

namespace {

using namespace parc2;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string &title, bool pass, const std::string &detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << id << "] " << title << ": " << detail
            << std::endl;
  failures += !pass;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string summary(const suites::Result &r) {
  return detail::concat("cases=", r.cases, " worst=", r.worst);
}

void oracle_equivalence(const suites::Options &o) {
  const auto t0 = Clock::now();
  const auto r = suites::oracle_suite(o);
  const double t = seconds_since(t0);
  report(1, "oracle equivalence", r.pass && t < 120 && o.cases >= 100,
         summary(r) + detail::concat(" problems=", o.cases, " time=", t, "s"));
}

void commutativity(const suites::Options &o) {
  const auto r = suites::commute_suite(o);
  report(2, "vertical/horizontal order", r.pass, summary(r));
}

void reparameterization(const suites::Options &o) {
  const auto t0 = Clock::now();
  const auto r = suites::reparam_suite(o);
  const double t = seconds_since(t0);
  report(3, "reparameterization", r.pass && t < 120,
         summary(r) + detail::concat(" logits_diff=", r.details.value("model_logits_max_abs_diff", -1.0),
                                     " argmax_kept=", r.details.value("argmax_preserved", 0), "/",
                                     r.details.value("model_inputs", 0), " time=", t, "s"));
}

void gradients(const suites::Options &o) {
  const auto r = suites::grad_suite(o);
  bool enough = true;
  for (const auto &[op, d] : r.details.items())
    enough = enough && d.value("cases", 0) >= 20;
  report(4, "analytic vs finite-difference gradients", r.pass && enough,
         summary(r) + detail::concat(" ops=", r.details.size(), " per-op>=20:", enough));
}

void position_contrast(const suites::Options &o) {
  const auto s = suites::shift_suite(o);
  const auto rf = suites::rf_suite(o);
  report(5, "circular equivariance vs oversized, receptive fields", s.pass && rf.pass,
         detail::concat("circular_err=", s.details.value("circular_max_equivariance_error", -1.0),
                        " oversized_min_violation=", s.details.value("oversized_min_violation", -1.0),
                        " rf=", rf.details.dump()));
}

void counting() {
  struct Ref {
    const char *name;
    double params_m, macs_g;
  };
  const Ref refs[] = {{"XT", 7.4, 1.6}, {"T", 25.0, 4.3}, {"S", 39.0, 7.8}, {"B", 56.0, 12.5}};
  bool pass = true;
  std::string detail_text;
  for (const Ref &ref : refs) {
    const auto cfg = ModelConfig::named(ref.name, 224);
    const auto r = count_params_and_macs(cfg);
    const double p = r.total_params / 1e6, m = r.total_macs / 1e9;
    const double dp = (p - ref.params_m) / ref.params_m, dm = (m - ref.macs_g) / ref.macs_g;
    const bool ok = std::abs(dp) <= 0.05 && std::abs(dm) <= 0.10;
    pass = pass && ok;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %.3fM(%+.1f%%) %.3fG(%+.1f%%)%s; ", ref.name, p, dp * 100,
                  m, dm * 100, ok ? "" : " OUT");
    detail_text += buf;
    for (std::size_t s = 0; s < 4; ++s) {
      const auto c = cfg.channels[s];
      pass = pass && r.channel_bgu_per_block[s] == channel_bgu_param_formula(c, 2.5) &&
             channel_bgu_param_formula(c, 2.5) < ffn_param_formula(c, 4.0);
    }
  }
  report(6, "parameter and MAC counts", pass, detail_text + "channel-BGU formula and FFN bound checked");
}

void kernel_sizes() {
  Rng rng(1);
  const auto m = build_model<float>(ModelConfig::named("T", 224), rng);
  const auto &k = m.stages[0].blocks[0].spatial.oversized;
  const auto small = adapt_to_resolution(m, 160, 160);
  const auto &ks = small.stages[0].blocks[0].spatial.oversized;
  const auto same = adapt_to_resolution(m, 224, 224);
  bool identical = true;
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t b = 0; b < m.stages[s].blocks.size(); ++b) {
      const auto &a = m.stages[s].blocks[b].spatial.oversized;
      const auto &c = same.stages[s].blocks[b].spatial.oversized;
      identical = identical && a.k_h == c.k_h && a.k_w == c.k_w && a.bias == c.bias;
    }
  const bool pass = k.len_h() == 111 && k.len_w() == 111 && ks.len_h() == 79 && ks.len_w() == 79 &&
                    identical;
  report(7, "oversized kernel lengths", pass,
         detail::concat("224: ", k.len_h(), "x", k.len_w(), ", 160: ", ks.len_h(), "x", ks.len_w(),
                        ", same-size resize identical: ", identical));
}

void performance() {
  const Shape4 shape{1, 64, 56, 56};
  bool pass = true;
  std::string text;
  try {
    Rng ra(11), rb(11);
    const auto fast = bench(BenchOp::separable_fast, shape, 3, 10, ra);
    const auto naive = bench(BenchOp::separable_naive, shape, 3, 10, rb);
    const double speedup = naive.median_ns / fast.median_ns;
    pass = fast.verified && naive.verified && speedup >= 2.0;
    text = detail::concat("fast ", fast.median_ns / 1e6, " ms, naive ", naive.median_ns / 1e6,
                          " ms, speedup ", speedup, "x");
  } catch (const std::exception &e) {
    pass = false;
    text = e.what();
  }
  const auto dense = plan_lowering(64, 56, 56, 111, 111);
  const auto sep = plan_separable(64, 56, 56, 111, 111);
  const bool ratio_exact = dense.macs * 222 == sep.macs() * 12321;
  Rng rng(12);
  const auto x = random_normal<float>(shape, rng, 1.0);
  OversizedKernelPair<float> pair(64, 56, 56);
  fill_normal<float>(pair.k_h, rng, 0.1);
  fill_normal<float>(pair.k_w, rng, 0.1);
  std::uint64_t counted = 0;
  (void)fast_parc_oversized(x, pair, sep, &counted);
  pass = pass && ratio_exact && counted == sep.macs();
  report(8, "lowered path speed and MAC accounting", pass,
         text + detail::concat("; plan ratio ", static_cast<double>(dense.macs) / sep.macs(),
                               " exact=", ratio_exact, ", executed MACs ", counted, " = plan ",
                               sep.macs()));
}

std::string slurp(const std::filesystem::path &p) {
  const auto bytes = read_file(p.string());
  return {bytes.begin(), bytes.end()};
}

void determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "parc2_acceptance";
  fs::create_directories(dir);
  bool pass = true;
  std::string text;
  const std::string base = std::string(PARC2_CLI_PATH) +
                           " forward --variant XT --seed 42 --input random:2x3x64x64 --out ";
  const fs::path a = dir / "a.csv", b = dir / "b.csv";
  const int rc1 = std::system((base + a.string() + " > /dev/null").c_str());
  const int rc2 = std::system((base + b.string() + " > /dev/null").c_str());
  if (rc1 != 0 || rc2 != 0) {
    pass = false;
    text = detail::concat("forward exit codes ", rc1, ", ", rc2);
  } else {
    const std::string ca = slurp(a), cb = slurp(b);
    const bool same = ca == cb && !ca.empty();
    const auto rows = std::count(ca.begin(), ca.end(), '\n');
    pass = same && rows == 2;
    text = detail::concat("CSV identical: ", same, ", rows ", rows);
  }

  Rng rng(42);
  const auto m = build_model<float>(ModelConfig::named("XT", 224), rng);
  const fs::path ck = dir / "xt.ckpt";
  checkpoint_save(m, ck.string());
  const auto back = checkpoint_load<float>(ck.string());
  bool tensors_equal = true;
  std::vector<const std::vector<float> *> lhs;
  for_each_tensor(m, [&](const std::string &, const std::vector<float> &v, const auto &) { lhs.push_back(&v); });
  std::size_t i = 0;
  for_each_tensor(back, [&](const std::string &, const std::vector<float> &v, const auto &) {
    tensors_equal = tensors_equal && i < lhs.size() &&
                    std::memcmp(lhs[i]->data(), v.data(), v.size() * sizeof(float)) == 0 &&
                    lhs[i]->size() == v.size();
    ++i;
  });
  const bool bytes_equal = serialize_checkpoint(back) == read_file(ck.string());
  pass = pass && tensors_equal && bytes_equal && i == lhs.size();
  report(9, "end-to-end determinism", pass,
         text + detail::concat("; checkpoint tensors bit-identical: ", tensors_equal,
                               ", re-save identical: ", bytes_equal));
  fs::remove_all(dir);
}

} // namespace

int main() {
  suites::Options o; // 100 oracle/commute cases, 20 gradient cases per op, 32 model inputs
  oracle_equivalence(o);
  commutativity(o);
  reparameterization(o);
  gradients(o);
  position_contrast(o);
  counting();
  kernel_sizes();
  performance();
  determinism();
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) failed"
                         : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
