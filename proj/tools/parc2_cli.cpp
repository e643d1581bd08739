// parc2: forward / check / count / bench / resize / init.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or format error,
// 3 non-finite numerics.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "parc2/parc2.hpp"

namespace {

using namespace parc2;

enum Exit : int { kOk = 0, kVerify = 1, kUsage = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_dims(const std::string &text, std::size_t count) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("bad dimension list '" + text + "'");
    dims.push_back(std::stoull(part));
  }
  if (dims.size() != count)
    throw UsageError(detail::concat("expected ", count, " 'x'-separated sizes, got '", text, "'"));
  for (auto d : dims)
    if (d == 0)
      throw UsageError("sizes must be positive in '" + text + "'");
  return dims;
}

Shape4 parse_shape(const std::string &text) {
  const auto d = parse_dims(text, 4);
  return {d[0], d[1], d[2], d[3]};
}

void require_seed(const std::optional<std::uint64_t> &seed, const std::string &why) {
  if (!seed)
    throw UsageError("--seed is required when " + why);
}

/// Reference totals for named variants at 224 (params in M, MACs in G).
std::optional<std::pair<double, double>> reference_counts(const std::string &variant) {
  static const std::map<std::string, std::pair<double, double>> table{
      {"XT", {7.4, 1.6}}, {"T", {25.0, 4.3}}, {"S", {39.0, 7.8}}, {"B", {56.0, 12.5}}};
  auto it = table.find(variant);
  if (it == table.end())
    return std::nullopt;
  return it->second;
}

// --------------------------------------------------------------------------
// Config sources

struct ModelSource {
  std::string variant;
  std::string config_path;
  std::string checkpoint;
  std::size_t input_size = 224;
  std::string precision = "f32";
  std::optional<std::uint64_t> seed;

  void add_model_flags(CLI::App *cmd, bool with_checkpoint) {
    cmd->add_option("--variant", variant, "XT, T, S or B");
    cmd->add_option("--config", config_path, "JSON model config");
    if (with_checkpoint)
      cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    cmd->add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  }
};

ModelConfig load_config_file(const std::string &path, std::size_t input_size) {
  std::ifstream in(path);
  if (!in)
    throw CheckpointError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError("malformed config '" + path + "': " + e.what());
  }
  try {
    if (!j.contains("channels")) {
      auto cfg = ModelConfig::named(j.at("variant").get<std::string>(),
                                    j.value("input_size", input_size));
      cfg.num_classes = j.value("num_classes", cfg.num_classes);
      return cfg;
    }
    if (!j.contains("input_size"))
      j["input_size"] = {input_size, input_size};
    else if (j["input_size"].is_number())
      j["input_size"] = {j["input_size"], j["input_size"]};
    auto cfg = config_from_json(j);
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception &e) {
    throw CheckpointError("config '" + path + "': " + e.what());
  }
}

std::optional<ModelConfig> requested_config(const ModelSource &src, std::size_t h, std::size_t w) {
  if (!src.variant.empty() && !src.config_path.empty())
    throw UsageError("give either --variant or --config, not both");
  std::optional<ModelConfig> cfg;
  if (!src.variant.empty())
    cfg = ModelConfig::named(src.variant, h);
  else if (!src.config_path.empty())
    cfg = load_config_file(src.config_path, h);
  if (cfg && src.config_path.empty()) {
    cfg->input_h = h;
    cfg->input_w = w;
  }
  return cfg;
}

std::string checkpoint_dtype(const std::string &path) {
  const auto h = parse_checkpoint_header(read_file(path));
  if (h.manifest.empty())
    throw CheckpointError("checkpoint '" + path + "' has an empty manifest");
  return h.manifest.front().value("dtype", std::string("f32"));
}

// --------------------------------------------------------------------------
// forward

struct ForwardArgs {
  ModelSource src;
  std::string input = "random:1x3x224x224";
  std::string input_shape;
  std::string out = "logits.csv";
  bool fused = false;
};

template <class T> FeatureMap<T> load_input(const ForwardArgs &a) {
  if (a.input.rfind("random:", 0) == 0) {
    require_seed(a.src.seed, "the input is random");
    Rng rng(*a.src.seed + 1);
    return random_normal<T>(parse_shape(a.input.substr(7)), rng, 1.0);
  }
  if (a.input_shape.empty())
    throw UsageError("--input-shape NxCxHxW is required with a raw input file");
  const Shape4 s = parse_shape(a.input_shape);
  const auto bytes = read_file(a.input);
  if (bytes.size() != s.numel() * sizeof(T))
    throw CheckpointError(detail::concat("input file '", a.input, "' has ", bytes.size(),
                                         " bytes, shape ", s, " needs ", s.numel() * sizeof(T)));
  FeatureMap<T> x(s);
  std::memcpy(x.values().data(), bytes.data(), bytes.size());
  return x;
}

template <class T> int run_forward(const ForwardArgs &a) {
  const FeatureMap<T> x = load_input<T>(a);
  const auto requested = requested_config(a.src, x.height(), x.width());
  Model<T> model;
  if (!a.src.checkpoint.empty()) {
    model = requested ? checkpoint_load<T>(a.src.checkpoint, *requested)
                      : checkpoint_load<T>(a.src.checkpoint);
    if (model.config.input_h != x.height() || model.config.input_w != x.width())
      throw CheckpointError(detail::concat("checkpoint is bound to ", model.config.input_h, "x",
                                           model.config.input_w, " but the input is ", x.height(),
                                           "x", x.width(), "; run `parc2 resize` first"));
  } else {
    if (!requested)
      throw UsageError("forward needs --variant, --config or --checkpoint");
    require_seed(a.src.seed, "weights are randomly initialised");
    Rng rng(*a.src.seed);
    model = build_model<T>(*requested, rng);
  }
  if (a.fused)
    model = reparam_inference_mode(model);

  const FeatureMap<T> logits = model_forward(model, x);
  std::ofstream out(a.out, std::ios::trunc);
  if (!out)
    throw CheckpointError("cannot write '" + a.out + "'");
  out << std::setprecision(std::numeric_limits<T>::max_digits10);
  const std::size_t classes = logits.channels();
  for (std::size_t n = 0; n < logits.batch(); ++n) {
    for (std::size_t k = 0; k < classes; ++k)
      out << (k ? "," : "") << logits(n, k, 0, 0);
    out << '\n';
  }

  std::cout << "variant " << model.config.variant << (a.fused ? " (fused)" : "") << ", input "
            << x.shape() << ", logits -> " << a.out << '\n';
  for (std::size_t n = 0; n < logits.batch(); ++n) {
    std::vector<std::size_t> idx(classes);
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t top = std::min<std::size_t>(5, classes);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                      [&](std::size_t i, std::size_t j) {
                        const T a_ = logits(n, i, 0, 0), b_ = logits(n, j, 0, 0);
                        return a_ > b_ || (a_ == b_ && i < j);
                      });
    std::cout << "sample " << n << ": argmax " << idx[0] << ", top-5";
    for (std::size_t i = 0; i < top; ++i)
      std::cout << ' ' << idx[i];
    std::cout << '\n';
  }
  return kOk;
}

// --------------------------------------------------------------------------
// check

struct CheckArgs {
  std::string suite = "all";
  std::string report;
  std::optional<std::uint64_t> seed;
  std::size_t cases = 100;
  bool inject_fault = false;
};

int run_check(const CheckArgs &a) {
  suites::Options o;
  if (a.seed)
    o.seed = *a.seed;
  o.cases = a.cases;
  o.inject_fault = a.inject_fault;
  std::vector<std::string> names;
  if (a.suite == "all")
    names = suites::suite_names();
  else
    names = {a.suite};
  nlohmann::json report = {{"seed", o.seed}, {"suites", nlohmann::json::array()}};
  bool all_pass = true;
  for (const auto &name : names) {
    const auto t0 = std::chrono::steady_clock::now();
    const suites::Result r = suites::run_suite(name, o);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto j = suites::to_json(r);
    j["seconds"] = secs;
    report["suites"].push_back(j);
    all_pass = all_pass && r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(8) << name << " cases "
              << r.cases << "  worst " << r.worst << "  (" << std::fixed << std::setprecision(2)
              << secs << " s)" << std::defaultfloat << std::setprecision(6) << '\n';
    if (!r.pass && r.details.contains("failures")) {
      const auto &f = r.details["failures"].front();
      std::cout << "  first failure: " << f.dump() << '\n';
    }
  }
  report["pass"] = all_pass;
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::trunc);
    if (!out)
      throw CheckpointError("cannot write '" + a.report + "'");
    out << report.dump(2) << '\n';
  }
  return all_pass ? kOk : kVerify;
}

// --------------------------------------------------------------------------
// count

int run_count(const ModelSource &src) {
  const auto cfg = requested_config(src, src.input_size, src.input_size);
  if (!cfg)
    throw UsageError("count needs --variant or --config");
  const CountReport r = count_params_and_macs(*cfg);
  std::cout << "variant " << cfg->variant << " @ " << cfg->input_h << "x" << cfg->input_w << "\n\n";
  std::cout << std::left << std::setw(30) << "module" << std::right << std::setw(14) << "params"
            << std::setw(18) << "MACs" << '\n';
  for (const auto &l : r.lines)
    std::cout << std::left << std::setw(30) << l.module << std::right << std::setw(14) << l.params
              << std::setw(18) << l.macs << '\n';
  std::cout << std::left << std::setw(30) << "total" << std::right << std::setw(14)
            << r.total_params << std::setw(18) << r.total_macs << "\n\n";
  std::cout << std::fixed << std::setprecision(4) << "params " << r.total_params / 1e6
            << " M, MACs " << r.total_macs / 1e9 << " G\n";
  for (std::size_t s = 0; s < 4; ++s) {
    const auto formula = channel_bgu_param_formula(cfg->channels[s], cfg->alpha_tilde);
    std::cout << "stage " << s << " channel BGU per block: " << r.channel_bgu_per_block[s]
              << " (closed form " << formula << ", FFN x4 " << ffn_param_formula(cfg->channels[s], 4.0)
              << ")\n";
  }
  const auto ref = reference_counts(cfg->variant);
  if (ref && cfg->input_h == 224 && cfg->input_w == 224) {
    const double dp = (r.total_params / 1e6 - ref->first) / ref->first * 100;
    const double dm = (r.total_macs / 1e9 - ref->second) / ref->second * 100;
    std::cout << std::setprecision(2) << "reference " << ref->first << " M / " << ref->second
              << " G: params " << std::showpos << dp << "%, MACs " << dm << "%" << std::noshowpos
              << '\n';
  }
  return kOk;
}

// --------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string op = "separable-fast";
  std::string shape = "1x64x56x56";
  long iters = 20;
  long warmup = 3;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
  std::string csv, json;
};

int run_bench(const BenchArgs &a) {
  if (a.iters < 10)
    throw UsageError("--iters must be at least 10");
  if (a.warmup < 3)
    throw UsageError("--warmup must be at least 3");
  require_seed(a.seed, "benchmark inputs are random");
  std::vector<BenchOp> ops;
  if (a.op == "all")
    ops = {BenchOp::separable_fast, BenchOp::separable_naive, BenchOp::separable_direct,
           BenchOp::dense_fast, BenchOp::dense_naive};
  else
    ops = {parse_bench_op(a.op)};
  const Shape4 shape = parse_shape(a.shape);
  std::vector<BenchReport> reports;
  for (BenchOp op : ops) {
    Rng rng(*a.seed);
    reports.push_back(bench(op, shape, static_cast<std::size_t>(a.warmup),
                            static_cast<std::size_t>(a.iters), rng, a.parallel));
  }
  std::cout << kBenchCsvHeader << '\n';
  for (const auto &r : reports)
    write_csv_row(std::cout, r);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv, std::ios::trunc);
    out << kBenchCsvHeader << '\n';
    for (const auto &r : reports)
      write_csv_row(out, r);
  }
  if (!a.json.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto &r : reports)
      j.push_back(to_json(r));
    std::ofstream(a.json, std::ios::trunc) << j.dump(2) << '\n';
  }
  return kOk;
}

// --------------------------------------------------------------------------
// resize / init

struct ResizeArgs {
  std::string checkpoint, to, out;
};

template <class T> int resize_as(const ResizeArgs &a, std::size_t h, std::size_t w) {
  const Model<T> m = checkpoint_load<T>(a.checkpoint);
  const Model<T> r = adapt_to_resolution(m, h, w);
  checkpoint_save(r, a.out);
  std::cout << "resized " << m.config.input_h << "x" << m.config.input_w << " -> " << h << "x" << w
            << ", stage-0 kernels " << m.stages[0].blocks.front().spatial.oversized.len_h()
            << " -> " << r.stages[0].blocks.front().spatial.oversized.len_h() << ", wrote "
            << a.out << '\n';
  return kOk;
}

int run_resize(const ResizeArgs &a) {
  const auto d = parse_dims(a.to, 2);
  if (d[0] % 32 != 0 || d[1] % 32 != 0)
    throw UsageError(detail::concat("--to ", a.to, ": both sizes must be multiples of 32"));
  return checkpoint_dtype(a.checkpoint) == "f64" ? resize_as<double>(a, d[0], d[1])
                                                 : resize_as<float>(a, d[0], d[1]);
}

struct InitArgs {
  ModelSource src;
  std::string out;
};

template <class T> int init_as(const InitArgs &a) {
  const auto cfg = requested_config(a.src, a.src.input_size, a.src.input_size);
  if (!cfg)
    throw UsageError("init needs --variant or --config");
  require_seed(a.src.seed, "weights are randomly initialised");
  Rng rng(*a.src.seed);
  const Model<T> m = build_model<T>(*cfg, rng);
  checkpoint_save(m, a.out);
  std::cout << "wrote " << cfg->variant << " @ " << cfg->input_h << "x" << cfg->input_w << " ("
            << dtype_name<T>() << ") to " << a.out << '\n';
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"ParC V2 operator library: verification, counting, benchmarking"};
  app.require_subcommand(1);

  ForwardArgs fwd;
  auto *forward = app.add_subcommand("forward", "run a model and write logits as CSV");
  fwd.src.add_model_flags(forward, true);
  forward->add_option("--seed", fwd.src.seed, "seed for weights and random input");
  forward->add_option("--input", fwd.input, "random:NxCxHxW or a raw tensor file");
  forward->add_option("--input-shape", fwd.input_shape, "NxCxHxW of a raw input file");
  forward->add_option("--out", fwd.out, "logits CSV path");
  forward->add_flag("--fused", fwd.fused, "use the reparameterized inference model");

  CheckArgs chk;
  auto *check = app.add_subcommand("check", "run verification suites");
  check->add_option("--suite", chk.suite)
      ->check(CLI::IsMember({"oracle", "grad", "commute", "reparam", "shift", "rf", "all"}));
  check->add_option("--report", chk.report, "JSON report path");
  check->add_option("--seed", chk.seed, "override the fixed suite seed");
  check->add_option("--cases", chk.cases, "random cases for oracle/commute/reparam");
  check->add_flag("--inject-fault", chk.inject_fault, "perturb one 7x7 tap by 1e-2");

  ModelSource cnt;
  auto *count = app.add_subcommand("count", "parameter and MAC table");
  cnt.add_model_flags(count, false);
  count->add_option("--input-size", cnt.input_size, "square input side");

  BenchArgs bch;
  auto *benchcmd = app.add_subcommand("bench", "time a depthwise path after verifying it");
  benchcmd->add_option("--op", bch.op,
                       "separable-fast, separable-naive, separable-direct, dense-fast, dense-naive or all");
  benchcmd->add_option("--shape", bch.shape, "NxCxHxW");
  benchcmd->add_option("--iters", bch.iters, "timed iterations (>= 10)");
  benchcmd->add_option("--warmup", bch.warmup, "warmup iterations (>= 3)");
  benchcmd->add_option("--seed", bch.seed);
  benchcmd->add_flag("--parallel", bch.parallel, "allow PARC2_THREADS workers");
  benchcmd->add_option("--csv", bch.csv);
  benchcmd->add_option("--json", bch.json);

  ResizeArgs rsz;
  auto *resize = app.add_subcommand("resize", "rebind oversized kernels to a new input size");
  resize->add_option("--checkpoint", rsz.checkpoint)->required();
  resize->add_option("--to", rsz.to, "HxW")->required();
  resize->add_option("--out", rsz.out)->required();

  InitArgs ini;
  auto *init = app.add_subcommand("init", "write a freshly initialised checkpoint");
  ini.src.add_model_flags(init, false);
  init->add_option("--input-size", ini.src.input_size);
  init->add_option("--seed", ini.src.seed);
  init->add_option("--out", ini.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*forward)
      return fwd.src.precision == "f64" ? run_forward<double>(fwd) : run_forward<float>(fwd);
    if (*check)
      return run_check(chk);
    if (*count)
      return run_count(cnt);
    if (*benchcmd)
      return run_bench(bch);
    if (*resize)
      return run_resize(rsz);
    if (*init)
      return ini.src.precision == "f64" ? init_as<double>(ini) : init_as<float>(ini);
  } catch (const NumericError &e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const VerificationError &e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kVerify;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
