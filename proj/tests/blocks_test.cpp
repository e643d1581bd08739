#include <gtest/gtest.h>

#include "parc2/blocks.hpp"
#include "parc2/oracle.hpp"

namespace parc2 {
namespace {

constexpr double kGeluOne = 0.8413447460685429; // gelu(1)

TEST(ChannelBgu, ScalarByHand) {
  // C = 1, hidden = 1: out = w3 * gelu(w1 x) * (w2 x).
  ChannelBGUParams<double> p(1, 1, 1.0);
  p.w1.weight = {1};
  p.w2.weight = {2};
  p.w3.weight = {3};
  const FeatureMap<double> x({1, 1, 1, 1}, std::vector<double>{1});
  EXPECT_NEAR(channel_bgu(x, p)(0, 0, 0, 0), 3 * kGeluOne * 2, 1e-12);
}

TEST(ChannelBgu, ParamCountFormula) {
  EXPECT_EQ(channel_bgu_param_formula(64, 2.5), 31104u);
  EXPECT_EQ(ChannelBGUParams<float>(64, 160, 2.5).param_count(), 31104u);
  for (std::uint64_t c : {32, 64, 128, 320, 512})
    EXPECT_LT(channel_bgu_param_formula(c, 2.5), ffn_param_formula(c, 4.0)) << c;
}

TEST(ChannelBgu, ZeroInputGivesBias) {
  ChannelBGUParams<double> p(3, 5, 2.5);
  Rng rng(1);
  fill_normal<double>(p.w1.weight, rng, 1.0);
  fill_normal<double>(p.w2.weight, rng, 1.0);
  fill_normal<double>(p.w3.weight, rng, 1.0);
  p.w3.bias = {0.5, -1, 2};
  const auto y = channel_bgu(FeatureMap<double>(1, 3, 2, 2), p);
  for (std::size_t c = 0; c < 3; ++c)
    for (double v : y.plane(0, c))
      EXPECT_EQ(v, p.w3.bias[c]);
}

TEST(SpatialBgu, IdentityWiringReducesToProduct) {
  // Identity pointwise layers and delta kernels: out = (x + x) * x.
  SpatialBGUParams<double> p(2, 4, 4);
  p.pw_in = p.pw_mid = p.pw_gate = p.pw_out = PointwiseParams<double>::identity(2);
  p.local = LocalKernel7<double>::delta(2);
  p.local.bias.assign(2, 0.0);
  p.oversized = OversizedKernelPair<double>::delta(2, 4, 4);
  p.oversized.bias.assign(2, 0.0);
  Rng rng(2);
  const auto x = random_normal<double>({1, 2, 4, 4}, rng, 1.0);
  const auto y = spatial_bgu(x, p);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(y.values()[i], 2 * x.values()[i] * x.values()[i], 1e-12);
}

TEST(SpatialBgu, FusedPathMatchesBranches) {
  Rng rng(3);
  SpatialBGUParams<float> p(4, 8, 8);
  for (auto *pw : {&p.pw_in, &p.pw_mid, &p.pw_gate, &p.pw_out})
    fill_normal<float>(pw->weight, rng, 0.3);
  fill_normal<float>(p.local.k, rng, 0.3);
  fill_normal<float>(p.local.bias, rng, 0.3);
  fill_normal<float>(p.oversized.k_h, rng, 0.3);
  fill_normal<float>(p.oversized.k_w, rng, 0.3);
  fill_normal<float>(p.oversized.bias, rng, 0.3);
  const auto x = random_normal<float>({2, 4, 8, 8}, rng, 1.0);
  const auto ref = spatial_bgu(x, p);
  p.fused = fuse_local_global(compose_2d(p.oversized), p.local);
  EXPECT_TRUE(oracle::check_equivalence(spatial_bgu(x, p), ref, 1e-4).pass);
}

TEST(Block, ZeroResScaleIsIdentity) {
  const auto cfg = ModelConfig::named("XT", 64);
  Rng rng(4);
  auto m = build_model<double>(cfg, rng);
  auto blk = m.stages[0].blocks[0];
  std::fill(blk.res_scale1.begin(), blk.res_scale1.end(), 0.0);
  std::fill(blk.res_scale2.begin(), blk.res_scale2.end(), 0.0);
  const auto x = random_normal<double>({1, 48, 16, 16}, rng, 1.0);
  EXPECT_EQ(parcv2_block(x, blk), x);
}

SpatialBGUParams<double> random_spatial(std::size_t c, std::size_t h, std::size_t w, Rng &rng) {
  SpatialBGUParams<double> p(c, h, w);
  for (auto *pw : {&p.pw_in, &p.pw_mid, &p.pw_gate, &p.pw_out}) {
    fill_normal<double>(pw->weight, rng, 0.3);
    fill_normal<double>(pw->bias, rng, 0.3);
  }
  fill_normal<double>(p.local.k, rng, 0.3);
  fill_normal<double>(p.oversized.k_h, rng, 0.3);
  fill_normal<double>(p.oversized.k_w, rng, 0.3);
  return p;
}

TEST(ParcBranch, LocalDeltaPathIsIdentity) {
  SpatialBGUParams<double> p(3, 5, 5);
  p.pw_in = p.pw_mid = PointwiseParams<double>::identity(3);
  p.local = LocalKernel7<double>::delta(3);
  p.local.bias.assign(3, 0.0);
  Rng rng(20);
  const auto x = random_normal<double>({1, 3, 5, 5}, rng, 1.0);
  EXPECT_EQ(parc_branch(x, p), x);
}

TEST(ParcBranch, OversizedDeltaPathIsIdentity) {
  SpatialBGUParams<double> p(3, 5, 5);
  p.pw_in = p.pw_mid = PointwiseParams<double>::identity(3);
  p.oversized = OversizedKernelPair<double>::delta(3, 5, 5);
  Rng rng(21);
  const auto x = random_normal<double>({1, 3, 5, 5}, rng, 1.0);
  EXPECT_EQ(parc_branch(x, p), x);
}

TEST(SpatialBgu, NeutralGate) {
  Rng rng(22);
  auto p = random_spatial(4, 6, 6, rng);
  std::fill(p.pw_gate.weight.begin(), p.pw_gate.weight.end(), 0.0);
  std::fill(p.pw_gate.bias.begin(), p.pw_gate.bias.end(), 1.0);
  const auto x = random_normal<double>({1, 4, 6, 6}, rng, 1.0);
  EXPECT_EQ(spatial_bgu(x, p), pointwise_conv(parc_branch(x, p), p.pw_out));
}

TEST(SpatialBgu, AnnihilatingGate) {
  Rng rng(23);
  auto p = random_spatial(4, 6, 6, rng);
  p.pw_gate = PointwiseParams<double>(4, 4);
  const auto x = random_normal<double>({1, 4, 6, 6}, rng, 1.0);
  const auto y = spatial_bgu(x, p);
  for (std::size_t c = 0; c < 4; ++c)
    for (double v : y.plane(0, c))
      EXPECT_EQ(v, p.pw_out.bias[c]);
}

TEST(Block, ZeroedOutputLayersGiveIdentity) {
  Rng rng(24);
  auto m = build_model<double>(ModelConfig::named("XT", 64), rng);
  auto blk = m.stages[1].blocks[0];
  blk.spatial.pw_out = PointwiseParams<double>(96, 96);
  blk.channel.w3 = PointwiseParams<double>(blk.channel.w3.in, 96);
  const auto x = random_normal<double>({1, 96, 8, 8}, rng, 1.0);
  EXPECT_EQ(parcv2_block(x, blk), x);
}

TEST(Block, RandomBlockChangesInput) {
  Rng rng(25);
  auto m = build_model<double>(ModelConfig::named("XT", 32), rng);
  const auto x = random_normal<double>({2, 48, 8, 8}, rng, 1.0);
  const auto y = parcv2_block(x, m.stages[0].blocks[0]);
  EXPECT_TRUE(y.all_finite());
  EXPECT_NE(y, x);
}

TEST(Patchify, AveragesWithUniformWeights) {
  PatchConv<double> p(1, 1, 2);
  p.weight.assign(4, 0.25);
  const FeatureMap<double> x({1, 1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(patchify(x, p).storage(), (std::vector<double>{3.5, 5.5}));
}

TEST(Model, ConfigTable) {
  EXPECT_EQ(ModelConfig::named("XT").channels, (std::array<std::size_t, 4>{48, 96, 192, 320}));
  EXPECT_EQ(ModelConfig::named("B").blocks, (std::array<std::size_t, 4>{3, 9, 24, 3}));
  EXPECT_THROW(ModelConfig::named("L"), std::invalid_argument);
  auto bad = ModelConfig::named("XT", 64);
  bad.input_h = 60;
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(Model, InitialisationRules) {
  Rng rng(5);
  const auto m = build_model<float>(ModelConfig::named("XT", 64), rng);
  for_each_tensor(m, [](const std::string &name, const std::vector<float> &v, const auto &) {
    if (name.find("res_scale") != std::string::npos) {
      for (float e : v)
        ASSERT_EQ(e, 1.0f) << name;
    } else if (name.find("norm") != std::string::npos) {
      const float want = name.ends_with(".weight") ? 1.0f : 0.0f;
      for (float e : v)
        ASSERT_EQ(e, want) << name;
    } else if (name.ends_with(".bias")) {
      for (float e : v)
        ASSERT_EQ(e, 0.0f) << name;
    } else {
      for (float e : v)
        ASSERT_LE(std::abs(e), 0.04f + 1e-7f) << name;
    }
  });
}

TEST(Model, TensorSpecsMatchAllocatedModel) {
  const auto cfg = ModelConfig::named("XT", 64);
  const auto specs = tensor_specs(cfg);
  const auto m = allocate_model<float>(cfg);
  std::size_t i = 0;
  for_each_tensor(m, [&](const std::string &name, const std::vector<float> &v, const auto &shape) {
    ASSERT_LT(i, specs.size());
    EXPECT_EQ(specs[i].name, name);
    EXPECT_EQ(specs[i].shape, shape);
    EXPECT_EQ(specs[i].numel(), v.size()) << name;
    ++i;
  });
  EXPECT_EQ(i, specs.size());
}

TEST(Model, ForwardShapeAndDeterminism) {
  const auto cfg = ModelConfig::named("XT", 64);
  Rng a(6), b(6);
  const auto ma = build_model<float>(cfg, a);
  const auto mb = build_model<float>(cfg, b);
  Rng ra(7), rb(7);
  const auto xa = random_normal<float>({2, 3, 64, 64}, ra, 1.0);
  const auto xb = random_normal<float>({2, 3, 64, 64}, rb, 1.0);
  const auto ya = model_forward(ma, xa);
  EXPECT_EQ(ya.shape(), (Shape4{2, 1000, 1, 1}));
  EXPECT_EQ(ya, model_forward(mb, xb));
}

TEST(Model, WrongResolutionNamesAdaptation) {
  Rng rng(8);
  const auto m = build_model<float>(ModelConfig::named("XT", 64), rng);
  try {
    (void)model_forward(m, FeatureMap<float>(1, 3, 96, 96));
    FAIL();
  } catch (const DimensionError &e) {
    EXPECT_NE(std::string(e.what()).find("adapt_to_resolution"), std::string::npos);
  }
}

TEST(Model, AdaptResizesKernels) {
  Rng rng(9);
  const auto m = build_model<float>(ModelConfig::named("XT", 224), rng);
  const auto small = adapt_to_resolution(m, 160, 160);
  EXPECT_EQ(m.stages[0].blocks[0].spatial.oversized.len_h(), 111u);
  EXPECT_EQ(small.stages[0].blocks[0].spatial.oversized.len_h(), 79u);
  EXPECT_EQ(small.stages[3].blocks[0].spatial.oversized.len_w(), 9u);
  EXPECT_THROW(adapt_to_resolution(m, 100, 160), DimensionError);
}

TEST(Model, AdaptedModelRunsAtNewSize) {
  Rng rng(10);
  const auto m = build_model<float>(ModelConfig::named("XT", 64), rng);
  const auto big = adapt_to_resolution(m, 96, 64);
  const auto y = model_forward(big, random_normal<float>({1, 3, 96, 64}, rng, 1.0));
  EXPECT_TRUE(y.all_finite());
}

TEST(Count, ChannelBguPerBlockMatchesFormula) {
  const auto cfg = ModelConfig::named("T");
  const auto r = count_params_and_macs(cfg);
  for (std::size_t s = 0; s < 4; ++s)
    EXPECT_EQ(r.channel_bgu_per_block[s], channel_bgu_param_formula(cfg.channels[s], 2.5));
  std::uint64_t sum = 0;
  for (const auto &t : tensor_specs(cfg))
    sum += t.numel();
  EXPECT_EQ(r.total_params, sum);
}

TEST(Count, MacsScaleWithResolution) {
  const auto a = count_params_and_macs(ModelConfig::named("XT", 224));
  const auto b = count_params_and_macs(ModelConfig::named("XT", 448));
  EXPECT_GT(b.total_macs, 4 * a.total_macs); // oversized kernels grow too
}

} // namespace
} // namespace parc2
