#include <gtest/gtest.h>

#include "shrvq/config.hpp"

using namespace shrvq;

namespace {

RunConfig parse(const std::string& text) { return RunConfig::from_kv(KeyValues::parse(text)); }

}  // namespace

TEST(Config, DefaultHyperparameters) {
  const RunConfig rc = parse("");
  EXPECT_DOUBLE_EQ(rc.train.lr, 3e-4);
  EXPECT_DOUBLE_EQ(rc.train.astpm_lr, 3e-4);
  EXPECT_DOUBLE_EQ(rc.train.lambda, 0.11);
  EXPECT_EQ(rc.model.layers, 3);
  EXPECT_EQ(rc.model.branch, 8);
  EXPECT_EQ(rc.train.beta_values(3), std::vector<double>(4, 0.25));
}

TEST(Config, RoundTripThroughText) {
  RunConfig rc = parse(
      "seed = 7\nmodel.branch = 4\nmodel.mask_mode = causal_history\ntrain.lambda = 0.5\n"
      "train.betas = 0.1,0.2,0.3,0.4\ndata.scene.num_shapes = 3\neval.corruption.0.kind = compression\n"
      "eval.corruption.0.quality = low\n");
  const std::string text = rc.to_kv().to_text();
  const RunConfig back = RunConfig::from_kv(KeyValues::parse(text));
  EXPECT_EQ(back.to_kv().to_text(), text);
  EXPECT_EQ(back.model.branch, 4);
  EXPECT_EQ(back.model.mask_mode, MaskMode::kCausalHistory);
  EXPECT_EQ(back.train.betas.size(), 4u);
  ASSERT_EQ(back.eval.corruptions.size(), 1u);
  EXPECT_EQ(back.eval.corruptions[0].quality, CorruptionSpec::kLowQuality);
  EXPECT_EQ(back.data.scene.num_shapes, 3);
}

TEST(Config, UnknownKeysAreConfigErrors) {
  EXPECT_THROW(parse("model.brnach = 4\n"), ConfigError);
  EXPECT_THROW(parse("colour = red\n"), ConfigError);
  EXPECT_THROW(parse("eval.corruption.0.kind = gaussian_blur\neval.corruption.0.radius = 3\n"), ConfigError);
  EXPECT_THROW(parse("data.scene.wobble = 1\n"), ConfigError);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(parse("train.lambda = -1\n"), ConfigError);
  EXPECT_THROW(parse("train.lr = 0\n"), ConfigError);
  EXPECT_THROW(parse("train.mode = both\n"), ConfigError);
  EXPECT_THROW(parse("train.betas = 0.1,0.2\n"), ConfigError);
  EXPECT_THROW(parse("model.branch = many\n"), ConfigError);
  EXPECT_THROW(parse("model.layers = 0\n"), ConfigError);
  EXPECT_THROW(parse("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse("no equals sign\n"), ConfigError);
}

TEST(Config, MasterSeedReachesEveryComponent) {
  const RunConfig a = parse("seed = 1\n"), b = parse("seed = 2\n");
  EXPECT_NE(a.model.seed, b.model.seed);
  EXPECT_NE(a.train.seed, b.train.seed);
  EXPECT_NE(a.data.scene.seed, b.data.scene.seed);
  EXPECT_NE(a.eval.seed, b.eval.seed);
  EXPECT_NE(a.model.seed, a.train.seed);
  EXPECT_EQ(parse("seed = 1\n").to_kv().to_text(), a.to_kv().to_text());
}

TEST(Config, ExplicitSectionSeedWins) {
  const RunConfig rc = parse("seed = 1\nmodel.seed = 99\n");
  EXPECT_EQ(rc.model.seed, 99u);
  EXPECT_EQ(rc.train.seed, parse("seed = 1\n").train.seed);
}

TEST(Config, PredictorLearningRateFollowsLr) {
  EXPECT_DOUBLE_EQ(parse("train.lr = 1e-3\n").train.astpm_lr, 1e-3);
  EXPECT_DOUBLE_EQ(parse("train.lr = 1e-3\ntrain.astpm_lr = 5e-4\n").train.astpm_lr, 5e-4);
}

TEST(Config, DefaultCorruptionStudy) {
  const auto c = parse("").eval.corruptions;
  ASSERT_EQ(c.size(), 7u);
  EXPECT_EQ(EvalConfig::describe(c[0]), "gaussian_blur_sigma1");
  EXPECT_EQ(EvalConfig::describe(c[2]), "fragment_blur_4x16_sigma2");
  EXPECT_EQ(EvalConfig::describe(c[4]), "noise_snr20");
  EXPECT_EQ(c[5].quality, CorruptionSpec::kHighQuality);
  EXPECT_EQ(c[6].quality, CorruptionSpec::kLowQuality);
}

TEST(Config, ModelDerivesComponentConfigs) {
  ModelConfig mc;
  EXPECT_EQ(mc.astpm(2).parent_codebooks, 0u);
  mc.condition_on_parent = true;
  EXPECT_EQ(mc.astpm(0).parent_codebooks, 1u);
  EXPECT_EQ(mc.astpm(2).parent_codebooks, 64u);
  EXPECT_EQ(mc.astpm(1).height, 16);
  EXPECT_NE(mc.astpm(0).seed, mc.astpm(1).seed);
  EXPECT_EQ(mc.autoencoder().latent_dim, mc.latent_dim);
}
