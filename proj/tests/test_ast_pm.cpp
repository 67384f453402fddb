#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "shrvq/ast_pm.hpp"
#include "shrvq/nn/adam.hpp"

using namespace shrvq;

namespace {

AstPmConfig tiny_config(MaskMode mode = MaskMode::kFullHistory) {
  AstPmConfig c;
  c.branch = 4;
  c.height = 3;
  c.width = 4;
  c.window = 2;
  c.channels = 4;
  c.heads = 2;
  c.head_layers = 1;
  c.context_blocks = 1;
  c.mask_mode = mode;
  c.seed = 5;
  return c;
}

CodeGrid random_grid(Rng& rng, int h, int w, int m) {
  CodeGrid g(0, h, w);
  for (auto& v : g.values) v = static_cast<int>(rng.index(static_cast<std::size_t>(m)));
  return g;
}

std::vector<CodeGrid> random_history(Rng& rng, const AstPmConfig& c) {
  std::vector<CodeGrid> h;
  for (int t = 0; t < c.window; ++t) h.push_back(random_grid(rng, c.height, c.width, c.branch));
  return h;
}


template <class T>
void set_all(AstPm<T>& model, T value) {
  for (auto* p : model.params()) p->value.fill(value);
}

}  // namespace

TEST(CausalMask, SinglePositionSeesNothingInItsFrame) {
  auto m = causal_mask(1, 1, 3);
  EXPECT_EQ(m.spatial_matrix(), std::vector<std::uint8_t>{0});
  EXPECT_FALSE(m.same_frame(0, 0));
  for (int tau = 0; tau < 3; ++tau) EXPECT_TRUE(m.history(0, tau, 0));
  EXPECT_FALSE(m.history(0, 3, 0));
  EXPECT_THROW(causal_mask(0, 2, 1), ParameterError);
}

TEST(CausalMask, FirstCellAndCountingOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + static_cast<int>(rng.index(6)), w = 1 + static_cast<int>(rng.index(6));
    auto m = causal_mask(h, w, 2);
    const auto mat = m.spatial_matrix();
    // Enumerate cells in raster order; cell number k has exactly k earlier cells.
    int k = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x, ++k) {
        int visible = 0;
        for (int j = 0; j < h * w; ++j) visible += mat[static_cast<std::size_t>(k) * h * w + j];
        EXPECT_EQ(visible, k);
        EXPECT_EQ(mat[static_cast<std::size_t>(k) * h * w + k], 0);
        for (int j = 0; j < h * w; ++j) EXPECT_TRUE(m.history(k, 1, j));
      }
  }
  auto lit = causal_mask(2, 2, 1, MaskMode::kCausalHistory);
  EXPECT_FALSE(lit.history(0, 0, 0));
  EXPECT_TRUE(lit.history(3, 0, 2));
}

TEST(BuildAstPm, DeterministicAndValidated) {
  AstPm<float> a(tiny_config()), b(tiny_config());
  EXPECT_EQ(a.checksum(), b.checksum());
  auto c = tiny_config();
  c.heads = 3;
  EXPECT_THROW(AstPm<float>{c}, ParameterError);
  c = tiny_config();
  c.window = 0;
  EXPECT_THROW(AstPm<float>{c}, ParameterError);
  AstPmConfig kth;
  AstPm<float> k(kth);
  EXPECT_EQ(k.config().height, 32);
  EXPECT_EQ(k.config().width, 32);
}

TEST(AstPmForward, ZeroParametersGiveUniformDistribution) {
  AstPm<double> model(tiny_config());
  set_all(model, 0.0);
  Rng rng(2);
  auto hist = random_history(rng, model.config());
  auto lv = model.forward(hist, random_grid(rng, 3, 4, 4));
  for (int pos = 0; pos < lv.positions(); ++pos)
    for (double p : lv.probabilities(pos)) EXPECT_NEAR(p, 0.25, 1e-15);
  EXPECT_NEAR(astpm_loss(lv, random_grid(rng, 3, 4, 4)), std::log(4.0), 1e-12);
}

TEST(AstPmForward, ProbabilitiesNormalized) {
  AstPm<float> model(tiny_config());
  Rng rng(3);
  auto lv = model.forward(random_history(rng, model.config()), random_grid(rng, 3, 4, 4));
  for (int pos = 0; pos < lv.positions(); ++pos) {
    double s = 0;
    for (double p : lv.probabilities(pos)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  for (float v : lv.scores.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(AstPmForward, InputValidation) {
  AstPm<float> model(tiny_config());
  Rng rng(4);
  auto hist = random_history(rng, model.config());
  auto bad = random_grid(rng, 3, 4, 4);
  bad.values[0] = 4;
  EXPECT_THROW(model.forward(hist, bad), InputError);
  hist[0].values[1] = -1;
  EXPECT_THROW(model.forward(hist, random_grid(rng, 3, 4, 4)), InputError);
  auto longer = random_history(rng, model.config());
  longer.push_back(random_grid(rng, 3, 4, 4));
  EXPECT_THROW(model.forward(longer, random_grid(rng, 3, 4, 4)), ShapeError);
}

class Causality : public ::testing::TestWithParam<MaskMode> {};

TEST_P(Causality, SpatialPerturbationLeavesLogitsBitIdentical) {
  AstPm<float> model(tiny_config(GetParam()));
  Rng rng(6);
  const int hw = 12;
  for (int trial = 0; trial < 100; ++trial) {
    auto hist = random_history(rng, model.config());
    auto partial = random_grid(rng, 3, 4, 4);
    const int k = static_cast<int>(rng.index(hw));
    auto base = model.forward(hist, partial);
    auto flipped = partial;
    for (int j = k; j < hw; ++j)
      if (rng.uniform() < 0.7) flipped.values[j] = static_cast<int>(rng.index(4));
    flipped.values[k] = (partial.values[k] + 1) % 4;
    auto moved = model.forward(hist, flipped);
    for (int m = 0; m < 4; ++m) ASSERT_EQ(base.at(k, m), moved.at(k, m)) << "trial " << trial;
  }
}

TEST_P(Causality, FutureFramesAreNeverRead) {
  AstPm<float> model(tiny_config(GetParam()));
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CodeGrid> seq;
    for (int t = 0; t < 5; ++t) seq.push_back(random_grid(rng, 3, 4, 4));
    const int t = 1 + static_cast<int>(rng.index(3));  // frames 0..t-1 are the past
    auto partial = random_grid(rng, 3, 4, 4);
    auto base = model.forward(model.history_window(seq, t), partial);
    auto mutated = seq;
    for (int f = t; f < 5; ++f) mutated[f] = random_grid(rng, 3, 4, 4);
    auto moved = model.forward(model.history_window(mutated, t), partial);
    const int k = static_cast<int>(rng.index(12));
    for (int m = 0; m < 4; ++m) ASSERT_EQ(base.at(k, m), moved.at(k, m));
  }
}

INSTANTIATE_TEST_SUITE_P(MaskModes, Causality,
                         ::testing::Values(MaskMode::kFullHistory, MaskMode::kCausalHistory));

TEST(AstPmForward, CausalHistoryModeHidesLaterHistoryPositions) {
  AstPm<float> model(tiny_config(MaskMode::kCausalHistory));
  Rng rng(8);
  auto hist = random_history(rng, model.config());
  auto partial = random_grid(rng, 3, 4, 4);
  auto base = model.forward(hist, partial);
  auto h2 = hist;
  for (int j = 5; j < 12; ++j) h2[1].values[j] = (hist[1].values[j] + 1) % 4;
  auto moved = model.forward(h2, partial);
  for (int k = 0; k <= 5; ++k)
    for (int m = 0; m < 4; ++m) EXPECT_EQ(base.at(k, m), moved.at(k, m));
  AstPm<float> full(tiny_config(MaskMode::kFullHistory));
  auto fb = full.forward(hist, partial), fm = full.forward(h2, partial);
  bool differs = false;
  for (int m = 0; m < 4; ++m) differs |= fb.at(0, m) != fm.at(0, m);
  EXPECT_TRUE(differs);
}

TEST(AstPmForward, ExactLikelihoodOverAllOutcomes) {
  auto cfg = tiny_config();
  cfg.height = 1;
  cfg.width = 2;
  cfg.branch = 2;
  AstPm<double> model(cfg);
  Rng rng(9);
  auto hist = random_history(rng, cfg);
  double total = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      CodeGrid frame(0, 1, 2);
      frame.values = {a, b};
      auto lv = model.forward(hist, frame);
      total += lv.probabilities(0)[a] * lv.probabilities(1)[b];
    }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(AstPmLoss, ClosedFormsAndOracle) {
  LogitVolume<double> uniform{Tensor<double>({8, 2, 2})};
  CodeGrid t(0, 2, 2, 3);
  EXPECT_NEAR(astpm_loss(uniform, t), 2.0794415416798357, 1e-12);
  LogitVolume<double> sharp{Tensor<double>({8, 2, 2})};
  for (int pos = 0; pos < 4; ++pos) sharp.scores[3 * 4 + pos] = 60.0;
  EXPECT_LT(astpm_loss(sharp, t), 1e-20);

  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    LogitVolume<double> lv{Tensor<double>({4, 3, 3})};
    for (auto& v : lv.scores.values()) v = rng.normal(0, 3);
    auto target = random_grid(rng, 3, 3, 4);
    EXPECT_NEAR(astpm_loss(lv, target), oracle::cross_entropy(lv.scores, target.values), 1e-6);
  }
  t.values[0] = 8;
  EXPECT_THROW(astpm_loss(uniform, t), InputError);
}

class AstPmGradient : public ::testing::TestWithParam<bool> {};

TEST_P(AstPmGradient, MatchesCentralDifferences) {
  auto cfg = tiny_config();
  cfg.height = 2;
  cfg.width = 3;
  if (GetParam()) {
    cfg.parent_codebooks = 3;
    cfg.mask_mode = MaskMode::kCausalHistory;
  }
  AstPm<double> model(cfg);
  Rng rng(11);
  auto hist = random_history(rng, cfg);
  auto target = random_grid(rng, 2, 3, 4);
  auto parent = random_grid(rng, 2, 3, 3);
  const CodeGrid* pp = GetParam() ? &parent : nullptr;
  for (auto* p : model.params()) p->zero_grad();
  AstPmCache<double> cache;
  auto lv = model.forward(hist, target, pp, &cache);
  model.backward(cache, astpm_loss_gradient(lv, target));
  for (auto* p : model.params()) {
    double num = 0, den_a = 0, den_n = 0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double o = p->value[i];
      p->value[i] = o + 1e-6;
      const double fp = astpm_loss(model.forward(hist, target, pp), target);
      p->value[i] = o - 1e-6;
      const double fm = astpm_loss(model.forward(hist, target, pp), target);
      p->value[i] = o;
      const double fd = (fp - fm) / 2e-6;
      num += (fd - p->grad[i]) * (fd - p->grad[i]);
      den_a += p->grad[i] * p->grad[i];
      den_n += fd * fd;
    }
    // Floor above the finite-difference noise (one ulp of the loss over 2h).
    const double scale = std::max({std::sqrt(den_a), std::sqrt(den_n), 1e-5});
    EXPECT_LT(std::sqrt(num) / scale, 1e-4) << p->name;
    // A key bias shifts every score of a row equally, which softmax ignores.
    if (p->name == "astpm.attn_k.bias") {
      EXPECT_LT(std::sqrt(den_a), 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, AstPmGradient, ::testing::Values(false, true));

TEST(Generation, IncrementalMatchesFullForward) {
  for (MaskMode mode : {MaskMode::kFullHistory, MaskMode::kCausalHistory}) {
    auto cfg = tiny_config(mode);
    cfg.parent_codebooks = 4;
    cfg.head_layers = 2;
    AstPm<double> model(cfg);
    Rng rng(12);
    auto hist = random_history(rng, cfg);
    auto parent = random_grid(rng, 3, 4, 4);
    Rng gen(1);
    LogitVolume<double> inc;
    auto frame = model.generate_frame(hist, &parent, DecodeMode::kGreedy, 1.0, gen, &inc);
    auto full = model.forward(hist, frame, &parent);
    for (std::size_t i = 0; i < full.scores.size(); ++i) EXPECT_NEAR(inc.scores[i], full.scores[i], 1e-10);
    for (int pos = 0; pos < 12; ++pos) {
      int best = 0;
      for (int m = 1; m < 4; ++m)
        if (full.at(pos, m) > full.at(pos, best)) best = m;
      EXPECT_EQ(frame.values[pos], best);
    }
  }
}

TEST(Generation, DeterministicAndFreeRunning) {
  auto cfg = tiny_config();
  std::vector<AstPm<float>> models = {AstPm<float>(cfg), AstPm<float>(cfg)};
  auto cfg2 = cfg;
  cfg2.seed = 99;
  models[1] = AstPm<float>(cfg2);
  Rng rng(13);
  CodeSequence ctx = CodeSequence::empty(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 3; ++t) {
      auto g = random_grid(rng, 3, 4, 4);
      g.layer = i;
      ctx.frames[i].push_back(g);
    }
  auto a = generate_codes<float>(models, ctx, 2, DecodeMode::kGreedy, 1.0, 0);
  auto b = generate_codes<float>(models, ctx, 2, DecodeMode::kGreedy, 1.0, 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.length(), 2);
  EXPECT_EQ(a.layers(), 2);

  // Frame T+2 is generated from the generated frame T+1: regenerating it
  // from that history reproduces it, and swapping T+1 changes its scores.
  std::vector<CodeGrid> seq = ctx.frames[0];
  seq.push_back(a.frames[0][0]);
  Rng r0(0);
  LogitVolume<float> base, other;
  auto again = models[0].generate_frame(models[0].history_window(seq, 4), nullptr, DecodeMode::kGreedy, 1.0, r0, &base);
  EXPECT_EQ(again.values, a.frames[0][1].values);
  seq.back() = random_grid(rng, 3, 4, 4);
  models[0].generate_frame(models[0].history_window(seq, 4), nullptr, DecodeMode::kGreedy, 1.0, r0, &other);
  EXPECT_FALSE(base.scores == other.scores);

  auto s1 = generate_codes<float>(models, ctx, 3, DecodeMode::kSample, 0.8, 42);
  auto s2 = generate_codes<float>(models, ctx, 3, DecodeMode::kSample, 0.8, 42);
  EXPECT_EQ(s1, s2);
  EXPECT_THROW(generate_codes<float>(models, ctx, 2, DecodeMode::kSample, 0.0, 1), ParameterError);
  EXPECT_THROW(generate_codes<float>(models, ctx, 0, DecodeMode::kGreedy, 1.0, 1), ParameterError);
  EXPECT_THROW(generate_codes<float>(models, CodeSequence::empty(2, 4), 1, DecodeMode::kGreedy, 1.0, 1),
               ParameterError);
}

TEST(Generation, MemorizedConstantGridIsReproduced) {
  auto cfg = tiny_config();
  cfg.channels = 8;
  AstPm<float> model(cfg);
  Rng rng(14);
  const auto constant = random_grid(rng, 3, 4, 4);
  std::vector<CodeGrid> hist(2, constant);
  nn::Adam<float> opt(model.params(), {0.01});
  for (int step = 0; step < 300; ++step) {
    opt.zero_grad();
    AstPmCache<float> cache;
    auto lv = model.forward(hist, constant, nullptr, &cache);
    model.backward(cache, astpm_loss_gradient(lv, constant));
    opt.step();
  }
  CodeSequence ctx = CodeSequence::empty(1, 4);
  ctx.frames[0] = {constant, constant};
  std::vector<AstPm<float>> models = {model};
  auto out = generate_codes<float>(models, ctx, 4, DecodeMode::kGreedy, 1.0, 0);
  for (const auto& g : out.frames[0]) EXPECT_EQ(g.values, constant.values);
}

TEST(Generation, ParentConditioningNeedsLowerCodes) {
  auto cfg = tiny_config();
  cfg.parent_codebooks = 4;
  AstPm<float> model(cfg);
  Rng rng(15);
  auto hist = random_history(rng, cfg);
  EXPECT_THROW(model.forward(hist, random_grid(rng, 3, 4, 4)), InputError);
  auto parent = random_grid(rng, 3, 4, 4);
  auto a = model.forward(hist, random_grid(rng, 3, 4, 4), &parent);
  EXPECT_EQ(a.classes(), 4);
}

TEST(CodeSequenceFormat, RoundTripAndParentAddresses) {
  Rng rng(16);
  CodeSequence s = CodeSequence::empty(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 2; ++t) {
      auto g = random_grid(rng, 2, 3, 4);
      g.layer = i;
      s.frames[i].push_back(g);
    }
  EXPECT_EQ(decode_code_sequence(encode_code_sequence(s)), s);
  EXPECT_THROW(decode_code_sequence("garbage"), FormatError);
  std::vector<CodeGrid> lower = {s.frames[0][0], s.frames[1][0]};
  auto p = parent_address_grid(lower, 4);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(p.values[k], lower[0].values[k] * 4 + lower[1].values[k]);
}
