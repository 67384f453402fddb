#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "shrvq/metrics.hpp"
#include "shrvq/random.hpp"

using namespace shrvq;

namespace {

Tensor<double> random_frame(Rng& rng, int h, int w, int c) {
  Tensor<double> t({h, w, c});
  for (auto& v : t.values()) v = rng.uniform();
  return t;
}

}  // namespace

TEST(Metrics, IdenticalFrames) {
  Rng rng(1);
  const auto a = random_frame(rng, 16, 16, 3);
  const auto m = compute_metrics(a, a);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(m.psnr));
  EXPECT_EQ(format_double(m.psnr), "inf");
}

TEST(Metrics, HalfOffset) {
  const Tensor<double> a({12, 12, 1}, 0.25), b({12, 12, 1}, 0.75);
  const auto m = compute_metrics(a, b);
  EXPECT_DOUBLE_EQ(m.mse, 0.25);
  EXPECT_DOUBLE_EQ(m.mae, 0.5);
  EXPECT_NEAR(m.psnr, 6.0206, 1e-3);
  EXPECT_NEAR(m.psnr, 10 * std::log10(4.0), 1e-12);
}

TEST(Metrics, SsimMatchesReference) {
  Rng rng(2);
  for (int trial = 0; trial < 6; ++trial) {
    const int c = trial % 2 ? 3 : 1;
    const auto a = random_frame(rng, 24 + trial, 20, c);
    auto b = a;
    for (auto& v : b.values()) v = std::clamp(v + rng.normal(0, 0.1 * trial), 0.0, 1.0);
    const double s = ssim(a, b);
    EXPECT_NEAR(s, oracle::reference_ssim(a, b), 1e-4);
    EXPECT_NEAR(s, ssim(b, a), 1e-12);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Metrics, SmallImagesShrinkWindow) {
  Rng rng(3);
  const auto a = random_frame(rng, 6, 9, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  const auto b = random_frame(rng, 6, 9, 1);
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Metrics, PsnrMonotoneAndJensen) {
  double prev = std::numeric_limits<double>::infinity();
  for (double mse = 1e-6; mse < 1; mse *= 1.7) {
    EXPECT_LT(psnr_from_mse(mse), prev);
    prev = psnr_from_mse(mse);
  }
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto m = compute_metrics(random_frame(rng, 11, 11, 1), random_frame(rng, 11, 11, 1));
    EXPECT_LE(m.mae * m.mae, m.mse + 1e-15);
  }
}

TEST(Metrics, ShapeMismatch) {
  EXPECT_THROW(compute_metrics(Tensor<double>({4, 4, 1}), Tensor<double>({4, 5, 1})), ShapeError);
}

TEST(Report, MeansAndFormats) {
  MetricReport r;
  r.add("a", {{10, 0.5, 0.1, 0.2}, {20, 0.7, 0.01, 0.05}});
  r.add("b", {{30, 0.9, 0.001, 0.01}, {40, 1.0, 0.0001, 0.001}});
  r.finish();
  ASSERT_EQ(r.per_step.size(), 2u);
  EXPECT_DOUBLE_EQ(r.per_step[0].psnr, 20);
  EXPECT_DOUBLE_EQ(r.per_step[1].ssim, 0.85);
  EXPECT_DOUBLE_EQ(r.mean.psnr, 25);
  const auto csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,psnr,ssim,mse,mae");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  const auto kv = r.to_kv();
  EXPECT_DOUBLE_EQ(kv.get_double("mean.mse_x100", 0), r.mean.mse * 100);
  EXPECT_DOUBLE_EQ(kv.get_double("sequence.b.psnr", 0), 35);
  EXPECT_THROW(r.add("c", {{1, 1, 1, 1}}), DataError);
  MetricReport empty;
  EXPECT_THROW(empty.finish(), DataError);
}

TEST(Report, SingleSequenceEqualsItsValues) {
  MetricReport r;
  r.add("only", {{12.5, 0.75, 0.05, 0.1}});
  r.finish();
  EXPECT_EQ(r.per_step.size(), 1u);
  EXPECT_DOUBLE_EQ(r.mean.psnr, 12.5);
  EXPECT_DOUBLE_EQ(r.mean.ssim, 0.75);
}
