#include "rsplat/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <sstream>

using namespace rsplat;
using rsplat::testing::random_image;

TEST(Psnr, IdenticalIsInfiniteAndCappedInCsv) {
  std::mt19937_64 rng(1);
  const Image a = random_image(rng, 16, 8, 3, 0, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_EQ(psnr_for_csv(psnr(a, a)), 99.0);
}

TEST(Psnr, UniformOffsetOfPointOne) {
  EXPECT_NEAR(psnr(Image(8, 8, 3, 0.0), Image(8, 8, 3, 0.1)), 20.0, 1e-12);
}

TEST(Psnr, RegionIgnoresOutside) {
  Image a(16, 8, 3, 0.5), b(16, 8, 3, 0.5);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) b.at(x, y, c) = 0.0;  // left half ruined
  for (int y = 0; y < 8; ++y)
    for (int c = 0; c < 3; ++c) b.at(12, y, c) = 0.6;
  const double right = psnr(a, b, Region::right_half(16, 8));
  // one column of 8 in the right half is off by 0.1
  EXPECT_NEAR(right, 10 * std::log10(1.0 / (0.01 / 8)), 1e-9);
}

TEST(Psnr, Symmetric) {
  std::mt19937_64 rng(2);
  const Image a = random_image(rng, 12, 9, 3, 0, 1), b = random_image(rng, 12, 9, 3, 0, 1);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(3);
  const Image a = random_image(rng, 20, 14, 3, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(dssim(a, a), 0.0, 1e-12);
}

TEST(Ssim, ConstantImagesLuminanceTerm) {
  const double ma = 0.2, mb = 0.7, c1 = 1e-4;
  const double want = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  EXPECT_NEAR(ssim(Image(16, 16, 3, ma), Image(16, 16, 3, mb)), want, 1e-12);
  EXPECT_LT(want, 1.0);
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    const Image a = random_image(rng, 16, 12, 3, 0, 1), b = random_image(rng, 16, 12, 3, 0, 1);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
    EXPECT_LE(ssim(a, b), 1.0);
    EXPECT_GE(ssim(a, b), -1.0);
  }
}

TEST(Ssim, SmallRegionUsesCroppedWindows) {
  std::mt19937_64 rng(5);
  const Image a = random_image(rng, 6, 5, 3, 0, 1);
  const double v = ssim(a, a, Region{1, 1, 4, 4});
  EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Ssim, MapBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Image a = random_image(rng, 9, 7, 3, 0, 1);
  const Image b = random_image(rng, 9, 7, 3, 0, 1);
  const Image w = random_image(rng, 9, 7, 3);
  auto loss = [&]() {
    const Image m = ssim_map(a, b);
    double s = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) s += w.data[i] * m.data[i];
    return s;
  };
  Image d(9, 7, 3);
  ssim_map_backward(a, b, w, d);
  const auto s = rsplat::testing::fd_check(std::span<double>(a.data), d.data, loss, 1e-6, "ssim", false);
  EXPECT_LT(s.worst, 1e-5) << s.worst_where;
}

TEST(MaskIouTest, PerfectPrediction) {
  Image oracle(10, 10, 1, 1.0);
  for (int x = 0; x < 10; ++x) oracle.at(x, 0) = oracle.at(x, 1) = 0.0;
  const MaskIou r = mask_iou(oracle, oracle);
  EXPECT_EQ(r.iou_static, 1.0);
  EXPECT_EQ(r.iou_transient, 1.0);
}

TEST(MaskIouTest, AllStaticPredictionAgainstTwentyPercentTransient) {
  Image oracle(10, 10, 1, 1.0);
  for (int x = 0; x < 10; ++x) oracle.at(x, 0) = oracle.at(x, 1) = 0.0;
  const MaskIou r = mask_iou(Image(10, 10, 1, 1.0), oracle);
  EXPECT_EQ(r.iou_transient, 0.0);
  EXPECT_NEAR(r.iou_static, 0.8, 1e-15);
}

TEST(MaskIouTest, HalfTheTransientFoundNoFalsePositives) {
  Image oracle(10, 10, 1, 1.0), pred(10, 10, 1, 1.0);
  for (int x = 0; x < 10; ++x) oracle.at(x, 0) = oracle.at(x, 1) = 0.0;
  for (int x = 0; x < 10; ++x) pred.at(x, 0) = 0.2;
  EXPECT_NEAR(mask_iou(pred, oracle).iou_transient, 0.5, 1e-15);
}

TEST(MaskIouTest, AllStaticOracleUsesSentinel) {
  const Image oracle(10, 10, 1, 1.0);
  MaskIou r = mask_iou(Image(10, 10, 1, 0.9), oracle);
  EXPECT_FALSE(r.transient_defined);
  EXPECT_EQ(r.iou_transient, 1.0);
  Image pred(10, 10, 1, 0.9);
  for (int x = 0; x < 10; ++x) pred.at(x, 3) = 0.1;
  r = mask_iou(pred, oracle);
  EXPECT_FALSE(r.transient_defined);
  EXPECT_EQ(r.iou_transient, 0.0);
}

TEST(MaskIouTest, AlwaysInUnitInterval) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const Image p = random_image(rng, 8, 8, 1, 0, 1), o = random_image(rng, 8, 8, 1, 0, 1);
    const MaskIou r = mask_iou(p, o);
    EXPECT_GE(r.iou_static, 0.0);
    EXPECT_LE(r.iou_static, 1.0);
    EXPECT_GE(r.iou_transient, 0.0);
    EXPECT_LE(r.iou_transient, 1.0);
  }
}

TEST(MaskIouTest, ShapeMismatchIsContractError) {
  EXPECT_THROW(mask_iou(Image(4, 4, 1), Image(4, 5, 1)), ContractError);
}

TEST(EvalReportTest, MeansAreArithmeticMeans) {
  EvalReport r;
  for (int i = 0; i < 4; ++i) {
    ViewMetrics m;
    m.view_id = i;
    m.psnr = 20 + i;
    m.ssim = 0.5 + 0.1 * i;
    m.iou_transient = 0.25 * i;
    r.rows.push_back(m);
  }
  r.finalize();
  EXPECT_DOUBLE_EQ(r.mean_psnr, 21.5);
  EXPECT_DOUBLE_EQ(r.mean_ssim, 0.65);
  ASSERT_TRUE(r.mean_iou_transient.has_value());
  EXPECT_DOUBLE_EQ(*r.mean_iou_transient, 0.375);
}

TEST(MetricsCsv, HeaderAndRowFormat) {
  std::ostringstream os;
  write_metrics_csv_header(os);
  ViewMetrics m;
  m.iter = 3000;
  m.view_id = 7;
  m.psnr = std::numeric_limits<double>::infinity();
  m.ssim = 0.5;
  m.iou_transient = 0.25;
  m.gaussian_count = 123;
  write_metrics_csv_rows(os, {m});
  EXPECT_EQ(os.str(), "iter,view_id,psnr,ssim,iou_static,iou_transient,gaussian_count\n"
                      "3000,7,99.000000,0.500000,,0.250000,123\n");
}
