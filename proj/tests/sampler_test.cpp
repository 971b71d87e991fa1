#include <gtest/gtest.h>

#include <cmath>

#include "kgdiff/sampler.hpp"

namespace kgdiff {
namespace {

DenoiserParams small_params(uint64_t seed = 4) {
  ModelConfig cfg;
  cfg.vocab = 12;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.max_len = 6;
  cfg.max_graph_len = 10;
  return DenoiserParams::init(cfg, seed);
}

const std::vector<int> kGraph{1, 6, 7, 8, 2};

CumulativeSchedule shifted_anchor(const CumulativeSchedule& base) {
  auto v = base.values();
  for (auto& x : v) x = std::sqrt(x);
  return CumulativeSchedule::from_values(v);
}

TEST(DdimTimesteps, EvenlySpacedAndDecreasing) {
  const auto s = ddim_timesteps(200, 50);
  ASSERT_EQ(s.size(), 50u);
  EXPECT_EQ(s.front(), 200);
  EXPECT_EQ(s.back(), 4);
  for (size_t k = 1; k < s.size(); ++k) EXPECT_EQ(s[k - 1] - s[k], 4);
  const auto full = ddim_timesteps(5, 5);
  EXPECT_EQ(full, (std::vector<int>{5, 4, 3, 2, 1}));
  const auto odd = ddim_timesteps(10, 3);
  EXPECT_EQ(odd, (std::vector<int>{10, 7, 3}));
  EXPECT_THROW(ddim_timesteps(10, 0), UsageError);
  EXPECT_THROW(ddim_timesteps(10, 11), UsageError);
}

TEST(Sampler, CallCounts) {
  const auto p = small_params();
  const auto base = sqrt_baseline(40);
  Rng rng(1);
  EXPECT_EQ(sample_ddpm(kGraph, p, base, nullptr, rng, {false, 3}).denoiser_calls, 40);
  for (int tp : {40, 20, 10, 1}) {
    EXPECT_EQ(sample_ddim(kGraph, p, base, nullptr, tp, rng, {false, 3}).denoiser_calls, tp);
  }
}

TEST(Sampler, DdimIsDeterministicGivenSeed) {
  const auto p = small_params();
  const auto base = sqrt_baseline(40);
  const auto anchor = shifted_anchor(base);
  Rng a(9), b(9);
  const auto ra = sample_ddim(kGraph, p, base, &anchor, 10, a);
  const auto rb = sample_ddim(kGraph, p, base, &anchor, 10, b);
  EXPECT_EQ(ra.tokens.ids, rb.tokens.ids);
  EXPECT_EQ(ra.z0_hat, rb.z0_hat);
  EXPECT_EQ(ra.attention.w, rb.attention.w);
}

TEST(Sampler, AnchorEqualToBaselineChangesNothing) {
  const auto p = small_params();
  const auto base = sqrt_baseline(30);
  Rng a(2), b(2);
  const auto with = sample_ddpm(kGraph, p, base, &base, a, {true, 4});
  const auto without = sample_ddpm(kGraph, p, base, nullptr, b, {false, 4});
  EXPECT_TRUE(with.z0_hat.isApprox(without.z0_hat, 1e-12));
  EXPECT_TRUE(with.warnings.empty());
  EXPECT_TRUE(without.warnings.empty());
}

TEST(Sampler, MissingAnchorWarns) {
  const auto p = small_params();
  Rng rng(2);
  const auto r = sample_ddpm(kGraph, p, sqrt_baseline(5), nullptr, rng, {true, 2});
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0], "no anchor schedule; sampling with the baseline schedule");
}

TEST(Sampler, AnchorChangesTrajectory) {
  const auto p = small_params();
  const auto base = sqrt_baseline(30);
  const auto anchor = shifted_anchor(base);
  Rng a(2), b(2);
  const auto with = sample_ddpm(kGraph, p, base, &anchor, a, {true, 4});
  const auto without = sample_ddpm(kGraph, p, base, &anchor, b, {false, 4});
  EXPECT_GT((with.z0_hat - without.z0_hat).norm(), 1e-9);
}

// Three-step ancestral sampling written out with the closed-form posterior;
// the step at t = 2 uses the attention mass returned at t = 3.
TEST(Sampler, DdpmMatchesHandRolledSteps) {
  const auto p = small_params();
  const std::vector<double> base_v{1.0, 0.9, 0.6, 0.3};
  const std::vector<double> anchor_v{1.0, 0.97, 0.8, 0.5};
  const auto base = CumulativeSchedule::from_values(base_v);
  const auto anchor = CumulativeSchedule::from_values(anchor_v);
  const Eigen::Index n = 3;
  const int d = 8;
  Rng rng(13);
  const auto r = sample_ddpm(kGraph, p, base, &anchor, rng, {true, static_cast<size_t>(n)});

  Rng oracle(13);
  GraphDenoiser den(p, kGraph);
  Matrix z(n, d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = oracle.normal();
  std::vector<double> w(static_cast<size_t>(n), 0.0);
  Matrix x;
  for (int t = 3; t >= 1; --t) {
    auto [pred, mass] = den(z, t);
    Matrix next(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = w[static_cast<size_t>(i)];
      const double ab = (1 - wi) * base_v[t] + wi * anchor_v[t];
      const double abp = (1 - wi) * base_v[t - 1] + wi * anchor_v[t - 1];
      const double alpha = ab / abp, beta = 1 - alpha;
      next.row(i) = std::sqrt(alpha) * (1 - abp) / (1 - ab) * z.row(i) + std::sqrt(abp) * beta / (1 - ab) * pred.row(i);
      if (t > 1) {
        const double sd = std::sqrt((1 - abp) / (1 - ab) * beta);
        for (Eigen::Index j = 0; j < d; ++j) next(i, j) += sd * oracle.normal();
      }
    }
    z = next;
    w = mass;
    x = pred;
  }
  EXPECT_TRUE(r.z0_hat.isApprox(x, 1e-12));
  const auto rounded = round_latents(x, p, static_cast<size_t>(n));
  EXPECT_EQ(r.tokens.ids, TokenSequence::from_ids(rounded.argmax, 6).ids);
  for (size_t i = 0; i < static_cast<size_t>(n); ++i) EXPECT_NEAR(r.attention.w[i], w[i], 1e-15);
}

TEST(Sampler, DdimSingleStepReturnsPrediction) {
  const auto p = small_params();
  const auto base = sqrt_baseline(20);
  Rng rng(6), oracle(6);
  const auto r = sample_ddim(kGraph, p, base, nullptr, 1, rng, {false, 4});
  GraphDenoiser den(p, kGraph);
  Matrix z(4, 8);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = oracle.normal();
  EXPECT_TRUE(r.z0_hat.isApprox(den(z, 20).first, 1e-12));
}

TEST(Sampler, AttentionRecordShape) {
  const auto p = small_params();
  Rng rng(3);
  const auto r = sample_ddim(kGraph, p, sqrt_baseline(20), nullptr, 5, rng, {false, 4});
  ASSERT_EQ(r.attention.w.size(), 6u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_GT(r.attention.w[i], 0.0);
    EXPECT_LT(r.attention.w[i], 1.0);
  }
  EXPECT_EQ(r.attention.w[4], 0.0);
  EXPECT_EQ(r.attention.w[5], 0.0);
  EXPECT_EQ(r.tokens.size(), 6u);
  EXPECT_EQ(r.tokens.length(), 4u);
}

TEST(Sampler, LengthFromHeadOrOption) {
  const auto p = small_params();
  GraphDenoiser den(p, kGraph);
  const size_t predicted = den.predicted_length();
  EXPECT_GE(predicted, 1u);
  EXPECT_LE(predicted, 6u);
  Rng rng(3);
  EXPECT_EQ(sample_ddim(kGraph, p, sqrt_baseline(10), nullptr, 2, rng, {false, 0}).length, predicted);
  EXPECT_THROW(sample_ddim(kGraph, p, sqrt_baseline(10), nullptr, 2, rng, {false, 7}), UsageError);
}

TEST(GraphDenoiser, RepeatedCallsAreIndependentOfHistory) {
  const auto p = small_params();
  GraphDenoiser den(p, kGraph);
  const Matrix z = Matrix::Constant(3, 8, 0.3);
  const auto first = den(z, 7).first;
  den(Matrix::Ones(2, 8), 3);
  EXPECT_EQ(den(z, 7).first, first);
  EXPECT_EQ(den.calls(), 3);
}

}  // namespace
}  // namespace kgdiff
