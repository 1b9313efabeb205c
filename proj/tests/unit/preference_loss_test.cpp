#include "savanna/preference_loss.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

#include "savanna/error.hpp"

namespace pl = savanna::preference_loss;

namespace {

// Values below were evaluated with mpmath at 40 digits.
constexpr double kLn2 = 0.6931471805599453094172321214581765680755;
constexpr double kNegLogSigmoidPoint2 = 0.5981388693815918396849437125412322904935;

pl::PairLogps sums(double pc, double pr, double rc, double rr) {
  return {{pc}, {pr}, {rc}, {rr}};
}

pl::PairLogps random_pair(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_real_distribution<double> lp(-6.0, -0.01);
  pl::PairLogps p;
  const int lc = len(rng);
  const int lr = len(rng);
  for (int i = 0; i < lc; ++i) {
    p.policy_chosen.push_back(lp(rng));
    p.ref_chosen.push_back(lp(rng));
  }
  for (int i = 0; i < lr; ++i) {
    p.policy_rejected.push_back(lp(rng));
    p.ref_rejected.push_back(lp(rng));
  }
  return p;
}

}  // namespace

TEST(DpoLoss, ZeroMarginIsLn2) {
  const auto p = sums(-3.0, -4.0, -3.0, -4.0);
  for (double beta : {0.01, 0.1, 1.0, 5.0}) {
    EXPECT_NEAR(pl::dpo_loss(p, {.beta = beta}), kLn2, 1e-12);
  }
}

TEST(DpoLoss, ScalarFixture) {
  const auto p = sums(-1.0, -3.0, -2.0, -2.0);
  EXPECT_NEAR(pl::margin(p, {.beta = 0.1}), 0.2, 1e-15);
  EXPECT_NEAR(pl::dpo_loss(p, {.beta = 0.1}), kNegLogSigmoidPoint2, 1e-15);
}

TEST(DpoLoss, LimitsAndMonotonicity) {
  double prev = INFINITY;
  for (double m = -50.0; m <= 50.0; m += 0.5) {
    const double loss = pl::neg_log_sigmoid(m);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(pl::neg_log_sigmoid(1e4), 1e-300);
  EXPECT_NEAR(pl::neg_log_sigmoid(-1e4), 1e4, 1e-9);
}

TEST(DpoLoss, FiniteOverWideMarginRange) {
  for (double m = -1e4; m <= 1e4; m += 37.5) {
    EXPECT_TRUE(std::isfinite(pl::neg_log_sigmoid(m)));
  }
}

TEST(DpoLoss, DependsOnlyOnMargin) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    auto p = random_pair(rng);
    const double before = pl::dpo_loss(p, {});
    // Shift policy and reference chosen sums by the same constant.
    p.policy_chosen[0] -= 0.75;
    p.ref_chosen[0] -= 0.75;
    EXPECT_NEAR(pl::dpo_loss(p, {}), before, 1e-12);
  }
}

TEST(IrpoLoss, ReducesToDpoWithoutNll) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_pair(rng);
    EXPECT_EQ(pl::irpo_loss(p, {.beta = 0.1, .alpha_rpo = 0.0}), pl::dpo_loss(p, {.beta = 0.1}));
  }
}

TEST(IrpoLoss, AnalyticFixtures) {
  // policy == ref with a zero chosen log-likelihood: only the DPO term.
  pl::PairLogps zero{{0.0}, {-2.0}, {0.0}, {-2.0}};
  EXPECT_NEAR(pl::irpo_loss(zero, {.alpha_rpo = 1.0}), kLn2, 1e-12);

  pl::PairLogps two{{-1.0, -1.0}, {-2.0}, {-1.0, -1.0}, {-2.0}};
  EXPECT_DOUBLE_EQ(pl::chosen_nll(two), 1.0);
  EXPECT_NEAR(pl::irpo_loss(two, {.alpha_rpo = 1.0}), kLn2 + 1.0, 1e-12);
}

TEST(IrpoLoss, MonotoneInAlphaWhenNllPositive) {
  std::mt19937_64 rng(7);
  const auto p = random_pair(rng);
  ASSERT_GT(pl::chosen_nll(p), 0.0);
  double prev = -INFINITY;
  for (double a = 0.0; a <= 3.0; a += 0.25) {
    const double loss = pl::irpo_loss(p, {.alpha_rpo = a});
    EXPECT_GE(loss, prev);
    prev = loss;
  }
}

TEST(Gradients, MatchCentralFiniteDifferences) {
  std::mt19937_64 rng(8);
  constexpr double h = 1e-5;
  const pl::LossParams params{.beta = 0.5, .alpha_rpo = 1.0};
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_pair(rng);
    for (bool irpo : {false, true}) {
      const auto loss = [&](const pl::PairLogps& q) {
        return irpo ? pl::irpo_loss(q, params) : pl::dpo_loss(q, params);
      };
      const auto g = irpo ? pl::irpo_gradient(p, params) : pl::dpo_gradient(p, params);
      const auto check = [&](std::vector<double> pl::PairLogps::*field,
                             const std::vector<double>& grad) {
        for (std::size_t i = 0; i < (p.*field).size(); ++i) {
          auto up = p;
          auto down = p;
          (up.*field)[i] += h;
          (down.*field)[i] -= h;
          const double fd = (loss(up) - loss(down)) / (2 * h);
          const double denom = std::max(std::abs(fd), 1e-8);
          EXPECT_LT(std::abs(fd - grad[i]) / denom, 1e-4);
        }
      };
      check(&pl::PairLogps::policy_chosen, g.policy_chosen);
      check(&pl::PairLogps::policy_rejected, g.policy_rejected);
      check(&pl::PairLogps::ref_chosen, g.ref_chosen);
      check(&pl::PairLogps::ref_rejected, g.ref_rejected);
    }
  }
}

TEST(PairLogps, ValidationRejectsBadInput) {
  EXPECT_THROW((pl::PairLogps{{}, {-1}, {}, {-1}}.validate()), savanna::Error);
  EXPECT_THROW((pl::PairLogps{{0.5}, {-1}, {-1}, {-1}}.validate()), savanna::Error);
  EXPECT_THROW((pl::PairLogps{{-1, -1}, {-1}, {-1}, {-1}}.validate()), savanna::Error);
  EXPECT_NO_THROW((pl::PairLogps{{-1}, {-1}, {-1}, {-1}}.validate()));
}

TEST(PairLogps, JsonRoundTrip) {
  const pl::PairLogps p{{-0.5, -1.25}, {-2.0}, {-0.75, -1.0}, {-1.5}};
  const auto back = pl::pair_from_json(nlohmann::json::parse(pl::pair_to_json(p).dump()));
  EXPECT_EQ(back.policy_chosen, p.policy_chosen);
  EXPECT_EQ(back.ref_rejected, p.ref_rejected);
  EXPECT_THROW(pl::pair_from_json(nlohmann::json{{"policy_chosen", {-1.0}}}), savanna::Error);
}

TEST(EvaluateBatch, MatchesScalarCalls) {
  std::mt19937_64 rng(9);
  std::vector<pl::PairLogps> pairs;
  for (int i = 0; i < 64; ++i) pairs.push_back(random_pair(rng));
  const pl::LossParams params{};
  const auto records = pl::evaluate_batch(pairs, params);
  ASSERT_EQ(records.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_DOUBLE_EQ(records[i].dpo, pl::dpo_loss(pairs[i], params));
    EXPECT_DOUBLE_EQ(records[i].irpo, pl::irpo_loss(pairs[i], params));
  }
}
