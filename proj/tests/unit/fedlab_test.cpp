#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ame/errors.hpp"
#include "ame/fedlab.hpp"
#include "fixtures.hpp"

namespace ame {
namespace {

FedConfig two_clients(FedAlgorithm algo) {
  FedConfig cfg;
  cfg.algorithm = algo;
  cfg.clients = {{"a", WeightMap::vector({0.0, 0.0})}, {"b", WeightMap::vector({2.0, 0.0})}};
  cfg.initial = WeightMap::vector({5.0, -3.0});
  cfg.participants = 2;
  cfg.rounds = 1;
  return cfg;
}

FedConfig random_config(Rng& rng, FedAlgorithm algo) {
  FedConfig cfg;
  cfg.algorithm = algo;
  std::size_t n = 2 + rng.below(7);
  double lr = 0.1 + 0.9 * rng.uniform();
  auto local_steps = 1 + rng.below(4);
  cfg.clients = make_clients({DistKind::Gaussian, 1.0, 3.0, 3}, n, rng.next_u64(),
                             OptimizerSpec::gd(Schedule::constant(lr)), local_steps);
  cfg.initial = WeightMap::vector({rng.normal(), rng.normal(), rng.normal()});
  cfg.participants = 1 + rng.below(n);
  cfg.rounds = 10;
  cfg.seed = rng.next_u64();
  return cfg;
}

TEST(Client, TrainsOnQuadratic) {
  ClientSpec c{"c", WeightMap::vector({1.0, -1.0}), OptimizerSpec::gd(Schedule::constant(0.5)), 40};
  auto w = client_train(WeightMap::vector({9.0, 9.0}), c);
  EXPECT_LT(l2_distance(w, c.center), 1e-6);
  c.local_optimizer = OptimizerSpec::adam(Schedule::constant(0.3), 0.9, 0.999, 1e-8);
  EXPECT_EQ(client_train(c.center, c), c.center);
  c.local_steps = 0;
  EXPECT_THROW(client_train(c.center, c), ConfigError);
}

TEST(Participants, SortedReproducibleAndDistinct) {
  auto a = sample_participants(20, 5, 3, 7);
  EXPECT_EQ(a, sample_participants(20, 5, 3, 7));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_NE(a, sample_participants(20, 5, 3, 8));
}

TEST(FedOpt, TwoClientHandExample) {
  auto res = simulate(two_clients(FedAlgorithm::FedOpt));
  EXPECT_EQ(res.model.flatten(), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(res.rounds[0].delta.flatten(), (std::vector<double>{-4.0, 3.0}));
  EXPECT_EQ(res.rounds[0].delta_norm, 5.0);
}

TEST(FedSoup, TwoClientHandExample) {
  auto res = simulate(two_clients(FedAlgorithm::FedSoup));
  EXPECT_EQ(res.model.flatten(), (std::vector<double>{1.0, 0.0}));
  // Delta = w_1 - x_0 = (1, 0) - (5, -3)
  EXPECT_EQ(res.rounds[0].delta.flatten(), (std::vector<double>{-4.0, 3.0}));
}

TEST(FedOpt, SingleClientGetsItsLocalResult) {
  FedConfig cfg;
  ClientSpec c{"solo", WeightMap::vector({4.0}), OptimizerSpec::gd(Schedule::constant(0.25)), 3};
  cfg.clients = {c};
  cfg.initial = WeightMap::vector({0.0});
  auto res = simulate_fedopt(cfg);
  EXPECT_EQ(res.model, client_train(cfg.initial, c));
}

TEST(FedSoup, ReducesToFedOptAndFedAvg) {
  Rng rng(31, 0);
  for (int trial = 0; trial < 10; ++trial) {
    auto cfg = random_config(rng, FedAlgorithm::FedOpt);
    auto opt = simulate(cfg);
    cfg.algorithm = FedAlgorithm::FedSoup;
    auto sp = simulate(cfg);

    // Closed form: each local GD run contracts toward its centre by (1 - lr)^K.
    auto x = cfg.initial.flatten();
    for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
      auto idx = sample_participants(cfg.clients.size(), cfg.participants, cfg.seed, t);
      std::vector<double> mean(x.size(), 0.0);
      for (auto i : idx) {
        const auto& c = cfg.clients[i];
        double lr = c.local_optimizer.lr.at(1);
        double r = std::pow(1.0 - lr, static_cast<double>(c.local_steps));
        auto ci = c.center.flatten();
        for (std::size_t e = 0; e < x.size(); ++e) mean[e] += ci[e] + r * (x[e] - ci[e]);
      }
      for (auto& m : mean) m /= static_cast<double>(idx.size());
      const auto& lo = opt.rounds[t - 1];
      const auto& ls = sp.rounds[t - 1];
      EXPECT_EQ(lo.participants, ls.participants);
      for (std::size_t e = 0; e < x.size(); ++e) {
        EXPECT_NEAR(ls.delta.flatten()[e], mean[e] - x[e], 1e-7);
        EXPECT_NEAR(lo.model.flatten()[e], mean[e], 1e-7);
        EXPECT_NEAR(ls.model.flatten()[e], mean[e], 1e-7);
      }
      EXPECT_NEAR(lo.delta_norm, ls.delta_norm, 1e-7);
      x = mean;
    }
  }
}

TEST(FedSoup, FrozenServerKeepsInitialModel) {
  Rng rng(32, 0);
  auto cfg = random_config(rng, FedAlgorithm::FedSoup);
  cfg.server = OptimizerSpec::gd(Schedule::constant(0.0));
  for (const auto& r : simulate(cfg).rounds) EXPECT_EQ(r.model, cfg.initial);
}

TEST(FedSoup, StewAmplificationCancelsAveraging) {
  Rng rng(33, 0);
  auto cfg = random_config(rng, FedAlgorithm::FedSoup);
  auto plain = simulate(cfg);
  cfg.stew_zeta = Schedule::harmonic(1);  // zeta_t = 1/(t+1): factor 1/(t+1)^2
  auto damped = simulate(cfg);
  EXPECT_NE(plain.model, damped.model);
  cfg.stew_zeta = Schedule::power(1.0, 1.0);  // zeta_t = t, factor t/(t+1)
  auto res = simulate(cfg);
  for (std::size_t t = 0; t < res.rounds.size(); ++t) {
    auto prev = t == 0 ? cfg.initial : res.rounds[t - 1].model;
    double f = static_cast<double>(t + 1) / static_cast<double>(t + 2);
    auto expected = axpby(1.0 - f, prev, f, axpby(1.0, prev, 1.0, res.rounds[t].delta));
    EXPECT_LT(l2_distance(res.rounds[t].model, expected), 1e-12);
  }
}

TEST(FedSoup, NestedClientEnsembleMatchesLinearSoupForHarmonicGd) {
  Rng rng(34, 0);
  auto cfg = random_config(rng, FedAlgorithm::FedSoup);
  auto linear = simulate(cfg);
  cfg.client_soup.linear = false;
  cfg.client_soup.ensemble.pivot_init = PivotInit::provided(zeros_like(cfg.initial));
  cfg.client_soup.ensemble.n_divisor = 1;
  auto nested = simulate(cfg);
  for (std::size_t t = 0; t < linear.rounds.size(); ++t) {
    EXPECT_LT(testing::max_rel_error(linear.rounds[t].model, nested.rounds[t].model), 1e-9);
  }
}

TEST(FedOpt, FullParticipationHalvesDistance) {
  FedConfig cfg;
  cfg.clients = make_clients(DistributionSpec::standard_gaussian(4), 6, 5,
                             OptimizerSpec::gd(Schedule::constant(0.5)), 1);
  cfg.participants = 6;
  cfg.rounds = 50;
  cfg.initial = WeightMap::vector({30.0, -30.0, 30.0, -30.0});
  auto res = simulate(cfg);
  const double d0 = l2_distance(cfg.initial, res.rounds[0].model) * 2.0;
  for (std::size_t t = 0; t < res.rounds.size(); ++t) {
    double expected = d0 * std::pow(0.5, static_cast<double>(t + 1));
    EXPECT_NEAR(res.rounds[t].distance_to_center_mean, expected, 1e-12 * d0) << "round " << t + 1;
  }
}

FedConfig adam_server(Rng& rng, bool full) {
  auto cfg = random_config(rng, FedAlgorithm::FedOpt);
  if (full) cfg.participants = cfg.clients.size();
  cfg.server = OptimizerSpec::adam(Schedule::constant(1e-3), 0.9, 0.999, 1e-8);
  cfg.rounds = 30;
  return cfg;
}

double max_server_step(const FedConfig& cfg) {
  auto res = simulate(cfg);
  auto prev = cfg.initial;
  double worst = 0.0;
  for (const auto& r : res.rounds) {
    worst = std::max(worst, max_abs(axpby(1.0, r.model, -1.0, prev)));
    prev = r.model;
  }
  return worst;
}

TEST(FedOpt, AdamServerStepIsBoundedByLr) {
  Rng rng(35, 0);
  for (int trial = 0; trial < 5; ++trial) {
    // Full participation: each coordinate's pseudogradient shrinks
    // monotonically, so every step is at most lr.
    EXPECT_LE(max_server_step(adam_server(rng, true)), 1e-3 * (1.0 + 1e-6));
    // Sampled clients can make gradients grow; only the general bound
    // lr (1 - b1) / sqrt(1 - b2) holds.
    EXPECT_LE(max_server_step(adam_server(rng, false)), 1e-3 * 0.1 / std::sqrt(0.001));
  }
}

TEST(Fed, ConfigViolationsAreReportedTogether) {
  FedConfig cfg;
  cfg.clients = {{"a", WeightMap::vector({0.0})}, {"a", WeightMap::vector({1.0})}};
  cfg.clients[1].local_steps = 0;
  cfg.rounds = 0;
  cfg.participants = 3;
  try {
    simulate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.violations().size(), 5u);
  }
}

TEST(Fed, WritesRoundsCsv) {
  auto res = simulate(two_clients(FedAlgorithm::FedOpt));
  std::ostringstream out;
  write_rounds_csv(res, out);
  EXPECT_EQ(out.str(), "round,participants,delta_norm,distance_to_center_mean\n1,a;b,5,0\n");
}

}  // namespace
}  // namespace ame
