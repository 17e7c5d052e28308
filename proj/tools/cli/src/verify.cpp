#include "verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "ame/csv.hpp"
#include "ame/engine.hpp"
#include "ame/fedlab.hpp"
#include "ame/optim.hpp"
#include "ame/pseudograd.hpp"
#include "ame/rng.hpp"
#include "ame/synthlab.hpp"

namespace ame::cli {

namespace {

struct Check {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
};

using Checks = std::vector<Check>;

// Largest elementwise |a - b| / max(|a|, |b|, 1e-12).
double max_rel_error(const WeightMap& a, const WeightMap& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.tensors()[i].data;
    const auto& y = b.tensors()[i].data;
    for (std::size_t e = 0; e < x.size(); ++e) {
      double scale = std::max({std::abs(x[e]), std::abs(y[e]), 1e-12});
      worst = std::max(worst, std::abs(x[e] - y[e]) / scale);
    }
  }
  return worst;
}

WeightMap random_map(Rng& rng) {
  std::vector<Tensor> ts(2);
  ts[0] = {"layer.bias", Dtype::F32, {5}, {}};
  ts[1] = {"layer.weight", Dtype::F32, {3, 4}, {}};
  for (auto& t : ts) {
    t.data.resize(element_count(t.shape));
    for (auto& v : t.data) v = rng.normal();
  }
  return WeightMap(std::move(ts));
}

std::vector<Ingredient> random_ingredients(std::size_t n, Rng& rng) {
  std::vector<Ingredient> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"m" + std::to_string(i), random_map(rng), {}});
  return out;
}

WeightMap soup_of(const std::vector<Ingredient>& ings) {
  std::vector<WeightMap> ws;
  for (const auto& i : ings) ws.push_back(i.weights);
  return soup(ws);
}

Checks soup_eq() {
  Checks out;
  const double tol = 1e-6;
  double adaptive = 0.0, footnote = 0.0, fixed = 0.0;
  for (std::size_t n : {1, 2, 4, 8, 16, 32}) {
    Rng rng(2024, n);
    auto ings = random_ingredients(n, rng);
    const WeightMap target = soup_of(ings);

    EnsembleConfig cfg;
    cfg.ordering = Ordering::GivenOrder;
    cfg.pivot_init = PivotInit::provided(random_map(rng));
    cfg.pivot_policy = PivotPolicy::adaptive();
    cfg.optimizer = OptimizerSpec::gd(Schedule::harmonic(0));
    cfg.n_divisor = 1;
    adaptive = std::max(adaptive, max_rel_error(run_ensemble(cfg, ings).weights, target));

    EnsembleConfig fn = cfg;
    fn.pivot_init = PivotInit::ingredient(ings.front().id);
    fn.optimizer = OptimizerSpec::gd(Schedule::harmonic(1));
    footnote = std::max(footnote, max_rel_error(run_ensemble(fn, ings).weights, target));

    EnsembleConfig fx = cfg;
    fx.pivot_policy = PivotPolicy::fixed();
    fx.optimizer = OptimizerSpec::gd(Schedule::constant(1.0));
    fx.n_divisor.reset();
    fixed = std::max(fixed, max_rel_error(run_ensemble(fx, ings).weights, target));
  }
  auto fmt = [](double e) { return "max rel error " + format_double(e); };
  out.push_back({"soup-eq", "adaptive pivot, 1/i lr", adaptive < tol, fmt(adaptive)});
  out.push_back({"soup-eq", "start at x1, 1/(i+1) lr", footnote < tol, fmt(footnote)});
  out.push_back({"soup-eq", "fixed pivot, lr 1, divisor N", fixed < tol, fmt(fixed)});

  double identity = 0.0;
  Rng rng(7, 0);
  auto ings = random_ingredients(8, rng);
  std::vector<WeightMap> ws;
  for (const auto& i : ings) ws.push_back(i.weights);
  const WeightMap target = soup(ws);
  for (int t = 0; t < 100; ++t) {
    identity = std::max(identity, max_rel_error(pivot_identity(random_map(rng), ws), target));
  }
  out.push_back({"soup-eq", "pivot identity, 100 pivots", identity < tol, fmt(identity)});
  return out;
}

Checks cycle() {
  Checks out;
  auto pts = cycle_counterexample(1.0, 1.0, 2500);
  const std::array<Point2, 4> orbit = {{{0, 1}, {-1, 0}, {0, -1}, {1, 0}}};
  double orbit_err = 0.0, l1_err = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& o = orbit[i % 4];
    orbit_err = std::max(orbit_err, std::hypot(p[0] - o[0], p[1] - o[1]));
    l1_err = std::max(l1_err, std::abs(std::abs(p[0]) + std::abs(p[1]) - 1.0));
  }
  const auto& last = pts.back();
  double ret = std::hypot(last[0] - 1.0, last[1]);
  out.push_back({"cycle", "orbit (0,1),(-1,0),(0,-1),(1,0)", orbit_err < 1e-4,
                 "max deviation " + format_double(orbit_err)});
  out.push_back({"cycle", "return to (1,0) after 10000 steps", ret < 1e-4, "error " + format_double(ret)});
  out.push_back({"cycle", "l1 norm stays 1", l1_err < 1e-4, "max drift " + format_double(l1_err)});
  return out;
}

Checks convergence() {
  Checks out;
  ConvergenceConfig cfg;
  auto rep = convergence_check(cfg);
  out.push_back({"convergence", "alpha=-1.5 tail below bound", rep.within_bound,
                 format_double(rep.max_tail_displacement) + " < " + format_double(rep.tail_bound)});
  cfg.constant_control = true;
  auto ctl = convergence_check(cfg);
  out.push_back({"convergence", "constant lr violates bound", !ctl.within_bound,
                 format_double(ctl.max_tail_displacement) + " vs " + format_double(ctl.tail_bound)});
  return out;
}

Checks adagrad_gd() {
  const double eps = 1e6;
  const double base_lr = 0.05;
  Rng rng(99, 0);
  WeightMap w = random_map(rng);
  OptimizerState sa, sg;
  auto ada = OptimizerSpec::adagrad(Schedule::constant(base_lr * eps), eps);
  auto gd = OptimizerSpec::gd(Schedule::constant(base_lr));
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    WeightMap g = random_map(rng);
    auto wa = adagrad_step(w, g, sa, ada);
    auto wg = gd_step(w, g, sg, gd);
    worst = std::max(worst, max_rel_error(axpby(1.0, wa, -1.0, w), axpby(1.0, wg, -1.0, w)));
    w = wg;
  }
  return {{"adagrad-gd", "eps=1e6, lr=eta*eps tracks GD(eta)", worst < 1e-3,
           "max rel step deviation " + format_double(worst)}};
}

Checks fed_reduction() {
  Checks out;
  double worst = 0.0;
  for (std::uint64_t cfg_id = 0; cfg_id < 10; ++cfg_id) {
    Rng rng(500, cfg_id);
    FedConfig cfg;
    const std::size_t clients = 2 + rng.below(7);
    cfg.clients = make_clients(DistributionSpec::standard_gaussian(3), clients, cfg_id,
                               OptimizerSpec::gd(Schedule::constant(0.5)), 1 + rng.below(3));
    cfg.initial = WeightMap::vector({rng.normal(), rng.normal(), rng.normal()});
    cfg.participants = 1 + rng.below(clients);
    cfg.rounds = 5;
    cfg.seed = cfg_id;
    auto opt = simulate_fedopt(cfg);
    cfg.algorithm = FedAlgorithm::FedSoup;
    auto fs = simulate_fedsoup(cfg);

    WeightMap x = cfg.initial;
    for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
      std::vector<WeightMap> models;
      for (auto i : sample_participants(clients, cfg.participants, cfg.seed, t)) {
        models.push_back(client_train(x, cfg.clients[i]));
      }
      x = soup(models);
      const auto& a = opt.rounds[t - 1];
      const auto& b = fs.rounds[t - 1];
      worst = std::max({worst, l2_distance(a.model, x), l2_distance(b.model, x),
                        std::abs(a.delta_norm - b.delta_norm),
                        std::abs(a.distance_to_center_mean - b.distance_to_center_mean)});
    }
  }
  out.push_back({"fed-reduction", "fedsoup == fedopt == fedavg (10 configs)", worst < 1e-7,
                 "max deviation " + format_double(worst)});

  FedConfig hand;
  hand.clients = {{"a", WeightMap::vector({0.0, 0.0})}, {"b", WeightMap::vector({2.0, 0.0})}};
  hand.initial = WeightMap::vector({5.0, -3.0});
  hand.participants = 2;
  hand.algorithm = FedAlgorithm::FedSoup;
  auto r = simulate_fedsoup(hand);
  const auto x1 = r.model.flatten();
  const auto d1 = r.rounds.front().delta.flatten();
  bool ok = std::abs(x1[0] - 1.0) < 1e-12 && std::abs(x1[1]) < 1e-12 &&
            std::abs(d1[0] - (1.0 - 5.0)) < 1e-12 && std::abs(d1[1] - 3.0) < 1e-12;
  out.push_back({"fed-reduction", "two clients (0,0),(2,0) give x1=(1,0)", ok,
                 "x1=(" + format_double(x1[0]) + "," + format_double(x1[1]) + ")"});
  return out;
}

const std::vector<std::pair<std::string, std::function<Checks()>>>& registry() {
  static const std::vector<std::pair<std::string, std::function<Checks()>>> r = {
      {"soup-eq", soup_eq},
      {"cycle", cycle},
      {"convergence", convergence},
      {"adagrad-gd", adagrad_gd},
      {"fed-reduction", fed_reduction},
  };
  return r;
}

}  // namespace

std::vector<std::string> verify_suites() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  names.push_back("all");
  return names;
}

bool run_verify(const std::string& suite, bool quiet, std::ostream& out) {
  Checks checks;
  for (const auto& [name, fn] : registry()) {
    if (suite == "all" || suite == name) {
      auto c = fn();
      checks.insert(checks.end(), c.begin(), c.end());
    }
  }
  bool all = true;
  char line[256];
  for (const auto& c : checks) {
    all = all && c.pass;
    if (quiet && c.pass) continue;
    std::snprintf(line, sizeof line, "%-4s  %-14s %-42s %s\n", c.pass ? "PASS" : "FAIL",
                  c.suite.c_str(), c.name.c_str(), c.detail.c_str());
    out << line;
  }
  if (!quiet) out << (all ? "all checks passed" : "some checks FAILED") << "\n";
  return all;
}

}  // namespace ame::cli
