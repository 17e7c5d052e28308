#include "ame/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "ame/csv.hpp"
#include "ame/engine.hpp"
#include "ame/errors.hpp"
#include "ame/pseudograd.hpp"
#include "ame/rng.hpp"

namespace ame {

double cauchy_from_uniform(double u) { return std::tan(std::numbers::pi * (u - 0.5)); }

std::vector<Point> sample_population(const DistributionSpec& spec, std::size_t n,
                                     std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<Point> out(n, Point(spec.dimension));
  for (auto& p : out) {
    for (auto& v : p) {
      double z = spec.kind == DistKind::Cauchy ? cauchy_from_uniform(rng.uniform()) : rng.normal();
      v = spec.location + spec.scale * z;
    }
  }
  return out;
}

Point coordinate_median(const std::vector<Point>& points) {
  if (points.empty()) throw ConfigError("median of an empty point set");
  const std::size_t d = points.front().size();
  const std::size_t n = points.size();
  Point out(d);
  std::vector<double> col(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t j = 0; j < n; ++j) col[j] = points[j][c];
    std::sort(col.begin(), col.end());
    out[c] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

Point coordinate_mean(const std::vector<Point>& points) {
  if (points.empty()) throw ConfigError("mean of an empty point set");
  Point out(points.front().size(), 0.0);
  for (const auto& p : points) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[c];
  }
  for (auto& v : out) v /= static_cast<double>(points.size());
  return out;
}

TrialConfig TrialConfig::defaults_for(DistKind kind) {
  TrialConfig cfg;
  cfg.dist.kind = kind;
  const double lr = kind == DistKind::Cauchy ? 0.1 : 0.01;
  cfg.optimizer = OptimizerSpec::adam(Schedule::constant(lr), 0.2, 0.2, 1e-8);
  return cfg;
}

namespace {

double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_trial_config(const TrialConfig& cfg) {
  std::vector<std::string> errors;
  if (!(cfg.dist.scale > 0.0)) errors.push_back("distribution scale must be > 0");
  if (cfg.dist.dimension == 0) errors.push_back("dimension must be >= 1");
  if (cfg.population_size == 0) errors.push_back("population_size must be >= 1");
  if (cfg.subsample_size == 0) errors.push_back("subsample_size must be >= 1");
  if (cfg.subsample_size > cfg.population_size) {
    errors.push_back("subsample_size must not exceed population_size");
  }
  if (cfg.trials == 0) errors.push_back("trials must be >= 1");
  if (cfg.init_point.size() != cfg.dist.dimension) {
    errors.push_back("init_point must have one coordinate per dimension");
  }
  if (cfg.batch_size == 0 || cfg.batch_size > cfg.subsample_size) {
    errors.push_back("batch_size must be in [1, subsample_size]");
  }
  if (cfg.epochs == 0) errors.push_back("epochs must be >= 1");
  try {
    validate(cfg.optimizer);
  } catch (const ConfigError& e) {
    errors.insert(errors.end(), e.violations().begin(), e.violations().end());
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

}  // namespace

TrialReport run_estimator_trials(const TrialConfig& cfg) {
  check_trial_config(cfg);
  const auto population = sample_population(cfg.dist, cfg.population_size, cfg.seed);

  TrialReport report;
  report.population_median = coordinate_median(population);
  report.population_mean = coordinate_mean(population);
  report.reference =
      cfg.dist.kind == DistKind::Cauchy ? report.population_median : report.population_mean;
  report.rows.resize(cfg.trials);

  EnsembleConfig base;
  base.pivot_policy = PivotPolicy::adaptive();
  base.pivot_init = PivotInit::provided(WeightMap::vector(cfg.init_point));
  base.optimizer = cfg.optimizer;
  base.epochs = cfg.epochs;
  base.batch_size = cfg.batch_size;
  base.shuffle = true;
  base.ordering = Ordering::GivenOrder;

  parallel_for(
      cfg.trials,
      [&](std::size_t t) {
        Rng pick(cfg.seed, stream_id(t + 1, 1));
        auto idx = sample_without_replacement(pick, population.size(), cfg.subsample_size);
        std::vector<Ingredient> ingredients;
        std::vector<Point> sub;
        ingredients.reserve(idx.size());
        sub.reserve(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
          sub.push_back(population[idx[j]]);
          ingredients.push_back({"p" + std::to_string(j), WeightMap::vector(sub.back()), {}});
        }
        EnsembleConfig ecfg = base;
        ecfg.seed = Rng(cfg.seed, stream_id(t + 1, 2)).next_u64();
        auto result = run_ensemble(ecfg, ingredients);

        TrialRow& row = report.rows[t];
        row.trial = t;
        row.soup = coordinate_mean(sub);
        row.ame = result.weights.flatten();
        row.dist_soup = distance(row.soup, report.reference);
        row.dist_ame = distance(row.ame, report.reference);
      },
      cfg.threads);
  return report;
}

Point median_abs_gap(const TrialReport& report) {
  if (report.rows.empty()) return {};
  Point out(report.rows.front().soup.size());
  std::vector<double> col(report.rows.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t t = 0; t < report.rows.size(); ++t) {
      col[t] = std::abs(report.rows[t].ame[c] - report.rows[t].soup[c]);
    }
    out[c] = median_of(col);
  }
  return out;
}

double median_dist_soup(const TrialReport& report) {
  std::vector<double> v;
  for (const auto& r : report.rows) v.push_back(r.dist_soup);
  return median_of(std::move(v));
}

double median_dist_ame(const TrialReport& report) {
  std::vector<double> v;
  for (const auto& r : report.rows) v.push_back(r.dist_ame);
  return median_of(std::move(v));
}

std::array<Point2, 4> cycle_ingredients(double k, double omega) {
  return {{{-k * omega, (k + 1) * omega},
           {-(k + 1) * omega, -k * omega},
           {k * omega, -(k + 1) * omega},
           {(k + 1) * omega, k * omega}}};
}

namespace {

std::vector<Ingredient> cycle_as_ingredients(double k, double omega) {
  std::vector<Ingredient> out;
  int i = 1;
  for (const auto& p : cycle_ingredients(k, omega)) {
    out.push_back({"x" + std::to_string(i++), WeightMap::vector({p[0], p[1]}), {}});
  }
  return out;
}

EnsembleConfig cycle_config(double omega, OptimizerSpec optimizer, std::uint64_t epochs,
                            std::vector<Point2>& trajectory, std::vector<double>& steps) {
  EnsembleConfig cfg;
  cfg.pivot_policy = PivotPolicy::adaptive();
  cfg.pivot_init = PivotInit::provided(WeightMap::vector({omega, 0.0}));
  cfg.optimizer = std::move(optimizer);
  cfg.n_divisor = 1;
  cfg.epochs = epochs;
  cfg.batch_size = 1;
  cfg.ordering = Ordering::GivenOrder;
  cfg.on_step = [&trajectory, &steps](const StepLog& log, const WeightMap& w) {
    const auto& x = w.tensors().front().data;
    trajectory.push_back({x[0], x[1]});
    steps.push_back(log.displacement);
  };
  return cfg;
}

}  // namespace

std::vector<Point2> cycle_counterexample(double k, double omega, std::uint64_t cycles) {
  std::vector<std::string> errors;
  if (!(k > 0.0)) errors.push_back("k must be > 0");
  if (!(omega > 0.0)) errors.push_back("omega must be > 0");
  if (cycles == 0) errors.push_back("cycles must be >= 1");
  if (!errors.empty()) throw ConfigError(std::move(errors));

  std::vector<Point2> trajectory;
  std::vector<double> steps;
  trajectory.reserve(4 * cycles);
  steps.reserve(4 * cycles);
  auto cfg = cycle_config(omega, OptimizerSpec::gd(Schedule::constant(1.0 / (k + 1.0))), cycles,
                          trajectory, steps);
  run_ensemble(cfg, cycle_as_ingredients(k, omega));
  return trajectory;
}

double schedule_tail_sum(double c, double alpha, double cap, std::uint64_t n) {
  const double a = static_cast<double>(n) + 1.0;
  auto eta = [=](double t) { return std::min(c * std::pow(t, alpha), cap); };
  // Past t_cap the schedule is the pure power law.
  const double t_cap = std::pow(cap / c, 1.0 / alpha);
  double sum = eta(a);
  double from = a;
  if (t_cap > a) {
    sum += cap * (t_cap - a);
    from = t_cap;
  }
  boost::math::quadrature::exp_sinh<double> integrator;
  sum += integrator.integrate([=](double t) { return c * std::pow(t, alpha); }, from,
                              std::numeric_limits<double>::infinity());
  return sum;
}

ConvergenceReport convergence_check(const ConvergenceConfig& cfg) {
  std::vector<std::string> errors;
  if (!(cfg.alpha < -1.0)) errors.push_back("alpha must be < -1 for a summable schedule");
  if (!(cfg.c > 0.0)) errors.push_back("c must be > 0");
  if (!(cfg.k > 0.0)) errors.push_back("k must be > 0");
  if (!(cfg.omega > 0.0)) errors.push_back("omega must be > 0");
  if (cfg.steps == 0 || cfg.steps % 4 != 0) errors.push_back("steps must be a positive multiple of 4");
  if (!(cfg.tail_fraction > 0.0 && cfg.tail_fraction < 1.0)) {
    errors.push_back("tail_fraction must be in (0, 1)");
  }
  if (cfg.optimizer.weight_decay != 0.0) errors.push_back("weight decay is not covered by the bound");
  if (std::holds_alternative<AdadeltaParams>(cfg.optimizer.method)) {
    errors.push_back("adadelta steps are not bounded by the learning rate");
  }
  const auto* adam = std::get_if<AdamParams>(&cfg.optimizer.method);
  if (adam && !(adam->beta1 * adam->beta1 < adam->beta2)) {
    errors.push_back("adam bound requires beta1^2 < beta2");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));

  ConvergenceReport report;
  const double zeta = 1.0;
  const double n_div = 1.0;
  const double dim = 2.0;
  report.radius = cfg.omega * std::hypot(cfg.k, cfg.k + 1.0);
  report.cap = 1.0 / (2.0 * report.radius * zeta);

  OptimizerSpec opt = cfg.optimizer;
  opt.lr = cfg.constant_control ? Schedule::constant(1.0 / (cfg.k + 1.0))
                                : Schedule::capped_power(cfg.c, cfg.alpha, report.cap);

  std::vector<double> steps;
  report.trajectory.reserve(cfg.steps);
  steps.reserve(cfg.steps);
  auto ecfg = cycle_config(cfg.omega, opt, cfg.steps / 4, report.trajectory, steps);
  run_ensemble(ecfg, cycle_as_ingredients(cfg.k, cfg.omega));

  const auto tail = static_cast<std::uint64_t>(std::llround(cfg.tail_fraction * cfg.steps));
  report.tail_start = cfg.steps - tail;
  for (std::size_t t = report.tail_start; t < steps.size(); ++t) {
    report.max_tail_displacement = std::max(report.max_tail_displacement, steps[t]);
  }

  // Per-step length bound divided by eta_t.
  double factor = 2.0 * report.radius * zeta / n_div;
  if (std::holds_alternative<AdagradParams>(opt.method)) factor = std::sqrt(dim);
  if (adam) {
    const double b1 = adam->beta1;
    const double b2 = adam->beta2;
    const double m0 = adam->initial_m.value_or(0.0);
    const double v0 = adam->initial_v.value_or(0.0);
    const double k2 = (m0 == 0.0 ? 0.0 : m0 * m0 / v0) +
                      (1 - b1) * (1 - b1) / ((1 - b2) * (1 - b1 * b1 / b2));
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(report.tail_start + 1));
    factor = std::sqrt(dim) * std::sqrt(k2) / bc1;
  }
  report.tail_bound = factor * schedule_tail_sum(cfg.c, cfg.alpha, report.cap, report.tail_start);
  report.within_bound = report.max_tail_displacement < report.tail_bound;
  return report;
}

std::vector<CoverageRow> soup_wlln(const DistributionSpec& spec, const std::vector<std::size_t>& sizes,
                                   std::size_t trials, double eps, std::uint64_t seed) {
  std::vector<std::string> errors;
  if (spec.kind == DistKind::Cauchy) {
    errors.push_back("first moment undefined for the Cauchy distribution");
  }
  if (!(spec.scale > 0.0)) errors.push_back("distribution scale must be > 0");
  if (spec.dimension == 0) errors.push_back("dimension must be >= 1");
  if (trials == 0) errors.push_back("trials must be >= 1");
  if (!(eps > 0.0)) errors.push_back("eps must be > 0");
  if (sizes.empty()) errors.push_back("at least one size is required");
  for (auto n : sizes) {
    if (n == 0) errors.push_back("sizes must be >= 1");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));

  const WeightMap mean = WeightMap::vector(Point(spec.dimension, spec.location));
  std::vector<CoverageRow> rows;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    std::vector<char> hit(trials, 0);
    parallel_for(trials, [&](std::size_t t) {
      auto points = sample_population(spec, sizes[si], Rng(seed, stream_id(si, t)).next_u64());
      std::vector<WeightMap> maps;
      maps.reserve(points.size());
      for (auto& p : points) maps.push_back(WeightMap::vector(std::move(p)));
      hit[t] = l2_distance(soup(maps), mean) < eps;
    });
    std::size_t count = std::count(hit.begin(), hit.end(), 1);
    rows.push_back({sizes[si], static_cast<double>(count) / static_cast<double>(trials)});
  }
  return rows;
}

double eval_quadratic_loss(const WeightMap& x, const WeightMap& xi) {
  require_compatible(x, xi);
  const double d = l2_distance(x, xi);
  const double n = global_l2_norm(xi);
  return 0.5 * (d * d - n * n);
}

void write_trials_csv(const TrialReport& report, std::ostream& out) {
  CsvWriter csv(out);
  csv.row({"trial", "soup_x", "soup_y", "ame_x", "ame_y", "dist_soup", "dist_ame"});
  for (const auto& r : report.rows) {
    auto coord = [](const Point& p, std::size_t c) {
      return c < p.size() ? format_double(p[c]) : std::string();
    };
    csv.row({std::to_string(r.trial), coord(r.soup, 0), coord(r.soup, 1), coord(r.ame, 0),
             coord(r.ame, 1), format_double(r.dist_soup), format_double(r.dist_ame)});
  }
}

void write_cycle_csv(const std::vector<Point2>& points, std::ostream& out) {
  CsvWriter csv(out);
  csv.row({"step", "x", "y", "l1_norm"});
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    csv.row({std::to_string(i + 1), format_double(p[0]), format_double(p[1]),
             format_double(std::abs(p[0]) + std::abs(p[1]))});
  }
}

void write_wlln_csv(const std::vector<CoverageRow>& rows, std::ostream& out) {
  CsvWriter csv(out);
  csv.row({"n", "fraction"});
  for (const auto& r : rows) csv.row({std::to_string(r.n), format_double(r.fraction)});
}

}  // namespace ame
