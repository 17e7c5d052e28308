#pragma once

// Low-dimensional experiments: optimizers as location estimators over
// heavy-tailed and Gaussian populations, the cyclic counterexample for
// constant learning rates, decaying-schedule convergence, and the weak law
// of large numbers for soups.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ame/optim.hpp"
#include "ame/weightstore.hpp"

namespace ame {

enum class DistKind { Cauchy, Gaussian };

// location + scale * Z per coordinate, Z standard Cauchy or Gaussian.
struct DistributionSpec {
  DistKind kind = DistKind::Gaussian;
  double location = 0.0;
  double scale = 1.0;
  std::size_t dimension = 2;

  static DistributionSpec standard_cauchy(std::size_t dimension = 2) {
    return {DistKind::Cauchy, 0.0, 1.0, dimension};
  }
  static DistributionSpec standard_gaussian(std::size_t dimension = 2) {
    return {DistKind::Gaussian, 0.0, 1.0, dimension};
  }
};

using Point = std::vector<double>;

// Inverse CDF of the standard Cauchy: tan(pi (u - 1/2)).
double cauchy_from_uniform(double u);

// Row-major draws from Rng(seed, 0): point j, coordinate c consumes the next
// uniform (Cauchy) or the next pair of uniforms (Gaussian, Box-Muller).
std::vector<Point> sample_population(const DistributionSpec& spec, std::size_t n,
                                     std::uint64_t seed);

// Coordinatewise median (mean of the middle pair for even counts) and mean.
Point coordinate_median(const std::vector<Point>& points);
Point coordinate_mean(const std::vector<Point>& points);

struct TrialConfig {
  DistributionSpec dist;
  std::size_t population_size = 60000;
  std::size_t subsample_size = 300;
  std::size_t trials = 300;
  Point init_point = {10.0, 10.0};
  std::uint64_t batch_size = 20;
  std::uint64_t epochs = 200;
  OptimizerSpec optimizer = OptimizerSpec::adam(Schedule::constant(0.01), 0.2, 0.2, 1e-8);
  std::uint64_t seed = 0;
  unsigned threads = 0;

  // Adam with beta1 = beta2 = 0.2, eps = 1e-8; lr 0.1 for Cauchy, 0.01 otherwise.
  static TrialConfig defaults_for(DistKind kind);
};

struct TrialRow {
  std::size_t trial = 0;
  Point soup;
  Point ame;
  double dist_soup = 0.0;  // to the reference point
  double dist_ame = 0.0;
};

struct TrialReport {
  std::vector<TrialRow> rows;
  Point population_median;
  Point population_mean;
  // Population median for Cauchy, population mean for Gaussian.
  Point reference;
};

// Each trial subsamples without replacement, treats every point as an
// ingredient and runs an adaptive-pivot ensemble from init_point with
// per-epoch shuffling. Trials draw from independent streams and may run in
// parallel; rows come back in trial order.
TrialReport run_estimator_trials(const TrialConfig& cfg);

// Median over trials of the per-coordinate |ame - soup|.
Point median_abs_gap(const TrialReport& report);
double median_dist_soup(const TrialReport& report);
double median_dist_ame(const TrialReport& report);

using Point2 = std::array<double, 2>;

// Ingredients of the cyclic counterexample, in cycling order.
std::array<Point2, 4> cycle_ingredients(double k, double omega);

// Points visited by adaptive-pivot GD with lr 1/(k+1), n_divisor 1, from
// (omega, 0), cycling the four ingredients `cycles` times.
std::vector<Point2> cycle_counterexample(double k, double omega, std::uint64_t cycles);

struct ConvergenceConfig {
  double k = 1.0;
  double omega = 1.0;
  double alpha = -1.5;
  double c = 1.0;
  std::uint64_t steps = 100000;  // multiple of 4
  double tail_fraction = 0.1;
  // Learning-rate schedule is replaced by min(c t^alpha, cap); GD, Adagrad
  // or Adam.
  OptimizerSpec optimizer = OptimizerSpec::gd(Schedule::constant(1.0));
  // Control run: keep the counterexample's constant lr 1/(k+1) but report
  // against the decaying-schedule bound.
  bool constant_control = false;
};

struct ConvergenceReport {
  double radius = 0.0;  // smallest origin-centred ball holding the geometry
  double cap = 0.0;     // 1 / (2 radius zeta)
  std::uint64_t tail_start = 0;
  double max_tail_displacement = 0.0;
  double tail_bound = 0.0;
  bool within_bound = false;
  std::vector<Point2> trajectory;
};

ConvergenceReport convergence_check(const ConvergenceConfig& cfg);

// Upper bound on the summed step lengths after step n for the schedule
// min(c t^alpha, cap): eta(n+1) + integral_{n+1}^inf eta(t) dt.
double schedule_tail_sum(double c, double alpha, double cap, std::uint64_t n);

struct CoverageRow {
  std::size_t n = 0;
  double fraction = 0.0;
  friend bool operator==(const CoverageRow&, const CoverageRow&) = default;
};

// Fraction of trials whose n-point soup lies within eps (Euclidean) of the
// distribution mean. Rejects distributions without a first moment.
std::vector<CoverageRow> soup_wlln(const DistributionSpec& spec, const std::vector<std::size_t>& sizes,
                                   std::size_t trials, double eps, std::uint64_t seed);

// 1/2 (|x - xi|^2 - |xi|^2)
double eval_quadratic_loss(const WeightMap& x, const WeightMap& xi);

void write_trials_csv(const TrialReport& report, std::ostream& out);
void write_cycle_csv(const std::vector<Point2>& points, std::ostream& out);
void write_wlln_csv(const std::vector<CoverageRow>& rows, std::ostream& out);

}  // namespace ame
