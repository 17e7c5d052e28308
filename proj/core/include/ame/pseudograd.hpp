#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ame/weightstore.hpp"

namespace ame {

// A scalar sequence indexed by step i >= 1. Drives learning rates and
// pseudogradient amplification.
class Schedule {
 public:
  struct Constant {
    double value;
  };
  // 1 / (i + offset), offset in {0, 1}.
  struct Harmonic {
    int offset;
  };
  // c * i^alpha
  struct Power {
    double c;
    double alpha;
  };
  // min(c * i^alpha, cap)
  struct CappedPower {
    double c;
    double alpha;
    double cap;
  };
  // values[i - 1]; evaluating past the end is an error.
  struct Explicit {
    std::vector<double> values;
  };
  using Kind = std::variant<Constant, Harmonic, Power, CappedPower, Explicit>;

  Schedule() : kind_(Constant{1.0}) {}

  static Schedule constant(double value);
  static Schedule harmonic(int offset);
  static Schedule power(double c, double alpha);
  static Schedule capped_power(double c, double alpha, double cap);
  static Schedule explicit_values(std::vector<double> values);

  double at(std::uint64_t step) const;

  const Kind& kind() const noexcept { return kind_; }
  std::string describe() const;

 private:
  explicit Schedule(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

// Which point pseudogradients are measured from.
struct PivotPolicy {
  enum class Kind { Fixed, Adaptive, Ema };
  Kind kind = Kind::Adaptive;
  double decay = 1.0;  // Ema only, in (0, 1]

  static PivotPolicy fixed() { return {Kind::Fixed, 1.0}; }
  static PivotPolicy adaptive() { return {Kind::Adaptive, 1.0}; }
  static PivotPolicy ema(double decay);
};

struct Pseudogradient {
  WeightMap grad;
  std::uint64_t step = 0;
  std::vector<std::string> ingredient_ids;
};

// zeta * (pivot - ingredient) / n_divisor, elementwise.
WeightMap pseudogradient(const WeightMap& pivot, const WeightMap& ingredient, double zeta,
                         std::uint64_t n_divisor);

// Uniform mean. Accumulates in list order, so the result does not depend on
// how the caller's threads were scheduled.
WeightMap soup(std::span<const WeightMap> ingredients);

// pivot - (1/N) * sum_i (pivot - x_i); equals the soup for every finite pivot.
WeightMap pivot_identity(const WeightMap& pivot, std::span<const WeightMap> ingredients);

}  // namespace ame
