#include "ame/pseudograd.hpp"

#include <cmath>
#include <sstream>

#include "ame/errors.hpp"

namespace ame {

Schedule Schedule::constant(double value) {
  if (!std::isfinite(value)) throw ConfigError("constant schedule value must be finite");
  return Schedule(Constant{value});
}

Schedule Schedule::harmonic(int offset) {
  if (offset != 0 && offset != 1) throw ConfigError("harmonic schedule offset must be 0 or 1");
  return Schedule(Harmonic{offset});
}

Schedule Schedule::power(double c, double alpha) {
  if (!std::isfinite(c) || !std::isfinite(alpha)) {
    throw ConfigError("power schedule parameters must be finite");
  }
  return Schedule(Power{c, alpha});
}

Schedule Schedule::capped_power(double c, double alpha, double cap) {
  if (!std::isfinite(c) || !std::isfinite(alpha) || !std::isfinite(cap)) {
    throw ConfigError("capped power schedule parameters must be finite");
  }
  return Schedule(CappedPower{c, alpha, cap});
}

Schedule Schedule::explicit_values(std::vector<double> values) {
  if (values.empty()) throw ConfigError("explicit schedule needs at least one value");
  return Schedule(Explicit{std::move(values)});
}

double Schedule::at(std::uint64_t step) const {
  if (step == 0) throw ConfigError("schedules are indexed from step 1");
  auto i = static_cast<double>(step);
  struct Visitor {
    std::uint64_t step;
    double i;
    double operator()(const Constant& s) const { return s.value; }
    double operator()(const Harmonic& s) const { return 1.0 / (i + s.offset); }
    double operator()(const Power& s) const { return s.c * std::pow(i, s.alpha); }
    double operator()(const CappedPower& s) const {
      return std::min(s.c * std::pow(i, s.alpha), s.cap);
    }
    double operator()(const Explicit& s) const {
      if (step > s.values.size()) {
        throw Error("explicit schedule exhausted at step " + std::to_string(step) + " (length " +
                    std::to_string(s.values.size()) + ")");
      }
      return s.values[step - 1];
    }
  };
  return std::visit(Visitor{step, i}, kind_);
}

std::string Schedule::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Constant>) {
          os << "constant(" << s.value << ")";
        } else if constexpr (std::is_same_v<T, Harmonic>) {
          os << "harmonic(" << s.offset << ")";
        } else if constexpr (std::is_same_v<T, Power>) {
          os << "power(" << s.c << "," << s.alpha << ")";
        } else if constexpr (std::is_same_v<T, CappedPower>) {
          os << "capped_power(" << s.c << "," << s.alpha << "," << s.cap << ")";
        } else {
          os << "explicit[" << s.values.size() << "]";
        }
      },
      kind_);
  return os.str();
}

PivotPolicy PivotPolicy::ema(double decay) {
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("EMA pivot decay must be in (0, 1]");
  return {Kind::Ema, decay};
}

WeightMap pseudogradient(const WeightMap& pivot, const WeightMap& ingredient, double zeta,
                         std::uint64_t n_divisor) {
  if (n_divisor == 0) throw ConfigError("pseudogradient divisor must be >= 1");
  require_compatible(pivot, ingredient);
  auto n = static_cast<double>(n_divisor);
  WeightMapBuilder out(pivot);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    const auto& x = ingredient.tensors()[i].data;
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = zeta * (dst[e] - x[e]) / n;
  }
  return std::move(out).build();
}

WeightMap soup(std::span<const WeightMap> ingredients) {
  validate_compatible(ingredients);
  auto n = static_cast<double>(ingredients.size());
  WeightMapBuilder out(ingredients.front());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    std::vector<double> sum(dst.size(), 0.0);
    for (const auto& m : ingredients) {
      const auto& x = m.tensors()[i].data;
      for (std::size_t e = 0; e < sum.size(); ++e) sum[e] += x[e];
    }
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = sum[e] / n;
  }
  return std::move(out).build();
}

WeightMap pivot_identity(const WeightMap& pivot, std::span<const WeightMap> ingredients) {
  validate_compatible(ingredients);
  require_compatible(pivot, ingredients.front());
  auto n = static_cast<double>(ingredients.size());
  WeightMapBuilder out(pivot);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    std::vector<double> sum(dst.size(), 0.0);
    for (const auto& m : ingredients) {
      const auto& x = m.tensors()[i].data;
      for (std::size_t e = 0; e < sum.size(); ++e) sum[e] += dst[e] - x[e];
    }
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = dst[e] - sum[e] / n;
  }
  return std::move(out).build();
}

}  // namespace ame
