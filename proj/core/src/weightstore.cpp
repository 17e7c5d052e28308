#include "ame/weightstore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ame/errors.hpp"

namespace ame {

std::string_view to_string(Dtype d) {
  switch (d) {
    case Dtype::F32: return "F32";
    case Dtype::F16: return "F16";
    case Dtype::BF16: return "BF16";
  }
  return "?";
}

Dtype parse_dtype(std::string_view s) {
  if (s == "F32") return Dtype::F32;
  if (s == "F16") return Dtype::F16;
  if (s == "BF16") return Dtype::BF16;
  throw FormatError("unsupported dtype \"" + std::string(s) + "\"");
}

std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 2; }

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto dim : shape) {
    if (dim < 0) throw FormatError("negative dimension in shape");
    auto u = static_cast<std::size_t>(dim);
    if (u != 0 && n > std::numeric_limits<std::size_t>::max() / u) {
      throw FormatError("shape element count overflows");
    }
    n *= u;
  }
  return n;
}

WeightMap::WeightMap(std::vector<Tensor> tensors, Metadata metadata)
    : tensors_(std::move(tensors)), metadata_(std::move(metadata)) {
  std::sort(tensors_.begin(), tensors_.end(),
            [](const Tensor& a, const Tensor& b) { return a.name < b.name; });
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& t = tensors_[i];
    if (i > 0 && tensors_[i - 1].name == t.name) {
      throw SchemaMismatch(t.name, "duplicate tensor name \"" + t.name + "\"");
    }
    if (ame::element_count(t.shape) != t.data.size()) {
      throw SchemaMismatch(t.name, "tensor \"" + t.name +
                                       "\": shape does not match element count");
    }
  }
}

WeightMap WeightMap::vector(std::vector<double> values, std::string name) {
  Tensor t;
  t.name = std::move(name);
  t.shape = {static_cast<std::int64_t>(values.size())};
  t.data = std::move(values);
  std::vector<Tensor> ts;
  ts.push_back(std::move(t));
  return WeightMap(Trusted{}, std::move(ts), {});
}

std::size_t WeightMap::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

const Tensor* WeightMap::find(std::string_view name) const {
  auto it = std::lower_bound(
      tensors_.begin(), tensors_.end(), name,
      [](const Tensor& t, std::string_view n) { return t.name < n; });
  if (it == tensors_.end() || it->name != name) return nullptr;
  return &*it;
}

const Tensor& WeightMap::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw SchemaMismatch(std::string(name),
                       "no tensor named \"" + std::string(name) + "\"");
}

Schema WeightMap::schema() const {
  Schema s;
  s.entries.reserve(tensors_.size());
  for (const auto& t : tensors_) s.entries.push_back({t.name, t.dtype, t.shape});
  return s;
}

WeightMap WeightMap::with_metadata(Metadata metadata) const {
  return WeightMap(Trusted{}, tensors_, std::move(metadata));
}

std::vector<double> WeightMap::flatten() const {
  std::vector<double> out;
  out.reserve(element_count());
  for (const auto& t : tensors_) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

WeightMapBuilder::WeightMapBuilder(const WeightMap& layout)
    : tensors_(layout.tensors()), metadata_(layout.metadata()) {}

WeightMap WeightMapBuilder::build() && {
  return WeightMap(WeightMap::Trusted{}, std::move(tensors_), std::move(metadata_));
}

namespace {

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void compare_schemas(const Schema& ref, const Schema& other) {
  const auto& a = ref.entries;
  const auto& b = other.entries;
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].name != b[i].name) {
      const auto& missing = std::min(a[i].name, b[i].name);
      throw SchemaMismatch(missing, "tensor \"" + missing +
                                        "\" is not present in every map");
    }
    if (a[i].shape != b[i].shape) {
      throw SchemaMismatch(a[i].name, "tensor \"" + a[i].name + "\": shape " +
                                          shape_string(a[i].shape) + " vs " +
                                          shape_string(b[i].shape));
    }
    if (a[i].dtype != b[i].dtype) {
      throw SchemaMismatch(a[i].name, "tensor \"" + a[i].name + "\": dtype " +
                                          std::string(to_string(a[i].dtype)) + " vs " +
                                          std::string(to_string(b[i].dtype)));
    }
  }
  if (a.size() != b.size()) {
    const auto& extra = a.size() > b.size() ? a[n].name : b[n].name;
    throw SchemaMismatch(extra, "tensor \"" + extra + "\" is not present in every map");
  }
}

template <class F>
WeightMap unary(const WeightMap& m, F f) {
  WeightMapBuilder out(m);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (auto& v : out.values(i)) v = f(v);
  }
  return std::move(out).build();
}

template <class F>
WeightMap binary(const WeightMap& x, const WeightMap& y, F f) {
  require_compatible(x, y);
  WeightMapBuilder out(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    const auto& yv = y.tensors()[i].data;
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = f(dst[e], yv[e]);
  }
  return std::move(out).build();
}

}  // namespace

Schema validate_compatible(std::span<const WeightMap> maps) {
  if (maps.empty()) throw ConfigError("validate_compatible: empty list of weight maps");
  for (std::size_t i = 1; i < maps.size(); ++i) require_compatible(maps.front(), maps[i]);
  return maps.front().schema();
}

void require_compatible(const WeightMap& a, const WeightMap& b) {
  const auto& ta = a.tensors();
  const auto& tb = b.tensors();
  // Fast path: identical layout.
  if (ta.size() == tb.size()) {
    bool same = true;
    for (std::size_t i = 0; i < ta.size() && same; ++i) {
      same = ta[i].name == tb[i].name && ta[i].shape == tb[i].shape &&
             ta[i].dtype == tb[i].dtype;
    }
    if (same) return;
  }
  compare_schemas(a.schema(), b.schema());
}

bool all_finite(const WeightMap& m) {
  for (const auto& t : m) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

WeightMap axpby(double alpha, const WeightMap& x, double beta, const WeightMap& y) {
  return binary(x, y, [=](double a, double b) { return alpha * a + beta * b; });
}

Tensor axpby(double alpha, const Tensor& x, double beta, const Tensor& y) {
  if (x.name != y.name || x.shape != y.shape || x.dtype != y.dtype) {
    throw SchemaMismatch(x.name, "tensor \"" + x.name + "\" is incompatible with \"" +
                                     y.name + "\"");
  }
  Tensor out = x;
  for (std::size_t e = 0; e < out.data.size(); ++e) {
    out.data[e] = alpha * x.data[e] + beta * y.data[e];
  }
  return out;
}

WeightMap zeros_like(const WeightMap& m) {
  return unary(m, [](double) { return 0.0; });
}

WeightMap scale(double factor, const WeightMap& m) {
  return unary(m, [=](double v) { return factor * v; });
}

WeightMap elementwise_square(const WeightMap& m) {
  return unary(m, [](double v) { return v * v; });
}

WeightMap elementwise_sqrt_add_eps(const WeightMap& m, double eps) {
  return unary(m, [=](double v) { return std::sqrt(v) + eps; });
}

WeightMap elementwise_div(const WeightMap& num, const WeightMap& den) {
  return binary(num, den, [](double a, double b) { return a / b; });
}

double global_l2_norm(const WeightMap& m) {
  double sum = 0.0;
  for (const auto& t : m) {
    for (double v : t.data) sum += v * v;
  }
  return std::sqrt(sum);
}

double l2_distance(const WeightMap& a, const WeightMap& b) {
  require_compatible(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.tensors()[i].data;
    const auto& y = b.tensors()[i].data;
    for (std::size_t e = 0; e < x.size(); ++e) {
      double d = x[e] - y[e];
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

double max_abs(const WeightMap& m) {
  double best = 0.0;
  for (const auto& t : m) {
    for (double v : t.data) best = std::max(best, std::abs(v));
  }
  return best;
}

}  // namespace ame
