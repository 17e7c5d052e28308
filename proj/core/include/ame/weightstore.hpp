#pragma once

// Named tensor collections: the representation of a model, a pivot, a
// pseudogradient, or a batch of images. Values are held as double in memory;
// the canonical on-disk element type is F32 (see checkpoint.hpp).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ame {

enum class Dtype { F32, F16, BF16 };

std::string_view to_string(Dtype d);
Dtype parse_dtype(std::string_view s);
std::size_t dtype_size(Dtype d);

using Shape = std::vector<std::int64_t>;
using Metadata = std::map<std::string, std::string>;

// Number of elements described by a shape; throws on negative dims or overflow.
std::size_t element_count(const Shape& shape);

struct Tensor {
  std::string name;
  Dtype dtype = Dtype::F32;
  Shape shape;
  std::vector<double> data;

  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct SchemaEntry {
  std::string name;
  Dtype dtype;
  Shape shape;
  friend bool operator==(const SchemaEntry&, const SchemaEntry&) = default;
};

struct Schema {
  std::vector<SchemaEntry> entries;
  friend bool operator==(const Schema&, const Schema&) = default;
};

// Tensors sorted lexicographically by name with unique names. Immutable once
// built; every operation below returns a new map.
class WeightMap {
 public:
  WeightMap() = default;
  explicit WeightMap(std::vector<Tensor> tensors, Metadata metadata = {});

  // Single flat tensor, handy for low-dimensional experiments.
  static WeightMap vector(std::vector<double> values, std::string name = "x");

  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  const Metadata& metadata() const noexcept { return metadata_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  std::size_t element_count() const noexcept;

  const Tensor* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;

  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  // In-place access for the owner of a non-const map (optimizer buffers).
  // Shape and names stay fixed.
  std::span<double> values_mut(std::size_t i) { return tensors_[i].data; }

  Schema schema() const;
  WeightMap with_metadata(Metadata metadata) const;

  // All values flattened in tensor order.
  std::vector<double> flatten() const;

  friend bool operator==(const WeightMap&, const WeightMap&) = default;

 private:
  struct Trusted {};
  WeightMap(Trusted, std::vector<Tensor> tensors, Metadata metadata)
      : tensors_(std::move(tensors)), metadata_(std::move(metadata)) {}

  friend class WeightMapBuilder;

  std::vector<Tensor> tensors_;
  Metadata metadata_;
};

// Builds a result with the same layout as a template map, filling values
// tensor by tensor. Used by the elementwise kernels.
class WeightMapBuilder {
 public:
  explicit WeightMapBuilder(const WeightMap& layout);

  std::size_t size() const noexcept { return tensors_.size(); }
  std::span<double> values(std::size_t i) { return tensors_[i].data; }
  WeightMap build() &&;

 private:
  std::vector<Tensor> tensors_;
  Metadata metadata_;
};

// Returns the shared schema. Throws SchemaMismatch naming the first offending
// tensor, or ConfigError if the list is empty.
Schema validate_compatible(std::span<const WeightMap> maps);
void require_compatible(const WeightMap& a, const WeightMap& b);

bool all_finite(const WeightMap& m);

// Elementwise kernels. Binary kernels require compatible operands and take
// metadata from the first.
WeightMap axpby(double alpha, const WeightMap& x, double beta, const WeightMap& y);
WeightMap zeros_like(const WeightMap& m);
WeightMap scale(double factor, const WeightMap& m);
WeightMap elementwise_square(const WeightMap& m);
// sqrt(v) + eps per element.
WeightMap elementwise_sqrt_add_eps(const WeightMap& m, double eps);
WeightMap elementwise_div(const WeightMap& num, const WeightMap& den);

double global_l2_norm(const WeightMap& m);
double l2_distance(const WeightMap& a, const WeightMap& b);
double max_abs(const WeightMap& m);

// Per-tensor counterpart of axpby for streaming one tensor at a time.
Tensor axpby(double alpha, const Tensor& x, double beta, const Tensor& y);

}  // namespace ame
