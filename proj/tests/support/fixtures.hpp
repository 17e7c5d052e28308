#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ame/engine.hpp"
#include "ame/rng.hpp"
#include "ame/weightstore.hpp"

namespace ame::testing {

// Values are rounded to float so they survive an F32 round trip.
inline WeightMap random_map(Rng& rng, bool f32_values = true) {
  std::vector<Tensor> ts(3);
  ts[0] = {"block.0.bias", Dtype::F32, {4}, {}};
  ts[1] = {"block.0.weight", Dtype::F32, {4, 3}, {}};
  ts[2] = {"head", Dtype::F32, {2, 2, 2}, {}};
  for (auto& t : ts) {
    t.data.resize(element_count(t.shape));
    for (auto& v : t.data) {
      double x = rng.normal();
      v = f32_values ? static_cast<double>(static_cast<float>(x)) : x;
    }
  }
  return WeightMap(std::move(ts));
}

inline std::vector<Ingredient> random_ingredients(std::size_t n, Rng& rng) {
  std::vector<Ingredient> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = (i < 10 ? "m0" : "m") + std::to_string(i);
    out.push_back({id, random_map(rng), {}});
  }
  return out;
}

inline std::vector<WeightMap> weights_of(const std::vector<Ingredient>& ings) {
  std::vector<WeightMap> out;
  for (const auto& i : ings) out.push_back(i.weights);
  return out;
}

// |a - b| <= rtol * max(|a|, |b|) elementwise, with a 1e-12 floor on the scale.
inline double max_rel_error(const WeightMap& a, const WeightMap& b) {
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

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ame-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace ame::testing
