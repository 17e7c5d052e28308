#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "ame/checkpoint.hpp"
#include "ame/errors.hpp"
#include "ame/weightstore.hpp"
#include "fixtures.hpp"

namespace ame {
namespace {

using testing::random_map;
using testing::TempDir;

std::vector<std::uint8_t> raw_file(const std::string& header, const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> out(8);
  std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

std::vector<std::uint8_t> f32_bytes(std::initializer_list<float> xs) {
  std::vector<std::uint8_t> out;
  for (float x : xs) {
    std::uint32_t u;
    std::memcpy(&u, &x, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  return out;
}

TEST(WeightMap, SortsTensorsByName) {
  WeightMap m({{"b", Dtype::F32, {1}, {2.0}}, {"a", Dtype::F32, {1}, {1.0}}});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.tensors()[0].name, "a");
  EXPECT_EQ(m.tensors()[1].name, "b");
  EXPECT_EQ(m.at("b").data[0], 2.0);
  EXPECT_EQ(m.find("c"), nullptr);
}

TEST(WeightMap, RejectsDuplicatesAndBadShapes) {
  EXPECT_THROW(WeightMap({{"a", Dtype::F32, {1}, {1.0}}, {"a", Dtype::F32, {1}, {1.0}}}),
               SchemaMismatch);
  EXPECT_THROW(WeightMap({{"a", Dtype::F32, {2, 2}, {1.0, 2.0}}}), SchemaMismatch);
}

TEST(WeightMap, CompatibilityNamesOffendingTensor) {
  WeightMap a({{"w", Dtype::F32, {2}, {1, 2}}, {"z", Dtype::F32, {1}, {0}}});
  WeightMap b({{"w", Dtype::F32, {3}, {1, 2, 3}}, {"z", Dtype::F32, {1}, {0}}});
  try {
    require_compatible(a, b);
    FAIL();
  } catch (const SchemaMismatch& e) {
    EXPECT_EQ(e.tensor(), "w");
  }
  WeightMap c({{"w", Dtype::F32, {2}, {1, 2}}});
  try {
    std::vector<WeightMap> maps = {a, c};
    validate_compatible(maps);
    FAIL();
  } catch (const SchemaMismatch& e) {
    EXPECT_EQ(e.tensor(), "z");
  }
  EXPECT_THROW(validate_compatible(std::span<const WeightMap>{}), ConfigError);
}

TEST(WeightMap, ElementwiseKernels) {
  auto x = WeightMap::vector({1.0, -2.0, 4.0});
  auto y = WeightMap::vector({3.0, 0.5, 0.0});
  EXPECT_EQ(axpby(2.0, x, -1.0, y).flatten(), (std::vector<double>{-1.0, -4.5, 8.0}));
  EXPECT_EQ(scale(0.5, x).flatten(), (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(elementwise_square(x).flatten(), (std::vector<double>{1.0, 4.0, 16.0}));
  EXPECT_EQ(elementwise_sqrt_add_eps(WeightMap::vector({4.0, 9.0}), 1.0).flatten(),
            (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(elementwise_div(x, WeightMap::vector({2.0, 4.0, 8.0})).flatten(),
            (std::vector<double>{0.5, -0.5, 0.5}));
  EXPECT_EQ(zeros_like(x).flatten(), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_DOUBLE_EQ(global_l2_norm(WeightMap::vector({3.0, 4.0})), 5.0);
  EXPECT_DOUBLE_EQ(l2_distance(WeightMap::vector({1.0, 1.0}), WeightMap::vector({4.0, 5.0})), 5.0);
  EXPECT_EQ(max_abs(x), 4.0);
  EXPECT_TRUE(all_finite(x));
  EXPECT_FALSE(all_finite(WeightMap::vector({std::numeric_limits<double>::infinity()})));
}

TEST(WeightMap, MetadataIsCarriedThroughKernels) {
  auto x = WeightMap::vector({1.0}).with_metadata({{"format", "pt"}});
  EXPECT_EQ(scale(2.0, x).metadata().at("format"), "pt");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(11, 0);
  for (int i = 0; i < 50; ++i) {
    auto m = random_map(rng).with_metadata({{"step", std::to_string(i)}});
    auto bytes = encode_checkpoint(m);
    auto back = decode_checkpoint(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(encode_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, HeaderIsPaddedAndSorted) {
  WeightMap m({{"b", Dtype::F32, {1}, {1.0}}, {"a", Dtype::F32, {2}, {2.0, 3.0}}});
  auto bytes = encode_checkpoint(m);
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t{bytes[i]} << (8 * i);
  EXPECT_EQ(n % 8, 0u);
  EXPECT_EQ(bytes.size(), 8 + n + 12);
  std::string header(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(n));
  EXPECT_LT(header.find("\"a\""), header.find("\"b\""));
}

TEST(Checkpoint, SaveAndLoadFile) {
  TempDir dir;
  Rng rng(3, 0);
  auto m = random_map(rng);
  save_checkpoint(m, dir / "m.safetensors");
  EXPECT_EQ(load_checkpoint(dir / "m.safetensors"), m);
  EXPECT_THROW(load_checkpoint(dir / "missing.safetensors"), IoError);
  EXPECT_THROW(save_checkpoint(m, dir / "no" / "such" / "dir.safetensors"), IoError);
}

TEST(Checkpoint, ReadsHalfPrecision) {
  // 1.0, -2.0 in F16; 1.0, 0.5 in BF16.
  std::vector<std::uint8_t> data = {0x00, 0x3c, 0x00, 0xc0, 0x80, 0x3f, 0x00, 0x3f};
  auto bytes = raw_file(
      R"({"h":{"dtype":"F16","shape":[2],"data_offsets":[0,4]},)"
      R"("b":{"dtype":"BF16","shape":[2],"data_offsets":[4,8]}})",
      data);
  auto m = decode_checkpoint(bytes);
  EXPECT_EQ(m.at("h").data, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(m.at("b").data, (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(m.at("h").dtype, Dtype::F32);
  EXPECT_EQ(half_to_float(0x7bff), 65504.0f);
  EXPECT_EQ(half_to_float(0x0001), std::ldexp(1.0f, -24));
}

TEST(Checkpoint, RejectsMalformedInput) {
  auto msg = [](const std::vector<std::uint8_t>& bytes) -> std::string {
    try {
      decode_checkpoint(bytes);
    } catch (const FormatError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(msg({1, 2, 3}).find("truncated header"), std::string::npos);
  EXPECT_NE(msg(raw_file("{not json", {})).find("malformed header"), std::string::npos);
  EXPECT_NE(msg(raw_file(R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", f32_bytes({1}))).find("truncated buffer"),
            std::string::npos);
  EXPECT_NE(msg(raw_file(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
                         R"("b":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}})",
                         f32_bytes({1})))
                .find("overlapping"),
            std::string::npos);
  EXPECT_NE(msg(raw_file(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
                         R"("a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}})",
                         f32_bytes({1})))
                .find("duplicate"),
            std::string::npos);
  EXPECT_NE(msg(raw_file(R"({"a":{"dtype":"I8","shape":[1],"data_offsets":[0,1]}})", {1})).find("dtype"),
            std::string::npos);
  auto nan = raw_file(R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}})",
                      f32_bytes({std::numeric_limits<float>::quiet_NaN()}));
  EXPECT_NE(msg(nan).find("non-finite"), std::string::npos);
  EXPECT_NO_THROW(decode_checkpoint(nan, LoadOptions{true}));
}

}  // namespace
}  // namespace ame
