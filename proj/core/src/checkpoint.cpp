#include "ame/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "ame/errors.hpp"

namespace ame {

namespace {

using nlohmann::json;

constexpr const char* kMetadataKey = "__metadata__";

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

json parse_header(std::string_view text) {
  // nlohmann keeps the last of duplicated keys silently; track them ourselves.
  std::vector<std::set<std::string>> seen;
  std::string duplicate;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t ev, json& parsed) {
    switch (ev) {
      case json::parse_event_t::object_start:
        seen.emplace_back();
        break;
      case json::parse_event_t::object_end:
        if (!seen.empty()) seen.pop_back();
        break;
      case json::parse_event_t::key:
        if (!seen.empty() && !seen.back().insert(parsed.get<std::string>()).second &&
            duplicate.empty()) {
          duplicate = parsed.get<std::string>();
          (void)depth;
        }
        break;
      default:
        break;
    }
    return true;
  };
  json header;
  try {
    header = json::parse(text.begin(), text.end(), cb);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  if (!duplicate.empty()) {
    throw FormatError("malformed header: duplicate key \"" + duplicate + "\"");
  }
  if (!header.is_object()) throw FormatError("malformed header: not a JSON object");
  return header;
}

struct Entry {
  std::string name;
  Dtype dtype;
  Shape shape;
  std::uint64_t begin;
  std::uint64_t end;
};

Entry parse_entry(const std::string& name, const json& j) {
  auto bad = [&](const std::string& why) {
    return FormatError("malformed header: tensor \"" + name + "\": " + why);
  };
  if (!j.is_object()) throw bad("entry is not an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "dtype" && key != "shape" && key != "data_offsets") {
      throw bad("unexpected field \"" + key + "\"");
    }
  }
  if (!j.contains("dtype") || !j["dtype"].is_string()) throw bad("missing dtype");
  if (!j.contains("shape") || !j["shape"].is_array()) throw bad("missing shape");
  if (!j.contains("data_offsets") || !j["data_offsets"].is_array() ||
      j["data_offsets"].size() != 2) {
    throw bad("data_offsets must be [begin, end]");
  }
  Entry e;
  e.name = name;
  e.dtype = parse_dtype(j["dtype"].get<std::string>());
  for (const auto& d : j["shape"]) {
    if (!d.is_number_unsigned()) throw bad("shape must hold non-negative integers");
    e.shape.push_back(static_cast<std::int64_t>(d.get<std::uint64_t>()));
  }
  const auto& off = j["data_offsets"];
  if (!off[0].is_number_unsigned() || !off[1].is_number_unsigned()) {
    throw bad("data_offsets must be non-negative integers");
  }
  e.begin = off[0].get<std::uint64_t>();
  e.end = off[1].get<std::uint64_t>();
  if (e.end < e.begin) throw bad("data_offsets end precedes begin");
  return e;
}

}  // namespace

float half_to_float(std::uint16_t h) {
  std::uint32_t sign = std::uint32_t(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // Subnormal: renormalise into float's wider exponent range.
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      mant &= 0x3FFu;
      bits = sign | std::uint32_t(127 - 15 - e) << 23 | mant << 13;
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | mant << 13;
  } else {
    bits = sign | (exp + (127 - 15)) << 23 | mant << 13;
  }
  return std::bit_cast<float>(bits);
}

float bfloat16_to_float(std::uint16_t bits) {
  return std::bit_cast<float>(std::uint32_t(bits) << 16);
}

WeightMap decode_checkpoint(std::span<const std::uint8_t> bytes, const LoadOptions& opts) {
  if (bytes.size() < 8) throw FormatError("truncated header: file shorter than 8 bytes");
  std::uint64_t header_len = read_u64_le(bytes.data());
  if (header_len > bytes.size() - 8) {
    throw FormatError("truncated header: declared length exceeds file size");
  }
  std::string_view text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);
  json header = parse_header(text);

  auto buffer = bytes.subspan(8 + header_len);

  Metadata metadata;
  std::vector<Entry> entries;
  for (const auto& [key, value] : header.items()) {
    if (key == kMetadataKey) {
      if (!value.is_object()) throw FormatError("malformed header: __metadata__ must be an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) {
          throw FormatError("malformed header: __metadata__ values must be strings");
        }
        metadata[mk] = mv.get<std::string>();
      }
      continue;
    }
    entries.push_back(parse_entry(key, value));
  }

  for (const auto& e : entries) {
    if (e.end > buffer.size()) {
      throw FormatError("truncated buffer: tensor \"" + e.name + "\" ends at byte " +
                        std::to_string(e.end) + " of " + std::to_string(buffer.size()));
    }
    std::size_t n = element_count(e.shape);
    if (e.end - e.begin != n * dtype_size(e.dtype)) {
      throw FormatError("malformed header: tensor \"" + e.name +
                        "\": data range does not match shape and dtype");
    }
  }

  std::vector<const Entry*> by_offset;
  for (const auto& e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Entry* a, const Entry* b) { return a->begin < b->begin; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i]->begin < by_offset[i - 1]->end) {
      throw FormatError("overlapping data ranges: \"" + by_offset[i - 1]->name +
                        "\" and \"" + by_offset[i]->name + "\"");
    }
  }

  std::vector<Tensor> tensors;
  tensors.reserve(entries.size());
  for (const auto& e : entries) {
    Tensor t;
    t.name = e.name;
    t.dtype = Dtype::F32;
    t.shape = e.shape;
    std::size_t n = element_count(e.shape);
    t.data.resize(n);
    const std::uint8_t* p = buffer.data() + e.begin;
    for (std::size_t k = 0; k < n; ++k) {
      float v = 0.0f;
      switch (e.dtype) {
        case Dtype::F32: v = std::bit_cast<float>(read_u32_le(p + 4 * k)); break;
        case Dtype::F16: v = half_to_float(read_u16_le(p + 2 * k)); break;
        case Dtype::BF16: v = bfloat16_to_float(read_u16_le(p + 2 * k)); break;
      }
      if (!opts.allow_non_finite && !std::isfinite(v)) {
        throw FormatError("non-finite value (NaN/Inf) in tensor \"" + e.name + "\" at index " +
                          std::to_string(k));
      }
      t.data[k] = v;
    }
    tensors.push_back(std::move(t));
  }
  return WeightMap(std::move(tensors), std::move(metadata));
}

std::vector<std::uint8_t> encode_checkpoint(const WeightMap& map) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& t : map) {
    std::uint64_t bytes = t.data.size() * 4;
    header[t.name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!map.metadata().empty()) header[kMetadataKey] = map.metadata();

  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  write_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : map) {
    for (double v : t.data) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

WeightMap load_checkpoint(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  try {
    return decode_checkpoint(bytes, opts);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const WeightMap& map, const std::filesystem::path& path) {
  auto bytes = encode_checkpoint(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace ame
