#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tkp/tensor.hpp"

namespace tkp {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Flat binary container of named float32 arrays plus string metadata.
///
/// Layout (all integers little-endian):
///   magic "TKPC" | u32 version | u32 metadata_count
///   metadata_count x { u32 key_len | key | u32 value_len | value }
///   u32 array_count
///   array_count x { u32 name_len | name | u32 rank | rank x u64 dim | numel x f32 }
struct ArrayContainer {
  std::map<std::string, std::string> metadata;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const ArrayContainer& container);
ArrayContainer read_container(const std::filesystem::path& path);

}  // namespace tkp
