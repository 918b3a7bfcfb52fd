#include "tkp/checkpoint_io.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "tkp/errors.hpp"

namespace tkp {
namespace {

constexpr std::array<char, 4> kMagic = {'T', 'K', 'P', 'C'};

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw LoadError("truncated container " + path.string());
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  const auto len = get_le<std::uint32_t>(is, path);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw LoadError("truncated container " + path.string());
  return s;
}

}  // namespace

const NamedArray* ArrayContainer::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void write_container(const std::filesystem::path& path, const ArrayContainer& container) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kContainerVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(container.metadata.size()));
  for (const auto& [key, value] : container.metadata) {
    put_string(os, key);
    put_string(os, value);
  }
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(container.arrays.size()));
  for (const auto& a : container.arrays) {
    if (shape_numel(a.shape) != a.values.size()) {
      throw DimensionError("array '" + a.name + "' shape " + shape_string(a.shape) +
                           " does not match its value count");
    }
    put_string(os, a.name);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    for (std::size_t d : a.shape) put_le<std::uint64_t>(os, d);
    for (float v : a.values) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os.flush()) throw std::runtime_error("failed writing " + path.string());
}

ArrayContainer read_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open container " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw LoadError(path.string() + " is not a tensor container");
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kContainerVersion) {
    throw LoadError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  ArrayContainer c;
  const auto n_meta = get_le<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = get_string(is, path);
    c.metadata[key] = get_string(is, path);
  }
  const auto n_arrays = get_le<std::uint32_t>(is, path);
  c.arrays.reserve(n_arrays);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = get_string(is, path);
    const auto rank = get_le<std::uint32_t>(is, path);
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(get_le<std::uint64_t>(is, path));
    a.values.resize(shape_numel(a.shape));
    for (auto& v : a.values) v = std::bit_cast<float>(get_le<std::uint32_t>(is, path));
    c.arrays.push_back(std::move(a));
  }
  return c;
}

}  // namespace tkp
