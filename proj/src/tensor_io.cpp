#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "surt/tensor.hpp"

namespace surt {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'U', 'R', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) fail(ErrorKind::Io, "truncated tensor header");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) fail(ErrorKind::Io, "tensor write failed");
}

Tensor<float> read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) fail(ErrorKind::Io, "bad tensor magic");
  if (const auto version = get_u32(in); version != kVersion) {
    fail(ErrorKind::Io, "unsupported tensor version " + std::to_string(version));
  }
  const std::uint32_t rank = get_u32(in);
  if (rank > 8) fail(ErrorKind::Io, "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_u32(in);
  std::vector<float> data(shape_size(shape));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
  return Tensor<float>(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path);
  write_tensor(out, t);
}

Tensor<float> load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  return read_tensor(in);
}

}  // namespace surt
