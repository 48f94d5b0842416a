#include <bit>
#include <cstring>
#include <fstream>

#include "semrecon/errors.hpp"
#include "semrecon/io.hpp"

namespace semrecon {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParameterError("read_tnsr: truncated header in " + path.string());
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
}

}  // namespace

std::size_t Tensor::count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

void write_tnsr(const std::filesystem::path& path, const Tensor& t) {
  if (t.dims.size() > kMaxRank) throw ParameterError("write_tnsr: rank too large");
  if (t.count() != t.data.size()) throw ParameterError("write_tnsr: payload does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("write_tnsr: cannot open " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  if (!out) throw ParameterError("write_tnsr: write failed for " + path.string());
}

Tensor read_tnsr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("read_tnsr: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParameterError("read_tnsr: bad magic in " + path.string());
  }
  if (get_u32(in, path) != kVersion) throw ParameterError("read_tnsr: unsupported version in " + path.string());
  const std::uint32_t rank = get_u32(in, path);
  if (rank > kMaxRank) throw ParameterError("read_tnsr: rank too large in " + path.string());
  Tensor t;
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(in, path));
  const std::size_t n = t.count();
  std::vector<unsigned char> raw(4 * n);
  if (n > 0 && !in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw ParameterError("read_tnsr: truncated payload in " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParameterError("read_tnsr: trailing bytes in " + path.string());
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* b = raw.data() + 4 * i;
    const std::uint32_t u =
        std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24;
    t.data[i] = std::bit_cast<float>(u);
  }
  return t;
}

Tensor to_tensor(const Grid& g) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width()),
            static_cast<std::uint32_t>(g.channels())};
  t.data.assign(g.data().begin(), g.data().end());
  return t;
}

Grid to_grid(const Tensor& t) {
  if (t.dims.size() != 2 && t.dims.size() != 3) throw ParameterError("to_grid: tensor must have rank 2 or 3");
  const int c = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  Grid g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), c);
  std::copy(t.data.begin(), t.data.end(), g.data().begin());
  return g;
}

}  // namespace semrecon
