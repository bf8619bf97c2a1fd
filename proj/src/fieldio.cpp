#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "qls/grid.hpp"

namespace qls {

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ConfigError("field record truncated");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_field(std::ostream& os, const StateField& f) {
  const Grid& g = f.grid();
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.points_per_axis()));
  put_le<double>(os, g.half_length());
  for (const auto& v : f.values()) {
    put_le<double>(os, v.real());
    put_le<double>(os, v.imag());
  }
}

StateField read_field(std::istream& is) {
  auto dim = get_le<std::uint32_t>(is);
  auto n = get_le<std::uint32_t>(is);
  double L = get_le<double>(is);
  Grid g(static_cast<int>(dim), L, static_cast<int>(n));
  std::vector<cplx> vals(g.size());
  for (auto& v : vals) {
    double re = get_le<double>(is);
    double im = get_le<double>(is);
    v = cplx(re, im);
  }
  return StateField(g, std::move(vals));
}

void write_fields(const std::string& path, const std::vector<StateField>& frames) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  for (const auto& f : frames) write_field(os, f);
}

std::vector<StateField> read_fields(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  std::vector<StateField> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_field(is));
  return out;
}

}  // namespace qls
