#pragma once

#include <cstring>
#include <fstream>

#include "rflab/field.hpp"

#include "json.hpp"

namespace rflab {

// Field container format:
//   bytes 0..7   magic "RFLAB001"
//   bytes 8..11  uint32 little-endian header length
//   header       UTF-8 JSON {dim, resolution[], periods[], rank, symmetric}
//   payload      float64 little-endian, row-major over axes, tensor
//                components fastest (symmetric rank-2 fields store the packed
//                upper triangle, (i,j) with i <= j, lexicographic)

namespace detail {

inline constexpr char kMagic[8] = {'R', 'F', 'L', 'A', 'B', '0', '0', '1'};

static_assert(sizeof(double) == 8);

inline void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw io_error("field container: truncated header length");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline bool host_is_little_endian() {
  const std::uint32_t x = 1;
  unsigned char c;
  std::memcpy(&c, &x, 1);
  return c == 1;
}

inline void write_doubles_le(std::ostream& os, const double* v, std::int64_t n) {
  if (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(v), n * 8);
    return;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    unsigned char b[8];
    std::memcpy(b, &v[i], 8);
    std::swap(b[0], b[7]);
    std::swap(b[1], b[6]);
    std::swap(b[2], b[5]);
    std::swap(b[3], b[4]);
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

inline void read_doubles_le(std::istream& is, double* v, std::int64_t n) {
  is.read(reinterpret_cast<char*>(v), n * 8);
  if (is.gcount() != n * 8) throw io_error("field container: truncated payload");
  if (!host_is_little_endian()) {
    for (std::int64_t i = 0; i < n; ++i) {
      unsigned char b[8];
      std::memcpy(b, &v[i], 8);
      std::swap(b[0], b[7]);
      std::swap(b[1], b[6]);
      std::swap(b[2], b[5]);
      std::swap(b[3], b[4]);
      std::memcpy(&v[i], b, 8);
    }
  }
}

}  // namespace detail

inline void save_field(const FieldBase& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  const GridSpec& g = f.grid();
  nlohmann::json hdr;
  hdr["dim"] = g.dim();
  std::vector<int> res;
  std::vector<double> per;
  for (int a = 0; a < g.dim(); ++a) {
    res.push_back(g.extent(a));
    per.push_back(g.period(a));
  }
  hdr["resolution"] = res;
  hdr["periods"] = per;
  hdr["rank"] = f.rank();
  hdr["symmetric"] = f.symmetric();
  const std::string htxt = hdr.dump();
  os.write(detail::kMagic, 8);
  detail::put_u32_le(os, static_cast<std::uint32_t>(htxt.size()));
  os.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
  detail::write_doubles_le(os, f.data(), f.size());
  if (!os) throw io_error("write failure: " + path);
}

struct LoadedField {
  GridSpec grid;
  int rank;
  bool symmetric;
  std::vector<double> values;  // [point][component]
};

inline LoadedField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw io_error("not a field container (bad magic): " + path);
  const std::uint32_t hlen = detail::get_u32_le(is);
  std::string htxt(hlen, '\0');
  is.read(htxt.data(), hlen);
  if (!is) throw io_error("field container: truncated header");
  nlohmann::json hdr = nlohmann::json::parse(htxt, nullptr, false);
  if (hdr.is_discarded()) throw io_error("field container: malformed header");
  GridSpec grid(hdr.at("resolution").get<std::vector<int>>(),
                hdr.at("periods").get<std::vector<double>>());
  const int rank = hdr.at("rank").get<int>();
  const bool symmetric = hdr.at("symmetric").get<bool>();
  int ncomp = 1;
  if (rank == 1) ncomp = grid.dim();
  if (rank == 2) ncomp = symmetric ? sym_size(grid.dim()) : grid.dim() * grid.dim();
  LoadedField out{grid, rank, symmetric, {}};
  out.values.resize(static_cast<std::size_t>(grid.num_points()) * ncomp);
  detail::read_doubles_le(is, out.values.data(), static_cast<std::int64_t>(out.values.size()));
  // a well-formed container ends exactly after the payload
  char extra;
  if (is.read(&extra, 1)) throw io_error("field container: trailing bytes");
  return out;
}

namespace detail {
template <typename F>
F to_typed(const LoadedField& lf, int want_rank) {
  if (lf.rank != want_rank) throw io_error("field container: rank mismatch");
  F f(lf.grid);
  if (static_cast<std::int64_t>(lf.values.size()) != f.size())
    throw io_error("field container: payload size mismatch");
  std::copy(lf.values.begin(), lf.values.end(), f.data());
  return f;
}
}  // namespace detail

inline ScalarField load_scalar_field(const std::string& path) {
  return detail::to_typed<ScalarField>(load_field(path), 0);
}
inline VectorField load_vector_field(const std::string& path) {
  return detail::to_typed<VectorField>(load_field(path), 1);
}
inline SymTensorField load_sym_field(const std::string& path) {
  auto lf = load_field(path);
  if (!(lf.rank == 2 && lf.symmetric))
    throw io_error("field container: expected symmetric rank-2 field");
  return detail::to_typed<SymTensorField>(lf, 2);
}

/// Load against an expected grid; refuses silent resizes.
inline SymTensorField load_sym_field_checked(const std::string& path, const GridSpec& expect) {
  SymTensorField f = load_sym_field(path);
  if (f.grid() != expect)
    throw io_error("field container: grid mismatch (refusing to resize): " + path);
  return f;
}

}  // namespace rflab
