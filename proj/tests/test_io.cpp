#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "rflab/io.hpp"

using namespace rflab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("rflab_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SymTensorField random_sym(const GridSpec& g, std::uint64_t seed) {
  SymTensorField f(g);
  Rng rng(seed);
  for (std::int64_t i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("field container round-trip is bit-exact") {
  TempDir tmp;
  GridSpec g({16, 8}, {1.0, 2.0});
  SymTensorField f = random_sym(g, 42);
  const std::string path = (tmp.path / "f.rfb").string();
  save_field(f, path);
  SymTensorField r = load_sym_field(path);
  REQUIRE(r.grid() == g);
  REQUIRE(r.size() == f.size());
  for (std::int64_t i = 0; i < f.size(); ++i) REQUIRE(r.data()[i] == f.data()[i]);
}

TEST_CASE("scalar and vector containers round-trip") {
  TempDir tmp;
  GridSpec g({8, 8, 8}, {1.0, 1.0, 1.0});
  VectorField v(g);
  Rng rng(3);
  for (std::int64_t i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(-2, 2);
  const std::string path = (tmp.path / "v.rfb").string();
  save_field(v, path);
  VectorField r = load_vector_field(path);
  for (std::int64_t i = 0; i < v.size(); ++i) REQUIRE(r.data()[i] == v.data()[i]);
  CHECK_THROWS_AS(load_scalar_field(path), io_error);  // rank mismatch
}

TEST_CASE("truncated payload is a shape-mismatch error") {
  TempDir tmp;
  GridSpec g({8, 8}, {1.0, 1.0});
  SymTensorField f = random_sym(g, 7);
  const std::string path = (tmp.path / "t.rfb").string();
  save_field(f, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 16);
  CHECK_THROWS_AS(load_sym_field(path), io_error);
}

TEST_CASE("resolution mismatch is an explicit error, not a silent resize") {
  TempDir tmp;
  GridSpec g({8, 8}, {1.0, 1.0});
  const std::string path = (tmp.path / "m.rfb").string();
  save_field(random_sym(g, 1), path);
  GridSpec other({16, 16}, {1.0, 1.0});
  CHECK_THROWS_AS(load_sym_field_checked(path, other), io_error);
  CHECK_NOTHROW(load_sym_field_checked(path, g));
}

TEST_CASE("bad magic is rejected") {
  TempDir tmp;
  const std::string path = (tmp.path / "bad.rfb").string();
  std::ofstream os(path, std::ios::binary);
  os << "NOTAFILE" << std::string(64, '\0');
  os.close();
  CHECK_THROWS_AS(load_field(path), io_error);
}

TEST_CASE("trailing bytes are rejected") {
  TempDir tmp;
  GridSpec g({8}, {1.0});
  ScalarField f(g);
  f.fill(1.0);
  const std::string path = (tmp.path / "x.rfb").string();
  save_field(f, path);
  std::ofstream os(path, std::ios::binary | std::ios::app);
  os << "junk";
  os.close();
  CHECK_THROWS_AS(load_field(path), io_error);
}
