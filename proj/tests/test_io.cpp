#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dani/error.hpp"
#include "dani/io.hpp"
#include "dani/rng.hpp"

using namespace dani;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dani_io_" + std::to_string(Rng(std::random_device{}()).bits()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("tensor round trip preserves bytes for every rank") {
  TempDir dir;
  Rng rng(7);
  int r = 0;
  for (auto shape : {std::vector<int>{5}, {3, 4}, {2, 3, 4}, {2, 2, 3, 2}}) {
    TensorF t;
    t.rank = int(shape.size());
    t.dims = {1, 1, 1, 1};
    for (std::size_t i = 0; i < shape.size(); ++i) t.dims[i] = shape[i];
    t.v.resize(t.count());
    for (auto& v : t.v) v = float(rng.uniform(-1.0, 1.0));

    const std::string p = dir.file("t" + std::to_string(r++) + ".dani");
    io::write_tensor(p, t);
    const TensorF back = io::read_tensor(p);
    REQUIRE(back.same_shape(t));
    for (std::size_t i = 0; i < t.count(); ++i) CHECK(back[i] == t[i]);

    // writer output re-serializes byte-identically
    const std::string bytes1 = slurp(p);
    io::write_tensor(p, back);
    CHECK(slurp(p) == bytes1);
  }
}

TEST_CASE("slice reader rejects corrupt headers") {
  TempDir dir;
  TensorF t({2, 2});
  const std::string p = dir.file("x.dani");
  io::write_tensor(p, t);
  auto bytes = io::read_file_bytes(p);

  auto write_raw = [&](std::vector<std::uint8_t> b, const std::string& name) {
    std::ofstream f(dir.file(name), std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  };

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write_raw(bad_magic, "bad_magic.dani");
  CHECK_THROWS_AS(io::read_tensor(dir.file("bad_magic.dani")), DataError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  write_raw(bad_version, "bad_version.dani");
  CHECK_THROWS_AS(io::read_tensor(dir.file("bad_version.dani")), DataError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  write_raw(truncated, "trunc.dani");
  CHECK_THROWS_AS(io::read_tensor(dir.file("trunc.dani")), DataError);

  auto trailing = bytes;
  trailing.push_back(0);
  write_raw(trailing, "trail.dani");
  CHECK_THROWS_AS(io::read_tensor(dir.file("trail.dani")), DataError);

  CHECK_THROWS_AS(io::read_tensor(dir.file("missing.dani")), DataError);
}

TEST_CASE("manifest round trip and header validation") {
  TempDir dir;
  std::vector<io::ManifestRow> rows = {
      {"s0", 0, 63.25, 0, "s0_v00.dani"},
      {"s0", 1, 64.75, 0, "s0_v01.dani"},
      {"s17", 0, 86.0, 3, "s17_v00.dani"},
  };
  const std::string p = dir.file("manifest.csv");
  io::write_manifest(p, rows);

  CHECK(slurp(p).rfind("subject_id,visit_index,age_years,diagnosis,path\n", 0) == 0);

  const auto back = io::read_manifest(p);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].subject_id == rows[i].subject_id);
    CHECK(back[i].visit_index == rows[i].visit_index);
    CHECK(back[i].age_years == rows[i].age_years);
    CHECK(back[i].diagnosis == rows[i].diagnosis);
    CHECK(back[i].path == rows[i].path);
  }

  std::ofstream bad(dir.file("bad.csv"));
  bad << "id,age\n";
  bad.close();
  CHECK_THROWS_AS(io::read_manifest(dir.file("bad.csv")), DataError);
}

TEST_CASE("pgm export: linear map with round half away from zero") {
  TempDir dir;
  TensorF img({1, 5});
  img[0] = -1.0f;                      // -> 0
  img[1] = 1.0f;                       // -> 255
  img[2] = 0.0f;                       // 127.5 -> 128 (half away from zero)
  img[3] = -1.0f + 2.0f / 255.0f;      // exactly 1.0 -> 1
  img[4] = 0.5f;                       // 191.25 -> 191
  const std::string p = dir.file("img.pgm");
  io::write_pgm(p, img);
  const std::string bytes = slurp(p);
  const std::string header = "P5\n5 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 5);
  CHECK(bytes.substr(0, header.size()) == header);
  const auto* px = reinterpret_cast<const std::uint8_t*>(bytes.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[1] == 255);
  CHECK(px[2] == 128);
  CHECK(px[3] == 1);
  CHECK(px[4] == 191);
}

TEST_CASE("checkpoint round trip with config echo") {
  TempDir dir;
  io::Checkpoint ckpt;
  Rng rng(9);
  TensorF a({3, 4}), b({7});
  for (auto& v : a.v) v = float(rng.uniform(-1.0, 1.0));
  for (auto& v : b.v) v = float(rng.uniform(-1.0, 1.0));
  ckpt.tensors.emplace_back("E.c1.w", a);
  ckpt.tensors.emplace_back("E.c1.b", b);
  ckpt.config_echo = "grid_size = 64\nseed = 5\n";

  const std::string p = dir.file("m.danc");
  io::write_checkpoint(p, ckpt);
  const auto back = io::read_checkpoint(p);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.config_echo == ckpt.config_echo);
  CHECK(back.tensors[0].first == "E.c1.w");
  REQUIRE(back.find("E.c1.b") != nullptr);
  CHECK(back.find("nope") == nullptr);
  for (std::size_t i = 0; i < a.count(); ++i) CHECK(back.find("E.c1.w")->v[i] == a[i]);

  const std::string bytes1 = slurp(p);
  io::write_checkpoint(p, back);
  CHECK(slurp(p) == bytes1);

  std::ofstream junk(dir.file("junk.danc"), std::ios::binary);
  junk << "DANX";
  junk.close();
  CHECK_THROWS_AS(io::read_checkpoint(dir.file("junk.danc")), DataError);
}

TEST_CASE("writes are atomic: no temp file left behind") {
  TempDir dir;
  TensorF t({2, 2});
  io::write_tensor(dir.file("a.dani"), t);
  CHECK_FALSE(fs::exists(dir.file("a.dani.tmp")));
  CHECK(fs::exists(dir.file("a.dani")));
}
