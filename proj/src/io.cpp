#include "dani/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dani/error.hpp"

namespace dani::io {

namespace {

// All integers little-endian on disk. Host is assumed little-endian (x86 /
// aarch64 in practice); a static check keeps surprises loud.
static_assert(std::endian::native == std::endian::little,
              "big-endian hosts need byte swaps in io.cpp");

void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& out, T v) {
  put_bytes(out, &v, sizeof(v));
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  const std::string& path;

  void take(void* dst, std::size_t n) {
    if (std::size_t(end - p) < n)
      throw DataError(path + ": truncated file");
    std::memcpy(dst, p, n);
    p += n;
  }
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(v));
    return v;
  }
};

void write_atomic(const std::string& path, const std::string& payload) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for write: " + tmp);
    f.write(payload.data(), std::streamsize(payload.size()));
    if (!f) throw DataError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + path + ": " + ec.message());
}

void put_tensor_body(std::string& out, const TensorF& t) {
  put<std::uint8_t>(out, std::uint8_t(t.rank));
  for (int i = 0; i < t.rank; ++i) put<std::uint32_t>(out, std::uint32_t(t.dims[i]));
  put_bytes(out, t.data(), t.count() * sizeof(float));
}

TensorF get_tensor_body(Reader& r) {
  TensorF t;
  t.rank = r.get<std::uint8_t>();
  if (t.rank < 1 || t.rank > 4) throw DataError(r.path + ": bad tensor rank");
  t.dims = {1, 1, 1, 1};
  for (int i = 0; i < t.rank; ++i) {
    t.dims[i] = int(r.get<std::uint32_t>());
    if (t.dims[i] <= 0) throw DataError(r.path + ": bad tensor dim");
  }
  t.v.resize(t.count());
  r.take(t.v.data(), t.count() * sizeof(float));
  return t;
}

}  // namespace

void write_tensor(const std::string& path, const TensorF& t) {
  std::string out;
  out.reserve(16 + t.count() * 4);
  put_bytes(out, "DANI", 4);
  put<std::uint16_t>(out, 1);  // version
  put<std::uint8_t>(out, 0);   // dtype f32
  put_tensor_body(out, t);
  write_atomic(path, out);
}

TensorF read_tensor(const std::string& path) {
  auto bytes = read_file_bytes(path);
  Reader r{bytes.data(), bytes.data() + bytes.size(), path};
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, "DANI", 4) != 0)
    throw DataError(path + ": not a DANI slice file");
  if (r.get<std::uint16_t>() != 1) throw DataError(path + ": unsupported version");
  if (r.get<std::uint8_t>() != 0) throw DataError(path + ": unsupported dtype");
  TensorF t = get_tensor_body(r);
  if (r.p != r.end) throw DataError(path + ": trailing bytes");
  return t;
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::string out = "subject_id,visit_index,age_years,diagnosis,path\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.age_years);
    out += row.subject_id;
    out += ',';
    out += std::to_string(row.visit_index);
    out += ',';
    out += buf;
    out += ',';
    out += std::to_string(row.diagnosis);
    out += ',';
    out += row.path;
    out += '\n';
  }
  write_atomic(path, out);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(f, line) ||
      line != "subject_id,visit_index,age_years,diagnosis,path")
    throw DataError(path + ": bad manifest header");
  std::vector<ManifestRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestRow row;
    std::string field;
    if (!std::getline(ss, row.subject_id, ',')) throw DataError(path + ": bad row");
    if (!std::getline(ss, field, ',')) throw DataError(path + ": bad row");
    row.visit_index = std::stoi(field);
    if (!std::getline(ss, field, ',')) throw DataError(path + ": bad row");
    row.age_years = std::stod(field);
    if (!std::getline(ss, field, ',')) throw DataError(path + ": bad row");
    row.diagnosis = std::stoi(field);
    if (!std::getline(ss, row.path)) throw DataError(path + ": bad row");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_pgm(const std::string& path, const TensorF& img) {
  if (img.rank != 2) throw DataError("pgm export expects a rank-2 image");
  const int rows = img.dims[0], cols = img.dims[1];
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  out.reserve(out.size() + img.count());
  for (std::size_t i = 0; i < img.count(); ++i) {
    double v = (double(img[i]) + 1.0) * 0.5 * 255.0;
    double r = std::floor(std::abs(v) + 0.5) * (v < 0 ? -1.0 : 1.0);
    r = std::min(255.0, std::max(0.0, r));
    out.push_back(char(std::uint8_t(r)));
  }
  write_atomic(path, out);
}

const TensorF* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  put_bytes(out, "DANC", 4);
  put<std::uint32_t>(out, std::uint32_t(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint16_t>(out, std::uint16_t(name.size()));
    put_bytes(out, name.data(), name.size());
    put_tensor_body(out, t);
  }
  put<std::uint32_t>(out, std::uint32_t(ckpt.config_echo.size()));
  put_bytes(out, ckpt.config_echo.data(), ckpt.config_echo.size());
  write_atomic(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  auto bytes = read_file_bytes(path);
  Reader r{bytes.data(), bytes.data() + bytes.size(), path};
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, "DANC", 4) != 0)
    throw DataError(path + ": not a checkpoint file");
  Checkpoint ckpt;
  const auto count = r.get<std::uint32_t>();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.take(name.data(), len);
    ckpt.tensors.emplace_back(std::move(name), get_tensor_body(r));
  }
  const auto echo_len = r.get<std::uint32_t>();
  ckpt.config_echo.resize(echo_len);
  r.take(ckpt.config_echo.data(), echo_len);
  if (r.p != r.end) throw DataError(path + ": trailing bytes");
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace dani::io
