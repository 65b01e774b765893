#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dani/tensor.hpp"

// On-disk formats.
//
// Slice container ("DANI"): magic, u16 version=1, u8 dtype=0 (f32), u8 rank,
// u32 dims (little-endian), then row-major little-endian f32 payload.
//
// Checkpoint ("DANC"): magic, u32 tensor count, then per tensor u16 name
// length, name bytes, u8 rank, u32 dims, f32 payload; trailed by a u32
// length-prefixed text block echoing the training config.
//
// Writers are atomic (temp file + rename).

namespace dani::io {

void write_tensor(const std::string& path, const TensorF& t);
TensorF read_tensor(const std::string& path);

struct ManifestRow {
  std::string subject_id;
  int visit_index = 0;
  double age_years = 0.0;
  int diagnosis = 0;
  std::string path;
};

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

// 8-bit PGM, linear map [-1,1] -> [0,255], round half away from zero.
void write_pgm(const std::string& path, const TensorF& img);

struct Checkpoint {
  std::vector<std::pair<std::string, TensorF>> tensors;
  std::string config_echo;

  const TensorF* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace dani::io
