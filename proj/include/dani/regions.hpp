#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dani/tensor.hpp"

namespace dani::regions {

struct RegionMaskSet {
  std::vector<TensorF> masks;      // R binary M x N masks, values 0.0 / 1.0
  std::uint64_t provenance_hash = 0;  // FNV-1a over the training manifest bytes

  int count() const { return int(masks.size()); }
};

// Agglomerative average-linkage clustering of the per-voxel mean intensity,
// merges restricted to 4-connected cluster pairs, tree cut at R clusters,
// each cluster then dilated to create overlap. Background voxels (mean below
// the 10th percentile) are excluded before clustering. Deterministic: ties
// break on the smallest linear voxel index contained in each cluster.
RegionMaskSet build_region_masks(const std::vector<TensorF>& training_slices,
                                 int R, int dilation = 1);

// Masks persist as one rank-3 tensor (R x M x N) in the slice container.
void save_masks(const std::string& path, const RegionMaskSet& set);
RegionMaskSet load_masks(const std::string& path);

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

}  // namespace dani::regions
