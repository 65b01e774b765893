#include "dani/regions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "dani/error.hpp"
#include "dani/io.hpp"

namespace dani::regions {

namespace {

using Pair = std::pair<int, int>;  // cluster ids, first < second

Pair ordered(int a, int b) { return a < b ? Pair{a, b} : Pair{b, a}; }

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

RegionMaskSet build_region_masks(const std::vector<TensorF>& training_slices,
                                 int R, int dilation) {
  if (R < 2) throw DataError("build_region_masks: R must be >= 2");
  if (training_slices.empty())
    throw DataError("build_region_masks: no training slices");
  const int rows = training_slices[0].dims[0];
  const int cols = training_slices[0].dims[1];
  const std::size_t n = std::size_t(rows) * cols;
  for (const auto& s : training_slices)
    if (!s.same_shape(training_slices[0]))
      throw DataError("build_region_masks: slice shapes differ");

  // per-voxel mean intensity across the training set
  std::vector<double> feat(n, 0.0);
  for (const auto& s : training_slices)
    for (std::size_t i = 0; i < n; ++i) feat[i] += s[i];
  for (auto& f : feat) f /= double(training_slices.size());

  // background cut at the 10th percentile of the mean intensity
  std::vector<double> sorted = feat;
  std::sort(sorted.begin(), sorted.end());
  const double thr = sorted[std::size_t(0.10 * double(n - 1))];

  std::vector<int> cluster_of(n, -1);  // -1 = background
  int n_fg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (feat[i] > thr) {
      cluster_of[i] = int(i);  // cluster id = smallest contained voxel index
      ++n_fg;
    }
  }
  if (n_fg < R)
    throw DataError("build_region_masks: R exceeds number of foreground voxels");

  struct Cluster {
    int size = 0;
    double feat_sum = 0.0;
    bool active = false;
  };
  std::vector<Cluster> clusters(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster_of[i] >= 0) {
      clusters[i] = {1, feat[i], true};
    }
  }

  // distances for 4-adjacent cluster pairs; queue keyed (distance, id, id)
  std::map<Pair, double> dist;
  std::set<std::tuple<double, int, int>> queue;
  auto push = [&](int a, int b, double d) {
    const Pair p = ordered(a, b);
    auto it = dist.find(p);
    if (it != dist.end()) queue.erase({it->second, p.first, p.second});
    dist[p] = d;
    queue.insert({d, p.first, p.second});
  };
  auto drop = [&](int a, int b) {
    const Pair p = ordered(a, b);
    auto it = dist.find(p);
    if (it != dist.end()) {
      queue.erase({it->second, p.first, p.second});
      dist.erase(it);
    }
  };

  std::vector<std::set<int>> neighbors(n);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const int i = y * cols + x;
      if (cluster_of[i] < 0) continue;
      const int right = (x + 1 < cols) ? i + 1 : -1;
      const int down = (y + 1 < rows) ? i + cols : -1;
      for (int j : {right, down}) {
        if (j >= 0 && cluster_of[j] >= 0) {
          neighbors[i].insert(j);
          neighbors[j].insert(i);
          push(i, j, std::abs(feat[i] - feat[j]));
        }
      }
    }
  }

  int n_active = n_fg;
  // union-find over voxels to track membership
  std::vector<int> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = int(i);
  std::function<int(int)> find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };

  auto merge = [&](int a, int b) {
    int keep = std::min(a, b), gone = std::max(a, b);
    const int sk = clusters[keep].size, sg = clusters[gone].size;
    drop(a, b);
    // Lance-Williams average linkage; a neighbor adjacent to only one child
    // keeps that child's distance.
    std::set<int> merged_nb = neighbors[keep];
    merged_nb.insert(neighbors[gone].begin(), neighbors[gone].end());
    merged_nb.erase(keep);
    merged_nb.erase(gone);
    for (int nb : merged_nb) {
      const auto it_k = dist.find(ordered(keep, nb));
      const auto it_g = dist.find(ordered(gone, nb));
      double d;
      if (it_k != dist.end() && it_g != dist.end())
        d = (sk * it_k->second + sg * it_g->second) / double(sk + sg);
      else if (it_k != dist.end())
        d = it_k->second;
      else
        d = it_g->second;
      drop(keep, nb);
      drop(gone, nb);
      neighbors[nb].erase(gone);
      neighbors[nb].insert(keep);
      push(keep, nb, d);
    }
    neighbors[keep] = std::move(merged_nb);
    neighbors[gone].clear();
    clusters[keep].size = sk + sg;
    clusters[keep].feat_sum += clusters[gone].feat_sum;
    clusters[gone].active = false;
    parent[find(gone)] = find(keep);
    --n_active;
  };

  while (n_active > R) {
    if (!queue.empty()) {
      auto [d, a, b] = *queue.begin();
      merge(a, b);
      continue;
    }
    // disconnected foreground with more components than R: merge the two
    // components with the closest mean intensity, ids as tie-break
    int best_a = -1, best_b = -1;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<int> active_ids;
    for (std::size_t i = 0; i < n; ++i)
      if (clusters[i].active) active_ids.push_back(int(i));
    for (std::size_t u = 0; u < active_ids.size(); ++u) {
      for (std::size_t w = u + 1; w < active_ids.size(); ++w) {
        const int a = active_ids[u], b = active_ids[w];
        const double d = std::abs(clusters[a].feat_sum / clusters[a].size -
                                  clusters[b].feat_sum / clusters[b].size);
        if (d < best_d) {
          best_d = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    push(best_a, best_b, best_d);
  }

  // assemble masks ordered by cluster id (= smallest voxel index)
  std::vector<int> ids;
  for (std::size_t i = 0; i < n; ++i)
    if (clusters[i].active) ids.push_back(int(i));

  RegionMaskSet set;
  for (int id : ids) {
    TensorF mask({rows, cols});
    for (std::size_t i = 0; i < n; ++i)
      if (cluster_of[i] >= 0 && find(int(i)) == find(id)) mask[i] = 1.0f;
    set.masks.push_back(std::move(mask));
  }

  for (int pass = 0; pass < dilation; ++pass) {
    for (auto& mask : set.masks) {
      TensorF src = mask;
      for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
          if (src[std::size_t(y) * cols + x] == 0.0f) continue;
          if (y > 0) mask[std::size_t(y - 1) * cols + x] = 1.0f;
          if (y + 1 < rows) mask[std::size_t(y + 1) * cols + x] = 1.0f;
          if (x > 0) mask[std::size_t(y) * cols + x - 1] = 1.0f;
          if (x + 1 < cols) mask[std::size_t(y) * cols + x + 1] = 1.0f;
        }
      }
    }
  }
  return set;
}

void save_masks(const std::string& path, const RegionMaskSet& set) {
  if (set.masks.empty()) throw DataError("save_masks: empty mask set");
  const int rows = set.masks[0].dims[0], cols = set.masks[0].dims[1];
  TensorF stack({int(set.masks.size()), rows, cols});
  std::size_t off = 0;
  for (const auto& m : set.masks) {
    std::copy(m.v.begin(), m.v.end(), stack.v.begin() + off);
    off += m.count();
  }
  io::write_tensor(path, stack);
}

RegionMaskSet load_masks(const std::string& path) {
  TensorF stack = io::read_tensor(path);
  if (stack.rank != 3) throw DataError(path + ": mask stack must be rank 3");
  RegionMaskSet set;
  const std::size_t plane = std::size_t(stack.dims[1]) * stack.dims[2];
  for (int r = 0; r < stack.dims[0]; ++r) {
    TensorF m({stack.dims[1], stack.dims[2]});
    std::copy(stack.v.begin() + r * plane, stack.v.begin() + (r + 1) * plane,
              m.v.begin());
    for (float v : m.v)
      if (v != 0.0f && v != 1.0f) throw DataError(path + ": non-binary mask value");
    set.masks.push_back(std::move(m));
  }
  return set;
}

}  // namespace dani::regions
