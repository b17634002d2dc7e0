#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "t2v/engine/engine.hpp"

// Score every row, sort the whole gallery, take the head.
namespace t2v::oracle {

struct NaiveHit {
  std::size_t row;
  std::uint64_t id;
  double score;
};

inline std::vector<NaiveHit> naive_knn(const engine::GalleryIndex& index, const std::vector<float>& q,
                                       std::size_t k, const std::vector<std::size_t>& exclude = {}) {
  std::vector<NaiveHit> all;
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (std::find(exclude.begin(), exclude.end(), r) != exclude.end()) continue;
    double s = 0;
    for (std::size_t c = 0; c < q.size(); ++c) s += static_cast<double>(index.embeds(r, c)) * q[c];
    all.push_back({r, index.shot_ids[r], s});
  }
  std::sort(all.begin(), all.end(), [](const NaiveHit& a, const NaiveHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

}  // namespace t2v::oracle
