#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

// Brute-force AOP-k: list every window of both sequences, then for each
// generated window scan the ground-truth list for an unused equal window.
namespace t2v::oracle {

inline double aop_windows(const std::vector<std::uint64_t>& gen, const std::vector<std::uint64_t>& gt,
                          std::size_t k) {
    std::vector<std::vector<std::uint64_t>> gw, tw;
  for (std::size_t i = 0; i + k <= gen.size(); ++i) gw.emplace_back(gen.begin() + i, gen.begin() + i + k);
  for (std::size_t i = 0; i + k <= gt.size(); ++i) tw.emplace_back(gt.begin() + i, gt.begin() + i + k);
  std::vector<bool> used(tw.size(), false);
  double hits = 0;
  for (const auto& w : gw) {
    for (std::size_t j = 0; j < tw.size(); ++j) {
      if (!used[j] && tw[j] == w) {
        used[j] = true;
        hits += 1;
        break;
      }
    }
  }
  const double s = static_cast<double>(gw.size()), u = static_cast<double>(tw.size());
  return hits / s * std::min(1.0, s / u);
}

}  // namespace t2v::oracle
