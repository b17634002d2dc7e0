#include <algorithm>
#include <cmath>
#include <map>

#include "t2v/datagen/corpus.hpp"

namespace t2v::data {

BagReport build_positive_bags(std::span<const ShotRecord> shots, std::span<const ClipSpec> clips,
                              std::span<const TranscriptChunk> transcripts, const BagOptions& opts) {
  if (opts.max_texts == 0) throw ConfigError("build_positive_bags: max_texts must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < transcripts.size(); ++i) by_video[transcripts[i].video_id].push_back(i);
  for (const auto& [video, idx] : by_video) {
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (transcripts[idx[k]].start_s < transcripts[idx[k - 1]].start_s) {
        throw ValidationError("build_positive_bags: transcripts of video " + video + " are not time-sorted");
      }
    }
  }

  BagReport report;
  for (std::size_t ci = 0; ci < clips.size(); ++ci) {
    const ClipSpec& clip = clips[ci];
    if (clip.shots.empty()) throw ValidationError("build_positive_bags: clip without shots");
    const double cs = shots[clip.shots.front()].start_s;
    const double ce = shots[clip.shots.back()].end_s;
    auto it = by_video.find(clip.video_id);
    if (it == by_video.end()) {
      ++report.skipped;
      continue;
    }
    const auto& idx = it->second;

    // Own text: maximal overlap with the clip span, ties to the earlier start.
    std::size_t own = idx.size();
    double best = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& t = transcripts[idx[k]];
      const double ov = std::min(ce, t.end_s) - std::max(cs, t.start_s);
      if (ov > best) {
        best = ov;
        own = k;
      }
    }
    if (own == idx.size()) {
      ++report.skipped;
      continue;
    }
    const TranscriptChunk& t = transcripts[idx[own]];
    const double lo = t.start_s - opts.window_s, hi = t.end_s + opts.window_s;
    const double mid = 0.5 * (t.start_s + t.end_s);

    // Neighbors must overlap the widened interval by a strictly positive amount.
    std::vector<std::pair<double, std::size_t>> neighbors;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k == own) continue;
      const auto& n = transcripts[idx[k]];
      if (std::min(hi, n.end_s) - std::max(lo, n.start_s) > 0) {
        neighbors.emplace_back(std::abs(0.5 * (n.start_s + n.end_s) - mid), k);
      }
    }
    std::sort(neighbors.begin(), neighbors.end());

    PositiveBag bag;
    bag.clip = ClipSample{ci, clip.shots, t};
    bag.texts.push_back(t);
    for (const auto& [dist, k] : neighbors) {
      if (bag.texts.size() >= opts.max_texts) break;
      bag.texts.push_back(transcripts[idx[k]]);
    }
    report.bags.push_back(std::move(bag));
  }
  return report;
}

}  // namespace t2v::data
