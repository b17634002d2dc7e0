#include <algorithm>
#include <cmath>
#include <map>

#include "t2v/tcm/tcm.hpp"

namespace t2v::tcm {

const char* to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::unchanged: return "unchanged";
    case DistortionKind::shot_replacement: return "replacement";
    case DistortionKind::color_jitter: return "jitter";
  }
  return "?";
}

DistortionKind parse_distortion(std::string_view s) {
  if (s == "unchanged") return DistortionKind::unchanged;
  if (s == "replacement") return DistortionKind::shot_replacement;
  if (s == "jitter") return DistortionKind::color_jitter;
  throw ConfigError("unknown distortion '" + std::string(s) + "' (expected replacement|jitter)");
}

SequenceSample make_sample(std::span<const data::ShotRecord> shots, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ValidationError("make_sample: empty sequence");
  SequenceSample s;
  s.vis = data::feature_matrix(shots, rows);
  s.hist = data::histogram_matrix(shots, rows);
  s.video_id = shots[rows.front()].video_id;
  return s;
}

DistortionKind sample_distortion(Rng& rng, std::span<const double> probs) {
  if (probs.size() < 2 || probs.size() > 3) throw ConfigError("sample_distortion: expected 2 or 3 probabilities");
  double total = 0;
  for (double p : probs) {
    if (!(p >= 0.0) || p > 1.0) throw ConfigError("sample_distortion: probability outside [0,1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("sample_distortion: probabilities must sum to 1");
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<DistortionKind>(i);
  }
  // u landed in the rounding slack above the cumulative sum.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0) return static_cast<DistortionKind>(i);
  }
  return DistortionKind::unchanged;
}

namespace {

void check_k(std::size_t k, std::size_t len) {
  if (k < 1 || k > k_max(len)) {
    throw ValidationError("distortion k=" + std::to_string(k) + " outside [1, " + std::to_string(k_max(len)) +
                          "] for a sequence of " + std::to_string(len) + " shots");
  }
}

}  // namespace

SequenceSample apply_shot_replacement(const SequenceSample& s, std::span<const data::ShotRecord> donors,
                                      std::size_t k, Rng& rng, std::vector<std::size_t>* positions) {
  const std::size_t len = s.length();
  check_k(k, len);
  if (donors.empty()) throw ValidationError("apply_shot_replacement: empty donor pool");

  // Rejection first; the fallback scan only matters for pools dominated by
  // the sample's own video.
  auto pick = [&]() -> const data::ShotRecord& {
    for (int tries = 0; tries < 64; ++tries) {
      const auto& d = donors[rng.below(donors.size())];
      if (d.video_id != s.video_id) return d;
    }
    std::vector<std::size_t> other;
    for (std::size_t i = 0; i < donors.size(); ++i) {
      if (donors[i].video_id != s.video_id) other.push_back(i);
    }
    if (other.empty()) throw ValidationError("apply_shot_replacement: no donor from another video");
    return donors[other[rng.below(other.size())]];
  };

  SequenceSample out = s;
  out.label = DistortionKind::shot_replacement;
  const std::size_t dv = s.vis.cols(), dh = s.hist.cols();
  const auto pos = rng.choose(len, k);
  for (std::size_t p : pos) {
    const auto& d = pick();
    if (d.feature.size() != dv || d.histogram.size() != dh) {
      throw ValidationError("apply_shot_replacement: donor dimensions differ from the sample");
    }
    std::copy(d.feature.begin(), d.feature.end(), out.vis.data.begin() + static_cast<std::ptrdiff_t>(p * dv));
    std::copy(d.histogram.begin(), d.histogram.end(), out.hist.data.begin() + static_cast<std::ptrdiff_t>(p * dh));
  }
  if (positions) *positions = pos;
  return out;
}

const std::array<std::array<int, 3>, 5>& channel_permutations() {
  static const std::array<std::array<int, 3>, 5> perms{{{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  return perms;
}

std::vector<double> stretch_block(std::span<const float> block, double scale) {
  const std::size_t nb = block.size();
  std::vector<double> out(nb);
  if (nb == 1) {
    out[0] = 1.0;
    return out;
  }
  const double c = 0.5 * static_cast<double>(nb - 1);
  const double last = static_cast<double>(nb - 1);
  double total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    double src = c + (static_cast<double>(b) - c) / scale;
    // Reflect into [0, nb-1].
    while (src < 0 || src > last) {
      if (src < 0) src = -src;
      if (src > last) src = 2 * last - src;
    }
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, nb - 1);
    const double w = src - static_cast<double>(lo);
    out[b] = (1 - w) * block[lo] + w * block[hi];
    total += out[b];
  }
  if (total <= 0) throw NumericError("stretch_block: histogram block has no mass");
  for (double& x : out) x /= total;
  return out;
}

SequenceSample apply_color_jitter(const SequenceSample& s, std::size_t k, Rng& rng, std::vector<std::size_t>* positions,
                                  int* permutation) {
  const std::size_t len = s.length();
  check_k(k, len);
  const std::size_t dh = s.hist.cols();
  if (dh % 3 != 0) throw ValidationError("apply_color_jitter: histogram size " + std::to_string(dh) + " not divisible by 3");
  const std::size_t nb = dh / 3;

  SequenceSample out = s;
  out.label = DistortionKind::color_jitter;
  const auto pos = rng.choose(len, k);
  int last_perm = -1;
  for (std::size_t p : pos) {
    const int pi = static_cast<int>(rng.below(5));
    last_perm = pi;
    const auto& perm = channel_permutations()[static_cast<std::size_t>(pi)];
    const float* src = s.hist.data.data() + p * dh;
    float* dst = out.hist.data.data() + p * dh;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double scale = rng.uniform(kStretchMin, kStretchMax);
      auto block = std::span<const float>(src + static_cast<std::size_t>(perm[ch]) * nb, nb);
      const auto stretched = stretch_block(block, scale);
      for (std::size_t b = 0; b < nb; ++b) dst[ch * nb + b] = static_cast<float>(stretched[b]);
    }
  }
  if (positions) *positions = pos;
  if (permutation) *permutation = last_perm;
  return out;
}

SampleSource::SampleSource(std::span<const data::ShotRecord> shots, std::span<const std::string> videos,
                           std::size_t n_classes, std::size_t crop_min, std::size_t crop_max)
    : n_classes_(n_classes), crop_min_(crop_min), crop_max_(crop_max) {
  if (n_classes < 2 || n_classes > 3) throw ConfigError("SampleSource: n_classes must be 2 or 3");
  if (crop_min < 2 || crop_max < crop_min) throw ConfigError("SampleSource: need 2 <= crop_min <= crop_max");
  std::map<std::string, std::size_t> slot;
  for (const auto& v : videos) slot.emplace(v, slot.size());
  std::vector<std::vector<std::size_t>> rows(slot.size());
  for (const auto& s : shots) {
    auto it = slot.find(s.video_id);
    if (it == slot.end()) continue;
    rows[it->second].push_back(pool_.size());
    pool_.push_back(s);
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return pool_[a].start_s < pool_[b].start_s; });
    if (r.size() >= crop_min_) videos_.push_back(std::move(r));
  }
  if (videos_.empty()) throw ValidationError("SampleSource: no video has at least " + std::to_string(crop_min) + " shots");
  if (videos_.size() < 2) throw ValidationError("SampleSource: replacement needs donors from a second video");
}

SequenceSample SampleSource::draw(Rng& rng) const {
  const auto label = static_cast<DistortionKind>(rng.below(n_classes_));
  return draw(rng, label);
}

SequenceSample SampleSource::draw(Rng& rng, DistortionKind label) const {
  const auto& rows = videos_[rng.below(videos_.size())];
  const std::size_t hi = std::min(crop_max_, rows.size());
  const auto len = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(crop_min_), static_cast<std::int64_t>(hi)));
  const std::size_t start = rng.below(rows.size() - len + 1);
  SequenceSample s = make_sample(pool_, std::span<const std::size_t>(rows).subspan(start, len));
  if (label == DistortionKind::unchanged) return s;
  const auto k = static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(k_max(len))));
  if (label == DistortionKind::shot_replacement) return apply_shot_replacement(s, pool_, k, rng);
  return apply_color_jitter(s, k, rng);
}

}  // namespace t2v::tcm
