#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "t2v/datagen/corpus.hpp"
#include "t2v/numkit/rng.hpp"

namespace t2v::data {
namespace {

constexpr std::size_t kBurnInSteps = 12;
constexpr double kMomentum = 0.8;
// Pull toward the origin keeps |style| near style_drift / kReversion.
constexpr double kReversion = 0.3;
constexpr double kWordDur = 0.25;
constexpr double kMaxWordSpacing = 1.2;
constexpr std::array<double, 3> kChannelBase{0.3, 0.5, 0.7};
constexpr std::array<double, 3> kChannelWidth{0.10, 0.14, 0.18};
// Style moves each channel centre by at most kHistAmp, which keeps the three
// channels' ranges apart.
constexpr double kHistGain = 6.0;
constexpr double kHistAmp = 0.12;

double q32(double x) { return static_cast<double>(static_cast<float>(x)); }

std::vector<double> gaussian(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

void normalize(std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (auto& x : v) x /= n;
  }
}

// Mean-reverting momentum walk of the per-video style vector.
class StyleWalk {
 public:
  StyleWalk(Rng& rng, std::size_t d, double step) : rng_(rng), pos_(d, 0.0), dir_(gaussian(rng, d)), step_(step) {
    normalize(dir_);
    for (std::size_t i = 0; i < kBurnInSteps; ++i) advance();
  }

  void advance() {
    auto noise = gaussian(rng_, pos_.size());
    normalize(noise);
    for (std::size_t i = 0; i < pos_.size(); ++i) dir_[i] = kMomentum * dir_[i] + (1.0 - kMomentum) * noise[i];
    normalize(dir_);
    for (std::size_t i = 0; i < pos_.size(); ++i) pos_[i] = (1.0 - kReversion) * pos_[i] + step_ * dir_[i];
  }

  const std::vector<double>& position() const { return pos_; }

 private:
  Rng& rng_;
  std::vector<double> pos_;
  std::vector<double> dir_;
  double step_;
};

std::vector<float> color_profile(const std::vector<double>& style, const std::vector<std::vector<double>>& proj,
                                 std::size_t d_h) {
  const std::size_t bins = d_h / 3;
  std::vector<float> hist(d_h);
  for (std::size_t c = 0; c < 3; ++c) {
    double a = 0;
    for (std::size_t i = 0; i < style.size(); ++i) a += proj[c][i] * style[i];
    const double mu = kChannelBase[c] + kHistAmp * std::tanh(kHistGain * a);
    const double w = kChannelWidth[c];
    std::vector<double> block(bins);
    double z = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double x = (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
      block[b] = std::exp(-(x - mu) * (x - mu) / (2 * w * w)) + 0.01;
      z += block[b];
    }
    for (std::size_t b = 0; b < bins; ++b) hist[c * bins + b] = static_cast<float>(block[b] / z);
  }
  return hist;
}

std::string concept_word(std::uint32_t c) { return "w" + std::to_string(c); }

}  // namespace

void PlantedCorpusConfig::validate() const {
  if (n_concepts == 0 || d_v == 0 || d_h == 0 || n_videos == 0 || shots_per_video == 0 || vocab_size == 0) {
    throw ConfigError("planted corpus: all counts must be >= 1");
  }
  if (d_h % 3 != 0) throw ConfigError("planted corpus: d_h must be divisible by 3");
  if (misalign_prob < 0 || misalign_prob > 1) throw ConfigError("planted corpus: misalign_prob must be in [0,1]");
  if (style_drift < 0 || noise_sigma < 0) throw ConfigError("planted corpus: style_drift and noise_sigma must be >= 0");
  if (clip_len_min == 0 || clip_len_min > clip_len_max || clip_len_max > kMaxClipShots) {
    throw ConfigError("planted corpus: need 1 <= clip_len_min <= clip_len_max <= 10");
  }
  if (concepts_per_clip > clip_len_min) {
    throw ConfigError("planted corpus: concepts_per_clip cannot exceed clip_len_min");
  }
}

std::vector<std::string> Corpus::video_ids() const {
  std::vector<std::string> out;
  for (const auto& s : shots) {
    if (out.empty() || out.back() != s.video_id) out.push_back(s.video_id);
  }
  return out;
}

std::vector<std::size_t> Corpus::shots_of_video(std::string_view video_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    if (shots[i].video_id == video_id) out.push_back(i);
  }
  return out;
}

Corpus generate_corpus(const PlantedCorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;

  Rng global = Rng::derive(cfg.seed, 0);
  std::vector<std::vector<double>> centers(cfg.n_concepts);
  for (auto& c : centers) {
    c = gaussian(global, cfg.d_v);
    normalize(c);
  }
  std::vector<std::vector<double>> proj(3);
  for (auto& p : proj) p = gaussian(global, cfg.d_v);

  for (std::size_t v = 0; v < cfg.n_videos; ++v) {
    Rng rng = Rng::derive(cfg.seed, 1000 + v);
    char vid[32];
    std::snprintf(vid, sizeof vid, "v%05zu", v);
    const std::string video_id = vid;
    StyleWalk style(rng, cfg.d_v, cfg.style_drift);

    // Clip segmentation and concepts.
    const std::size_t first_clip = corpus.clips.size();
    const std::size_t first_shot = corpus.shots.size();
    std::vector<std::uint32_t> concepts;
    for (std::size_t pos = 0; pos < cfg.shots_per_video;) {
      std::size_t len = static_cast<std::size_t>(
          rng.range(static_cast<std::int64_t>(cfg.clip_len_min), static_cast<std::int64_t>(cfg.clip_len_max)));
      len = std::min(len, cfg.shots_per_video - pos);
      ClipSpec clip{corpus.clips.size(), video_id, {}};
      const std::size_t runs = std::min(cfg.concepts_per_clip, len);
      std::vector<std::uint32_t> run_concepts;
      if (runs > 0) {
        for (std::size_t i : rng.choose(cfg.n_concepts, runs)) run_concepts.push_back(static_cast<std::uint32_t>(i));
        rng.shuffle(run_concepts);
      }
      for (std::size_t k = 0; k < len; ++k) {
        clip.shots.push_back(first_shot + pos + k);
        if (runs > 0) {
          concepts.push_back(run_concepts[k * runs / len]);
        } else {
          concepts.push_back(static_cast<std::uint32_t>(rng.below(cfg.n_concepts)));
        }
      }
      corpus.clips.push_back(std::move(clip));
      pos += len;
    }

    // Shots.
    double t = 0;
    for (std::size_t k = 0; k < cfg.shots_per_video; ++k) {
      style.advance();
      const auto& s = style.position();
      std::vector<double> f(cfg.d_v);
      for (std::size_t i = 0; i < cfg.d_v; ++i) {
        f[i] = centers[concepts[k]][i] + s[i] + cfg.noise_sigma * rng.normal();
      }
      normalize(f);
      ShotRecord shot;
      shot.shot_id = corpus.shots.size();
      shot.video_id = video_id;
      shot.start_s = q32(t);
      t += rng.uniform(0.8, 1.8);
      shot.end_s = q32(t);
      shot.feature.assign(f.begin(), f.end());
      shot.histogram = color_profile(s, proj, cfg.d_h);
      corpus.shots.push_back(std::move(shot));
      corpus.truth.shot_concept.push_back(concepts[k]);
    }

    // Transcript words: each clip's text is placed inside its own span but may
    // describe a neighboring clip.
    std::vector<Word> words;
    const std::size_t n_clips = corpus.clips.size() - first_clip;
    for (std::size_t c = 0; c < n_clips; ++c) {
      std::size_t source = c;
      if (n_clips > 1 && rng.uniform() < cfg.misalign_prob) {
        if (c == 0) {
          source = 1;
        } else if (c + 1 == n_clips) {
          source = c - 1;
        } else {
          source = rng.uniform() < 0.5 ? c - 1 : c + 1;
        }
      }
      corpus.truth.clip_text_source.push_back(first_clip + source);
      const ClipSpec& clip = corpus.clips[first_clip + c];
      const ClipSpec& src = corpus.clips[first_clip + source];
      const double start = corpus.shots[clip.shots.front()].start_s;
      const double dur = corpus.shots[clip.shots.back()].end_s - start;
      const std::size_t n = src.shots.size();
      const double spacing =
          n > 1 ? std::clamp((dur - 1.1 - kWordDur) / static_cast<double>(n - 1), 0.0, kMaxWordSpacing) : 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double ws = q32(start + 0.1 + static_cast<double>(j) * spacing);
        words.push_back(Word{concept_word(corpus.truth.shot_concept[src.shots[j]]), ws, q32(ws + kWordDur)});
      }
    }
    auto chunks = merge_words(words, MergeOptions{1.0, kMaxTextLen, cfg.vocab_size}, video_id);
    corpus.transcripts.insert(corpus.transcripts.end(), chunks.begin(), chunks.end());
  }
  return corpus;
}

Split split_videos(const Corpus& corpus, std::uint64_t seed) {
  auto videos = corpus.video_ids();
  Rng rng = Rng::derive(seed, 7);
  rng.shuffle(videos);
  const std::size_t n = videos.size();
  std::size_t n_train = n * 6 / 10, n_val = n / 10;
  if (n >= 2 && n_train + n_val >= n) {
    n_train = n - 1;
    n_val = 0;
  }
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    dst.push_back(videos[i]);
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

bool own_text(const Corpus& corpus, const ClipSpec& clip, TranscriptChunk& out) {
  const double cs = corpus.shots[clip.shots.front()].start_s;
  const double ce = corpus.shots[clip.shots.back()].end_s;
  const TranscriptChunk* best = nullptr;
  double best_overlap = 0;
  for (const auto& t : corpus.transcripts) {
    if (t.video_id != clip.video_id) continue;
    const double ov = std::min(ce, t.end_s) - std::max(cs, t.start_s);
    if (ov > best_overlap) {
      best_overlap = ov;
      best = &t;
    }
  }
  if (best == nullptr) return false;
  out = *best;
  return true;
}

std::vector<ClipSample> clip_samples(const Corpus& corpus, std::span<const std::string> videos) {
  std::vector<ClipSample> out;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& clip = corpus.clips[i];
    if (std::find(videos.begin(), videos.end(), clip.video_id) == videos.end()) continue;
    ClipSample s{i, clip.shots, {}};
    if (own_text(corpus, clip, s.text)) out.push_back(std::move(s));
  }
  return out;
}

Tensor feature_matrix(std::span<const ShotRecord> shots, std::span<const std::size_t> rows) {
  const std::size_t d = rows.empty() ? 0 : shots[rows.front()].feature.size();
  Tensor m(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = shots[rows[i]].feature;
    if (f.size() != d) throw ValidationError("feature_matrix: non-uniform feature dimension");
    std::copy(f.begin(), f.end(), m.data.begin() + i * d);
  }
  return m;
}

Tensor histogram_matrix(std::span<const ShotRecord> shots, std::span<const std::size_t> rows) {
  const std::size_t d = rows.empty() ? 0 : shots[rows.front()].histogram.size();
  Tensor m(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& h = shots[rows[i]].histogram;
    if (h.size() != d) throw ValidationError("histogram_matrix: non-uniform histogram dimension");
    std::copy(h.begin(), h.end(), m.data.begin() + i * d);
  }
  return m;
}

}  // namespace t2v::data
