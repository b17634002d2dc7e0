#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "t2v/numkit/tensor.hpp"

namespace t2v::data {

inline constexpr std::size_t kMaxClipShots = 10;
inline constexpr std::size_t kMaxTextLen = 16;

// Stable hash of the lowercased word, modulo the vocabulary size.
std::uint32_t token_id(std::string_view word, std::uint32_t vocab_size);
std::vector<std::uint32_t> tokenize(std::string_view text, std::uint32_t vocab_size);

struct ShotRecord {
  std::uint64_t shot_id = 0;
  std::string video_id;
  double start_s = 0;
  double end_s = 0;
  std::vector<float> feature;    // d_v
  std::vector<float> histogram;  // d_h: three channel blocks, each summing to 1
};

struct TranscriptChunk {
  std::string video_id;
  double start_s = 0;
  double end_s = 0;
  std::string text;
  std::vector<std::uint32_t> tokens;
};

struct Word {
  std::string text;
  double start_s = 0;
  double end_s = 0;
};

struct MergeOptions {
  double gap_s = 1.0;
  std::size_t max_len = kMaxTextLen;
  std::uint32_t vocab_size = 4096;
};

// Joins consecutive words whose gap is below gap_s and splits every max_len
// words. Input must be sorted by start time.
std::vector<TranscriptChunk> merge_words(std::span<const Word> words, const MergeOptions& opts = {},
                                         std::string_view video_id = {});

// Ground-truth clip segmentation: contiguous shots of one video.
struct ClipSpec {
  std::uint64_t clip_id = 0;
  std::string video_id;
  std::vector<std::size_t> shots;  // indices into Corpus::shots, time-ordered
};

struct ClipSample {
  std::size_t clip_index = 0;      // into Corpus::clips
  std::vector<std::size_t> shots;  // indices into Corpus::shots
  TranscriptChunk text;
};

struct PositiveBag {
  ClipSample clip;
  std::vector<TranscriptChunk> texts;  // texts[0] is the clip's own text
};

struct PlantedCorpusConfig {
  std::size_t n_concepts = 64;
  std::size_t d_v = 32;
  std::size_t d_h = 24;
  std::size_t n_videos = 125;
  std::size_t shots_per_video = 40;
  double style_drift = 0.06;
  double misalign_prob = 0.3;
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;
  std::uint32_t vocab_size = 4096;
  std::size_t clip_len_min = 2;
  std::size_t clip_len_max = 6;
  // 0: every shot draws its own concept. n > 0: each clip is n contiguous
  // runs, one concept per run.
  std::size_t concepts_per_clip = 0;

  void validate() const;
};

struct GroundTruth {
  std::vector<std::uint32_t> shot_concept;    // per shot
  std::vector<std::size_t> clip_text_source;  // per clip: the clip its text describes
};

struct Corpus {
  PlantedCorpusConfig config;
  std::vector<ShotRecord> shots;
  std::vector<TranscriptChunk> transcripts;  // grouped by video, time-sorted
  std::vector<ClipSpec> clips;
  GroundTruth truth;

  std::vector<std::string> video_ids() const;
  std::vector<std::size_t> shots_of_video(std::string_view video_id) const;
  std::size_t d_v() const { return shots.empty() ? config.d_v : shots.front().feature.size(); }
  std::size_t d_h() const { return shots.empty() ? config.d_h : shots.front().histogram.size(); }
};

Corpus generate_corpus(const PlantedCorpusConfig& cfg);

struct Split {
  std::vector<std::string> train, val, test;
};

// 6:1:3 split over videos, seeded.
Split split_videos(const Corpus& corpus, std::uint64_t seed);

// The chunk with maximal temporal overlap with the clip span (ties: earlier
// start). Returns false if no chunk overlaps.
bool own_text(const Corpus& corpus, const ClipSpec& clip, TranscriptChunk& out);

// Clip samples for every clip of the given videos that has an aligned text.
std::vector<ClipSample> clip_samples(const Corpus& corpus, std::span<const std::string> videos);

struct BagOptions {
  std::size_t max_texts = 3;
  double window_s = 3.0;
};

struct BagReport {
  std::vector<PositiveBag> bags;
  std::size_t skipped = 0;  // clips with no aligned text
};

BagReport build_positive_bags(std::span<const ShotRecord> shots, std::span<const ClipSpec> clips,
                              std::span<const TranscriptChunk> transcripts, const BagOptions& opts = {});

// Rows of every shot's feature (or histogram) stacked as an N×d tensor.
Tensor feature_matrix(std::span<const ShotRecord> shots, std::span<const std::size_t> rows);
Tensor histogram_matrix(std::span<const ShotRecord> shots, std::span<const std::size_t> rows);

}  // namespace t2v::data
