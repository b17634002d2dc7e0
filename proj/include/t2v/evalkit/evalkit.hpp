#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/crm/crm.hpp"
#include "t2v/datagen/corpus.hpp"
#include "t2v/engine/engine.hpp"
#include "t2v/tcm/tcm.hpp"

namespace t2v::eval {

// Percent of ranks (1-based) that are <= k.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);
// Median; mean of the middle two for an even count.
double median_rank(std::span<const std::size_t> ranks);

struct RankingResult {
  std::vector<std::size_t> ranks;
  std::size_t n_candidates = 0;

  double recall(std::size_t k) const { return recall_at_k(ranks, k); }
  double medr() const { return median_rank(ranks); }
  nlohmann::json to_json(std::span<const std::size_t> ks = std::span<const std::size_t>()) const;
};

// 1-based rank of scores[gt]; ties are placed after the ground truth only if
// they come later in the candidate list.
std::size_t rank_of(std::span<const double> scores, std::size_t gt);

// Per-instance AOP-k: contiguous k-windows of `gen` matched against
// the multiset of k-windows of `gt`, consume-on-match.
double aop_k(std::span<const std::uint64_t> gen, std::span<const std::uint64_t> gt, std::size_t k);

struct AopReport {
  double recall = 0;                 // percent
  std::array<double, 3> aop{};       // percent, k = 1..3
  double aop_s = 0;                  // sum of aop
  std::size_t instances = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const;
};

// Clip retrieval over the given videos: each clip's own text ranks every clip.
RankingResult eval_clip_retrieval(const data::Corpus& corpus, std::span<const std::string> videos,
                                  const ParamSet& crm);

// Beam generation of M shots per clip from its own video's gallery.
AopReport eval_sequence_generation(const data::Corpus& corpus, std::span<const std::string> videos,
                                   const engine::Models& models, const engine::SearchConfig& cfg);

struct CompletionReport {
  double accuracy = 0;  // percent
  std::size_t instances = 0;
  std::size_t skipped = 0;
  double random_baseline = 0;  // percent, mean of 100/candidates

  nlohmann::json to_json() const;
};

// Hide each clip's last shot and recover it from the rest of its video.
CompletionReport eval_sequence_completion(const data::Corpus& corpus, std::span<const std::string> videos,
                                          const engine::Models& models, std::size_t B1, crm::Mode mode,
                                          bool rerank = true);

struct DistortionReport {
  double overall = 0;
  std::vector<double> per_class;
  std::vector<std::size_t> counts;

  nlohmann::json to_json() const;
};

// Balanced labels drawn with the training recipe from the given videos.
DistortionReport eval_distortion_cls(const ParamSet& tcm, std::span<const data::ShotRecord> shots,
                                     std::span<const std::string> videos, std::size_t n_samples, std::uint64_t seed,
                                     std::size_t crop_min = 2, std::size_t crop_max = data::kMaxClipShots);

// Every contiguous M-shot window of the given videos; all M! orders are scored
// by coherence and the true order's rank is recorded. Ties are broken by a
// seeded shuffle.
RankingResult eval_sequence_ranking(const ParamSet& tcm, std::span<const data::ShotRecord> shots,
                                    std::span<const std::string> videos, std::size_t M, std::uint64_t seed);

struct BenchConfig {
  std::vector<std::size_t> sizes{10000, 50000, 100000, 200000, 500000};
  std::size_t M = 4, B1 = 5, B2 = 3;
  std::size_t queries = 20;
  std::uint64_t seed = 7;
};

struct BenchRow {
  std::size_t n = 0;
  double ms_median = 0, ms_p90 = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double slope = 0, intercept = 0, r2 = 0;
  // t(2N)/t(N) for every measured pair with N >= 100k.
  std::vector<std::pair<std::size_t, double>> doubling;

  nlohmann::json to_json() const;
  std::string csv() const;
};

// Synthetic gallery of n shots with dims taken from the models.
engine::GalleryIndex synthetic_gallery(std::size_t n, const ParamSet& crm, const ParamSet& tcm, std::uint64_t seed);

// Query path only (text encoding, kNN, re-ranking), single thread.
BenchReport bench_runtime(const BenchConfig& cfg, const ParamSet& crm, const ParamSet& tcm,
                          const std::function<void(const BenchRow&)>& progress = {});

// Ordinary least squares y ~ a + b·x; returns (a, b, r²).
std::array<double, 3> linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace t2v::eval
