#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "t2v/crm/crm.hpp"
#include "t2v/datagen/corpus.hpp"
#include "t2v/numkit/tensor.hpp"
#include "t2v/tcm/tcm.hpp"

// Inference over a shot gallery: flat inner-product kNN, beam search with
// coherence re-ranking, greedy search, completion, and the exhaustive oracle.
namespace t2v::engine {

namespace fs = std::filesystem;

struct GalleryIndex {
  std::vector<std::uint64_t> shot_ids;
  std::vector<std::string> video_ids;
  Tensor embeds;    // N×d_e, single-shot encodings
  Tensor raw_vis;   // N×d_v
  Tensor raw_hist;  // N×d_h
  std::string crm_checkpoint_hash;

  std::size_t size() const { return shot_ids.size(); }
  std::size_t dim() const { return embeds.cols(); }
  void validate() const;
  // Rows restricted to `rows`, in that order.
  GalleryIndex subset(std::span<const std::size_t> rows) const;
};

// rows selects which shots enter the gallery (empty: all of them).
GalleryIndex build_index(std::span<const data::ShotRecord> shots, const ParamSet& crm,
                         std::span<const std::size_t> rows = {}, std::string crm_hash = {});

// embeds.t2vf, vis.t2vf, hist.t2vf, manifest.jsonl, index.json.
void save_index(const fs::path& dir, const GalleryIndex& index);
GalleryIndex load_index(const fs::path& dir);

// T2V_THREADS, else hardware concurrency (at least 1).
std::size_t default_threads();

struct Hit {
  std::size_t row = 0;
  std::uint64_t shot_id = 0;
  double score = 0;
};

// Higher score first, then smaller shot id.
bool hit_before(const Hit& a, const Hit& b);

// Shared by the beam search and the oracle.
double inner(std::span<const float> a, std::span<const float> b);

// Exact top-min(k, N) by inner product. `exclude` lists rows to skip. The
// result does not depend on `threads`.
std::vector<Hit> knn(const GalleryIndex& index, std::span<const float> query, std::size_t k,
                     std::span<const std::size_t> exclude = {}, std::size_t threads = 1);

struct SearchConfig {
  std::size_t M = 3;
  std::size_t B1 = 4;
  std::size_t B2 = 2;
  crm::Mode mode = crm::Mode::adaptive;
  bool rerank = true;
  std::size_t threads = 1;

  void validate() const;
};

struct Sequence {
  std::vector<std::size_t> rows;
  std::vector<std::uint64_t> shot_ids;
  double sim = 0;
  double coh = 1;
};

// Coherence desc, similarity desc, then shot ids lexicographically.
bool sequence_before(const Sequence& a, const Sequence& b);
// Similarity desc, then shot ids (the pre-rerank cut).
bool sequence_before_by_sim(const Sequence& a, const Sequence& b);

struct Models {
  const ParamSet* crm = nullptr;
  const ParamSet* tcm = nullptr;  // required when re-ranking
};

// Query at a step: head(σ(mean of prefix embeddings, g)); the prefix is
// ignored in parallel mode. `g` is the encoded text before the head.
Tensor step_query(std::span<const std::size_t> prefix, std::span<const float> g, const ParamSet& crm,
                  const GalleryIndex& index, crm::Mode mode);

// Coherence of each row sequence under the TCM.
std::vector<double> coherence(const GalleryIndex& index, const std::vector<std::vector<std::size_t>>& seqs,
                              const ParamSet& tcm);

// Final B2 sequences, best first.
std::vector<Sequence> beam_sequence(std::span<const std::uint32_t> tokens, const SearchConfig& cfg,
                                    const GalleryIndex& index, const Models& models);

std::vector<std::size_t> greedy_sequence(std::span<const std::uint32_t> tokens, std::size_t M,
                                         const GalleryIndex& index, const ParamSet& crm);

inline constexpr double kBruteForceLimit = 1e6;

// Every length-M sequence of distinct shots, ranked with the beam's ordering.
std::vector<Sequence> brute_force_ranking(std::span<const std::uint32_t> tokens, std::size_t M,
                                          const GalleryIndex& index, const Models& models, crm::Mode mode,
                                          bool rerank);
Sequence brute_force_sequence(std::span<const std::uint32_t> tokens, std::size_t M, const GalleryIndex& index,
                              const Models& models, crm::Mode mode, bool rerank);

struct Completion {
  std::uint64_t shot_id = 0;
  std::size_t row = 0;
  std::vector<Sequence> candidates;  // prefix + candidate, best first
};

Completion complete_sequence(std::span<const std::uint32_t> tokens, std::span<const std::size_t> prefix,
                             const GalleryIndex& index, const Models& models, std::size_t B1, crm::Mode mode,
                             bool rerank = true);

nlohmann::json to_json(const Sequence& s);

}  // namespace t2v::engine
