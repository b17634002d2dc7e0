#include <algorithm>
#include <map>
#include <numeric>

#include "t2v/evalkit/evalkit.hpp"

namespace t2v::eval {

namespace {

// Gallery rows of one video and the corpus-index → row map.
struct VideoGallery {
  engine::GalleryIndex index;
  std::map<std::size_t, std::size_t> row_of;
};

VideoGallery video_gallery(const data::Corpus& corpus, const std::string& video, const ParamSet& crm) {
  VideoGallery vg;
  const auto rows = corpus.shots_of_video(video);
  vg.index = engine::build_index(corpus.shots, crm, rows);
  for (std::size_t i = 0; i < rows.size(); ++i) vg.row_of[rows[i]] = i;
  return vg;
}

std::map<std::string, std::vector<std::size_t>> rows_by_video(std::span<const data::ShotRecord> shots,
                                                              std::span<const std::string> videos) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& v : videos) out[v];
  for (std::size_t i = 0; i < shots.size(); ++i) {
    auto it = out.find(shots[i].video_id);
    if (it != out.end()) it->second.push_back(i);
  }
  for (auto& [v, rows] : out) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t a, std::size_t b) { return shots[a].start_s < shots[b].start_s; });
  }
  return out;
}

}  // namespace

RankingResult eval_clip_retrieval(const data::Corpus& corpus, std::span<const std::string> videos,
                                  const ParamSet& crm) {
  const auto samples = data::clip_samples(corpus, videos);
  if (samples.empty()) throw ValidationError("eval_clip_retrieval: no clip with an aligned text");
  const std::size_t n = samples.size();
  const std::size_t d_e = crm.at("shot.b2").size();

  std::vector<std::size_t> rows, offsets{0};
  for (const auto& s : samples) {
    rows.insert(rows.end(), s.shots.begin(), s.shots.end());
    offsets.push_back(rows.size());
  }
  Graph<float> g;
  Var clips = crm::encode_shots(g, crm, g.input(data::feature_matrix(corpus.shots, rows)), offsets);
  const auto& C = g.value(clips);

  RankingResult res;
  res.n_candidates = n;
  std::vector<double> scores(n);
  for (std::size_t q = 0; q < n; ++q) {
    const Tensor qf = crm::query_feature<float>(samples[q].text.tokens, {}, crm);
    for (std::size_t c = 0; c < n; ++c) {
      scores[c] = engine::inner(qf.data, std::span<const float>(C).subspan(c * d_e, d_e));
    }
    res.ranks.push_back(rank_of(scores, q));
  }
  return res;
}

AopReport eval_sequence_generation(const data::Corpus& corpus, std::span<const std::string> videos,
                                   const engine::Models& models, const engine::SearchConfig& cfg) {
  cfg.validate();
  AopReport rep;
  std::array<double, 3> sums{};
  double recall_sum = 0;
  for (const auto& video : videos) {
    const std::string one[] = {video};
    const auto samples = data::clip_samples(corpus, one);
    if (samples.empty()) continue;
    const VideoGallery vg = video_gallery(corpus, video, *models.crm);
    for (const auto& s : samples) {
      if (s.shots.size() < cfg.M || vg.index.size() < cfg.M) {
        ++rep.skipped;
        continue;
      }
      const auto result = engine::beam_sequence(s.text.tokens, cfg, vg.index, models);
      const auto& gen = result.front().shot_ids;
      std::vector<std::uint64_t> gt;
      for (std::size_t r : s.shots) gt.push_back(corpus.shots[r].shot_id);
      std::size_t found = 0;
      for (auto id : gt) found += std::find(gen.begin(), gen.end(), id) != gen.end();
      recall_sum += static_cast<double>(found) / static_cast<double>(gt.size());
      for (std::size_t k = 1; k <= 3; ++k) {
        if (k <= gen.size() && k <= gt.size()) sums[k - 1] += aop_k(gen, gt, k);
      }
      ++rep.instances;
    }
  }
  if (rep.instances == 0) throw ValidationError("eval_sequence_generation: no clip with at least M shots");
  const double n = static_cast<double>(rep.instances);
  rep.recall = 100.0 * recall_sum / n;
  for (std::size_t k = 0; k < 3; ++k) {
    rep.aop[k] = 100.0 * sums[k] / n;
    rep.aop_s += rep.aop[k];
  }
  return rep;
}

CompletionReport eval_sequence_completion(const data::Corpus& corpus, std::span<const std::string> videos,
                                          const engine::Models& models, std::size_t B1, crm::Mode mode,
                                          bool rerank) {
  CompletionReport rep;
  std::size_t correct = 0;
  double base = 0;
  for (const auto& video : videos) {
    const std::string one[] = {video};
    const auto samples = data::clip_samples(corpus, one);
    if (samples.empty()) continue;
    const VideoGallery vg = video_gallery(corpus, video, *models.crm);
    for (const auto& s : samples) {
      if (s.shots.size() < 2) {
        ++rep.skipped;
        continue;
      }
      std::vector<std::size_t> prefix;
      for (std::size_t i = 0; i + 1 < s.shots.size(); ++i) prefix.push_back(vg.row_of.at(s.shots[i]));
      const std::size_t target = vg.row_of.at(s.shots.back());
      const auto c = engine::complete_sequence(s.text.tokens, prefix, vg.index, models, B1, mode, rerank);
      correct += c.row == target;
      base += 100.0 / static_cast<double>(vg.index.size() - prefix.size());
      ++rep.instances;
    }
  }
  if (rep.instances == 0) throw ValidationError("eval_sequence_completion: no clip with at least 2 shots");
  rep.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(rep.instances);
  rep.random_baseline = base / static_cast<double>(rep.instances);
  return rep;
}

DistortionReport eval_distortion_cls(const ParamSet& tcm, std::span<const data::ShotRecord> shots,
                                     std::span<const std::string> videos, std::size_t n_samples, std::uint64_t seed,
                                     std::size_t crop_min, std::size_t crop_max) {
  const std::size_t c = tcm.at("mlp.b2").size();
  if (n_samples == 0) throw ValidationError("eval_distortion_cls: n_samples must be >= 1");
  tcm::SampleSource source(shots, videos, c, crop_min, crop_max);
  Rng rng = Rng::derive(seed, 0xd15);
  std::vector<tcm::SequenceSample> samples;
  for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(source.draw(rng, static_cast<tcm::DistortionKind>(i % c)));

  DistortionReport rep;
  rep.per_class.assign(c, 0.0);
  rep.counts.assign(c, 0);
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t lo = 0; lo < samples.size(); lo += kChunk) {
    const std::size_t hi = std::min(samples.size(), lo + kChunk);
    const auto scores = tcm::score_batch(std::span<const tcm::SequenceSample>(samples).subspan(lo, hi - lo), tcm);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& p = scores[i - lo].probs;
      const auto pred = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      const auto label = static_cast<std::size_t>(samples[i].label);
      ++rep.counts[label];
      if (pred == label) {
        ++correct;
        rep.per_class[label] += 1;
      }
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (rep.counts[k] > 0) rep.per_class[k] /= static_cast<double>(rep.counts[k]);
  }
  rep.overall = static_cast<double>(correct) / static_cast<double>(n_samples);
  return rep;
}

RankingResult eval_sequence_ranking(const ParamSet& tcm, std::span<const data::ShotRecord> shots,
                                    std::span<const std::string> videos, std::size_t M, std::uint64_t seed) {
  if (M < 2 || M > 6) throw ValidationError("eval_sequence_ranking: M must lie in [2, 6]");
  std::vector<std::vector<std::size_t>> perms;
  std::vector<std::size_t> p(M);
  std::iota(p.begin(), p.end(), 0);
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));

  Rng rng = Rng::derive(seed, 0x4a4);
  RankingResult res;
  res.n_candidates = perms.size();
  for (const auto& [video, rows] : rows_by_video(shots, videos)) {
    if (rows.size() < M) continue;
    for (std::size_t start = 0; start + M <= rows.size(); ++start) {
      std::vector<tcm::SequenceSample> seqs;
      for (const auto& perm : perms) {
        std::vector<std::size_t> r;
        for (std::size_t i : perm) r.push_back(rows[start + i]);
        seqs.push_back(tcm::make_sample(shots, r));
      }
      const auto scores = tcm::score_batch(seqs, tcm);
      const double truth = scores[0].coherence;
      std::size_t greater = 0, equal = 0;
      for (std::size_t i = 1; i < scores.size(); ++i) {
        greater += scores[i].coherence > truth;
        equal += scores[i].coherence == truth;
      }
      res.ranks.push_back(1 + greater + static_cast<std::size_t>(rng.below(equal + 1)));
    }
  }
  if (res.ranks.empty()) throw ValidationError("eval_sequence_ranking: no video has M consecutive shots");
  return res;
}

}  // namespace t2v::eval
