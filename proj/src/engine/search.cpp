#include <algorithm>
#include <cmath>

#include "t2v/engine/engine.hpp"

namespace t2v::engine {

void SearchConfig::validate() const {
  if (M < 1) throw ValidationError("search: M must be >= 1");
  if (B2 < 1) throw ValidationError("search: B2 must be >= 1");
  if (B1 <= B2) {
    throw ValidationError("search: beam sizes must satisfy B1 > B2 (got B1=" + std::to_string(B1) +
                          ", B2=" + std::to_string(B2) + ")");
  }
}

bool sequence_before_by_sim(const Sequence& a, const Sequence& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.shot_ids < b.shot_ids;
}

bool sequence_before(const Sequence& a, const Sequence& b) {
  if (a.coh != b.coh) return a.coh > b.coh;
  return sequence_before_by_sim(a, b);
}

Tensor step_query(std::span<const std::size_t> prefix, std::span<const float> g, const ParamSet& crm,
                  const GalleryIndex& index, crm::Mode mode) {
  if (mode == crm::Mode::parallel) return crm::apply_head<float>(g, crm);
  const std::size_t d = index.dim();
  if (g.size() != d) throw ValidationError("step_query: text feature dim differs from index dim");
  std::vector<float> ctx(d, 0.0f);
  if (!prefix.empty()) {
    for (std::size_t r : prefix) {
      auto e = index.embeds.row(r);
      for (std::size_t j = 0; j < d; ++j) ctx[j] += e[j];
    }
    const float inv = 1.0f / static_cast<float>(prefix.size());
    for (auto& x : ctx) x *= inv;
  }
  Tensor sigma = crm::context_interact<float>(ctx, g, crm);
  return crm::apply_head<float>(sigma.data, crm);
}

std::vector<double> coherence(const GalleryIndex& index, const std::vector<std::vector<std::size_t>>& seqs,
                              const ParamSet& tcm) {
  std::vector<tcm::SequenceSample> samples;
  samples.reserve(seqs.size());
  for (const auto& rows : seqs) {
    tcm::SequenceSample s;
    const std::size_t dv = index.raw_vis.cols(), dh = index.raw_hist.cols();
    s.vis = Tensor(Shape{rows.size(), dv});
    s.hist = Tensor(Shape{rows.size(), dh});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto v = index.raw_vis.row(rows[i]);
      auto h = index.raw_hist.row(rows[i]);
      std::copy(v.begin(), v.end(), s.vis.data.begin() + static_cast<std::ptrdiff_t>(i * dv));
      std::copy(h.begin(), h.end(), s.hist.data.begin() + static_cast<std::ptrdiff_t>(i * dh));
    }
    samples.push_back(std::move(s));
  }
  std::vector<double> out;
  for (const auto& sc : tcm::score_batch(samples, tcm)) out.push_back(sc.coherence);
  return out;
}

namespace {

void rescore(std::vector<Sequence>& seqs, const GalleryIndex& index, const ParamSet& tcm) {
  std::vector<std::vector<std::size_t>> rows;
  for (const auto& s : seqs) rows.push_back(s.rows);
  const auto coh = coherence(index, rows, tcm);
  for (std::size_t i = 0; i < seqs.size(); ++i) seqs[i].coh = coh[i];
}

Sequence extend(const Sequence& s, const Hit& h) {
  Sequence out = s;
  out.rows.push_back(h.row);
  out.shot_ids.push_back(h.shot_id);
  out.sim += h.score;
  return out;
}

void require_models(const Models& m, bool rerank) {
  if (!m.crm) throw ValidationError("search: missing CRM parameters");
  if (rerank && !m.tcm) throw ValidationError("search: re-ranking needs TCM parameters");
}

}  // namespace

std::vector<Sequence> beam_sequence(std::span<const std::uint32_t> tokens, const SearchConfig& cfg,
                                    const GalleryIndex& index, const Models& models) {
  cfg.validate();
  require_models(models, cfg.rerank);
  if (index.size() < cfg.M) {
    throw ValidationError("beam_sequence: gallery of " + std::to_string(index.size()) + " shots is smaller than M=" +
                          std::to_string(cfg.M));
  }
  const ParamSet& crm = *models.crm;
  const Tensor g = crm::encode_text<float>(tokens, crm);

  // Step 1: coherence is undefined for single shots, keep the top B2 by similarity.
  std::vector<Sequence> beam;
  {
    const Tensor q = step_query({}, g.data, crm, index, cfg.mode);
    for (const auto& h : knn(index, q.data, cfg.B1, {}, cfg.threads)) beam.push_back(extend(Sequence{}, h));
    if (beam.size() > cfg.B2) beam.resize(cfg.B2);
  }
  for (std::size_t t = 2; t <= cfg.M; ++t) {
    std::vector<Sequence> pool;
    for (const auto& s : beam) {
      const Tensor q = step_query(s.rows, g.data, crm, index, cfg.mode);
      for (const auto& h : knn(index, q.data, cfg.B1, s.rows, cfg.threads)) pool.push_back(extend(s, h));
    }
    std::sort(pool.begin(), pool.end(), sequence_before_by_sim);
    if (pool.size() > cfg.B1) pool.resize(cfg.B1);
    if (cfg.rerank) {
      rescore(pool, index, *models.tcm);
      std::sort(pool.begin(), pool.end(), sequence_before);
    }
    if (pool.size() > cfg.B2) pool.resize(cfg.B2);
    beam = std::move(pool);
  }
  std::sort(beam.begin(), beam.end(), sequence_before);
  return beam;
}

std::vector<std::size_t> greedy_sequence(std::span<const std::uint32_t> tokens, std::size_t M,
                                         const GalleryIndex& index, const ParamSet& crm) {
  if (M < 1) throw ValidationError("greedy_sequence: M must be >= 1");
  if (index.size() < M) throw ValidationError("greedy_sequence: gallery smaller than M");
  const Tensor g = crm::encode_text<float>(tokens, crm);
  const Tensor q = crm::apply_head<float>(g.data, crm);
  std::vector<std::size_t> out;
  for (const auto& h : knn(index, q.data, M)) out.push_back(h.row);
  return out;
}

std::vector<Sequence> brute_force_ranking(std::span<const std::uint32_t> tokens, std::size_t M,
                                          const GalleryIndex& index, const Models& models, crm::Mode mode,
                                          bool rerank) {
  require_models(models, rerank);
  const std::size_t n = index.size();
  if (M < 1 || n < M) throw ValidationError("brute_force_sequence: need 1 <= M <= N");
  if (std::pow(static_cast<double>(n), static_cast<double>(M)) > kBruteForceLimit) {
    throw ValidationError("brute_force_sequence: N^M exceeds the 1e6 guard");
  }
  const ParamSet& crm = *models.crm;
  const Tensor g = crm::encode_text<float>(tokens, crm);
  const std::size_t d = index.dim();

  std::vector<Sequence> all;
  Sequence cur;
  std::vector<bool> used(n, false);
  // Depth-first over distinct shots; each step's query depends only on the
  // prefix, exactly as in the beam.
  auto rec = [&](auto&& self) -> void {
    if (cur.rows.size() == M) {
      all.push_back(cur);
      return;
    }
    const Tensor q = step_query(cur.rows, g.data, crm, index, mode);
    for (std::size_t r = 0; r < n; ++r) {
      if (used[r]) continue;
      const Hit h{r, index.shot_ids[r], inner(q.data, index.embeds.row(r).subspan(0, d))};
      const Sequence saved = cur;
      cur = extend(cur, h);
      used[r] = true;
      self(self);
      used[r] = false;
      cur = saved;
    }
  };
  rec(rec);
  if (rerank && M >= 2) rescore(all, index, *models.tcm);
  std::sort(all.begin(), all.end(), sequence_before);
  return all;
}

Sequence brute_force_sequence(std::span<const std::uint32_t> tokens, std::size_t M, const GalleryIndex& index,
                              const Models& models, crm::Mode mode, bool rerank) {
  return brute_force_ranking(tokens, M, index, models, mode, rerank).front();
}

Completion complete_sequence(std::span<const std::uint32_t> tokens, std::span<const std::size_t> prefix,
                             const GalleryIndex& index, const Models& models, std::size_t B1, crm::Mode mode,
                             bool rerank) {
  require_models(models, rerank);
  if (index.size() == 0) throw ValidationError("complete_sequence: empty gallery");
  if (B1 < 1) throw ValidationError("complete_sequence: B1 must be >= 1");
  const ParamSet& crm = *models.crm;
  const Tensor g = crm::encode_text<float>(tokens, crm);
  const Tensor q = step_query(prefix, g.data, crm, index, mode);
  Sequence base;
  for (std::size_t r : prefix) {
    if (r >= index.size()) throw ValidationError("complete_sequence: prefix row out of range");
    base.rows.push_back(r);
    base.shot_ids.push_back(index.shot_ids[r]);
  }
  const auto hits = knn(index, q.data, B1, prefix);
  if (hits.empty()) throw ValidationError("complete_sequence: no candidate outside the prefix");
  Completion out;
  for (const auto& h : hits) {
    Sequence s = base;
    s.rows.push_back(h.row);
    s.shot_ids.push_back(h.shot_id);
    s.sim = h.score;
    out.candidates.push_back(std::move(s));
  }
  if (rerank && !prefix.empty()) rescore(out.candidates, index, *models.tcm);
  std::sort(out.candidates.begin(), out.candidates.end(), sequence_before);
  out.row = out.candidates.front().rows.back();
  out.shot_id = out.candidates.front().shot_ids.back();
  return out;
}

nlohmann::json to_json(const Sequence& s) {
  return {{"shots", s.shot_ids}, {"sim", s.sim}, {"coh", s.coh}};
}

}  // namespace t2v::engine
