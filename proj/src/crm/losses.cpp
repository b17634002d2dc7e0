#include <algorithm>

#include "t2v/crm/crm.hpp"

namespace t2v::crm {

std::size_t split_point(std::size_t k, Rng& rng) {
  if (k < 2) throw ValidationError("split_clip: clip needs at least 2 shots, got " + std::to_string(k));
  return 1 + static_cast<std::size_t>(rng.below(k - 1));
}

std::pair<data::ClipSample, data::ClipSample> split_clip(const data::ClipSample& clip, Rng& rng) {
  const std::size_t s = split_point(clip.shots.size(), rng);
  data::ClipSample a = clip, b = clip;
  a.shots.assign(clip.shots.begin(), clip.shots.begin() + static_cast<std::ptrdiff_t>(s));
  b.shots.assign(clip.shots.begin() + static_cast<std::ptrdiff_t>(s), clip.shots.end());
  return {std::move(a), std::move(b)};
}

namespace {

Tensor64 rows_of(const Tensor64& m, std::size_t r0, std::size_t r1) {
  const std::size_t c = m.cols();
  return Tensor64::matrix(r1 - r0, c,
                          std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                                              m.data.begin() + static_cast<std::ptrdiff_t>(r1 * c)));
}

}  // namespace

EncodedBag encode_bag(const Tensor& shots, const std::vector<std::vector<std::uint32_t>>& texts, const ParamSet& ps,
                      Mode mode, std::size_t split) {
  if (texts.empty()) throw ValidationError("encode_bag: bag without texts");
  const ParamSet64 p = ps.cast<double>();
  const Tensor64 s = shots.cast<double>();
  const std::size_t k = s.rows();
  EncodedBag out;
  if (mode == Mode::parallel) {
    out.clip_embed = encode_shot_sequence(s, p);
    for (const auto& t : texts) {
      Tensor64 g = encode_text<double>(t, p);
      out.text_embeds.push_back(apply_head<double>(g.data, p));
    }
    return out;
  }
  if (split < 1 || split >= k) {
    throw ValidationError("encode_bag: split " + std::to_string(split) + " outside [1, " + std::to_string(k - 1) + "]");
  }
  out.f_ca = encode_shot_sequence(rows_of(s, 0, split), p);
  out.f_cb = encode_shot_sequence(rows_of(s, split, k), p);
  out.clip_embed = out.f_cb;
  for (const auto& t : texts) {
    Tensor64 g = encode_text<double>(t, p);
    Tensor64 sigma = context_interact<double>(out.f_ca.data, g.data, p);
    out.text_embeds.push_back(apply_head<double>(sigma.data, p));
  }
  return out;
}

std::vector<BagLogits> batch_bag_logits(std::span<const EncodedBag> bags, Mode) {
  // Text features already carry their bag's own context, so both modes share
  // one pairing rule.
  if (bags.size() < 2) throw ValidationError("batch_bag_logits: need at least 2 bags for negatives");
  std::vector<BagLogits> out(bags.size());
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const auto& ci = bags[i].clip_embed.data;
    for (const auto& t : bags[i].text_embeds) out[i].pos.push_back(dot<double>(ci, t.data));
    for (std::size_t j = 0; j < bags.size(); ++j) {
      if (j == i) continue;
      for (const auto& t : bags[j].text_embeds) out[i].neg.push_back(dot<double>(ci, t.data));
    }
    for (std::size_t j = 0; j < bags.size(); ++j) {
      if (j == i) continue;
      for (const auto& t : bags[i].text_embeds) out[i].neg.push_back(dot<double>(bags[j].clip_embed.data, t.data));
    }
  }
  return out;
}

BagBatch<float> make_batch(std::span<const data::PositiveBag* const> bags, std::span<const data::ShotRecord> shots,
                           Mode mode, Rng& rng, LossKind loss) {
  BagBatch<float> b;
  if (bags.empty()) throw ValidationError("make_batch: empty batch");
  const std::size_t d = shots[bags[0]->clip.shots.at(0)].feature.size();
  std::vector<float> rows;
  b.offsets.push_back(0);
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const auto& bag = *bags[i];
    for (std::size_t idx : bag.clip.shots) {
      const auto& f = shots[idx].feature;
      if (f.size() != d) throw ValidationError("make_batch: shot features of unequal dimension");
      rows.insert(rows.end(), f.begin(), f.end());
    }
    b.offsets.push_back(b.offsets.back() + bag.clip.shots.size());
    if (mode == Mode::adaptive) b.split.push_back(split_point(bag.clip.shots.size(), rng));
    const std::size_t n_texts = loss == LossKind::mil_nce ? bag.texts.size() : 1;
    for (std::size_t t = 0; t < n_texts; ++t) {
      b.texts.push_back(bag.texts[t].tokens);
      b.owner.push_back(i);
    }
  }
  b.shots = BasicTensor<float>::matrix(b.offsets.back(), d, std::move(rows));
  return b;
}

template <typename T>
BatchForward<T> batch_loss(Graph<T>& g, const BasicParamSet<T>& ps, const BagBatch<T>& batch, Mode mode,
                           LossKind loss, double parallel_weight) {
  const std::size_t n = batch.size();
  if (n < 2) throw ValidationError("batch_loss: need at least 2 bags for negatives");
  Var x = g.input(batch.shots, "shots");
  Var texts = encode_texts(g, ps, batch.texts);
  Var clips, text_feats;
  if (mode == Mode::parallel) {
    clips = encode_shots(g, ps, x, batch.offsets);
    text_feats = head(g, ps, texts);
  } else {
    if (batch.split.size() != n) throw ValidationError("batch_loss: adaptive batch without split points");
    // Segments alternate c_A, c_B per clip.
    std::vector<std::size_t> seg{0};
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < n; ++i) {
      seg.push_back(batch.offsets[i] + batch.split[i]);
      seg.push_back(batch.offsets[i + 1]);
      even.push_back(2 * i);
      odd.push_back(2 * i + 1);
    }
    Var both = encode_shots(g, ps, x, std::move(seg));
    Var fa = g.gather_rows(both, std::move(even));
    clips = g.gather_rows(both, std::move(odd));
    Var context = g.gather_rows(fa, batch.owner);
    text_feats = head(g, ps, interact(g, ps, context, texts));
  }
  auto score = [&](Var lg) {
    switch (loss) {
      case LossKind::vse: return g.vse(lg, false);
      case LossKind::vsepp: return g.vse(lg, true);
      default: return g.mil_nce(lg, batch.owner);
    }
  };
  Var logits = g.matmul_nt(clips, text_feats);
  Var l = score(logits);
  if (mode == Mode::adaptive && parallel_weight > 0) {
    Var whole = g.matmul_nt(encode_shots(g, ps, x, batch.offsets), head(g, ps, texts));
    l = g.add(l, g.scale(score(whole), static_cast<T>(parallel_weight)));
  }
  return {logits, l};
}

template BatchForward<float> batch_loss(Graph<float>&, const BasicParamSet<float>&, const BagBatch<float>&, Mode,
                                        LossKind, double);
template BatchForward<double> batch_loss(Graph<double>&, const BasicParamSet<double>&, const BagBatch<double>&, Mode,
                                         LossKind, double);

}  // namespace t2v::crm
