#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2v/crm/crm.hpp"
#include "t2v/engine/engine.hpp"
#include "t2v/numkit/rng.hpp"
#include "t2v/tcm/tcm.hpp"

namespace t2v::fixture {

inline crm::CrmConfig toy_crm() {
  crm::CrmConfig c;
  c.d_v = 4;
  c.shot_hidden = 5;
  c.d_e = 3;
  c.vocab_size = 11;
  c.word_dim = 3;
  c.text_hidden = 4;
  return c;
}

inline tcm::TcmConfig toy_tcm() {
  tcm::TcmConfig c;
  c.d_v = 4;
  c.d_h = 3;
  c.mlp_hidden = 4;
  c.n_classes = 3;
  return c;
}

// Overwrites every entry with N(0, sigma²); the default inits contain
// identities and zero blocks that would hide gradient bugs.
template <typename T>
void randomize(BasicParamSet<T>& ps, Rng& rng, double sigma = 0.5) {
  for (auto& [name, t] : ps) {
    for (auto& x : t.data) x = static_cast<T>(sigma * rng.normal());
  }
}

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& x : t.data) x = static_cast<float>(rng.normal());
  return t;
}

// Three channel blocks, each a positive vector summing to 1.
inline Tensor random_histograms(std::size_t rows, std::size_t d_h, Rng& rng) {
  Tensor t({rows, d_h});
  const std::size_t w = d_h / 3;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t b = 0; b < 3; ++b) {
      double z = 0;
      for (std::size_t i = 0; i < w; ++i) z += (t(r, b * w + i) = static_cast<float>(0.05 + rng.uniform()));
      for (std::size_t i = 0; i < w; ++i) t(r, b * w + i) = static_cast<float>(t(r, b * w + i) / z);
    }
  }
  return t;
}

// Gallery of n shots with random ids, embeddings and raw features.
inline engine::GalleryIndex random_gallery(std::size_t n, std::size_t d_e, std::size_t d_v, std::size_t d_h,
                                           Rng& rng) {
  engine::GalleryIndex g;
  for (std::size_t i = 0; i < n; ++i) {
    g.shot_ids.push_back(1000 * (i + 1) + rng.below(1000));
    g.video_ids.push_back("v" + std::to_string(i % 3));
  }
  rng.shuffle(g.shot_ids);
  g.embeds = random_matrix(n, d_e, rng);
  g.raw_vis = random_matrix(n, d_v, rng);
  g.raw_hist = random_histograms(n, d_h, rng);
  return g;
}

inline std::vector<std::uint32_t> random_tokens(std::size_t len, std::uint32_t vocab, Rng& rng) {
  std::vector<std::uint32_t> t;
  for (std::size_t i = 0; i < len; ++i) t.push_back(static_cast<std::uint32_t>(rng.below(vocab)));
  return t;
}

// A double-precision training batch: n clips of 2..4 shots, 1..3 texts per
// bag (exactly one when `single_text`), split points for the adaptive mode.
inline crm::BagBatch<double> random_batch(std::size_t n, std::size_t d_v, std::uint32_t vocab, bool single_text,
                                          Rng& rng) {
  crm::BagBatch<double> b;
  std::vector<double> rows;
  b.offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(rng.range(2, 4));
    for (std::size_t r = 0; r < k * d_v; ++r) rows.push_back(rng.normal());
    b.offsets.push_back(b.offsets.back() + k);
    b.split.push_back(static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(k) - 1)));
    const std::size_t texts = single_text ? 1 : static_cast<std::size_t>(rng.range(1, 3));
    for (std::size_t t = 0; t < texts; ++t) {
      b.texts.push_back(random_tokens(static_cast<std::size_t>(rng.range(1, 4)), vocab, rng));
      b.owner.push_back(i);
    }
  }
  b.shots = Tensor64({b.offsets.back(), d_v}, std::move(rows));
  return b;
}

inline tcm::SequenceSample random_sample(std::size_t k, std::size_t d_v, std::size_t d_h, Rng& rng) {
  tcm::SequenceSample s;
  s.vis = random_matrix(k, d_v, rng);
  s.hist = random_histograms(k, d_h, rng);
  s.label = static_cast<tcm::DistortionKind>(rng.below(3));
  return s;
}

}  // namespace t2v::fixture
