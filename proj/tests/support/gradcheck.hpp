#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "oracles/finite_diff.hpp"
#include "support/fixtures.hpp"
#include "t2v/crm/crm.hpp"
#include "t2v/numkit/graph.hpp"
#include "t2v/tcm/tcm.hpp"

// Analytic-vs-numeric gradient comparison for the CRM bag losses and the TCM
// classifier on toy dimensions.
namespace t2v::gradcheck {

inline constexpr double kEps = 1e-6;
// Central differences at eps 1e-6 carry ~1e-10 of absolute roundoff, so
// coordinates below this magnitude are compared absolutely (to 1e-4·floor).
inline constexpr double kFloor = 1e-4;
// Hinge arguments closer than this to a kink make the numeric gradient
// meaningless; such batches are redrawn.
inline constexpr double kKinkMargin = 1e-4;

struct Outcome {
  double max_rel = 0;
  double loss = 0;
  int redraws = 0;
};

// For each column i the candidates of the VSE/VSE++ hinges are 0 and
// s(j,i) − s(i,i); they must be pairwise separated.
inline bool away_from_kinks(const Tensor64& s) {
  for (std::size_t i = 0; i < s.cols(); ++i) {
    std::vector<double> v{0.0};
    for (std::size_t j = 0; j < s.rows(); ++j) {
      if (j != i) v.push_back(s(j, i) - s(i, i));
    }
    for (std::size_t a = 0; a < v.size(); ++a) {
      for (std::size_t b = a + 1; b < v.size(); ++b) {
        if (std::abs(v[a] - v[b]) < kKinkMargin) return false;
      }
    }
  }
  return true;
}

inline Outcome crm(std::uint64_t seed, crm::Mode mode, crm::LossKind loss, double parallel_weight = 0.0) {
  Rng rng = Rng::derive(seed, 0x9c);
  const auto cfg = fixture::toy_crm();
  ParamSet64 ps = crm::init_params(cfg, seed).cast<double>();
  fixture::randomize(ps, rng);
  const bool hinge = loss != crm::LossKind::mil_nce;
  int redraws = 0;
  auto batch = fixture::random_batch(3, cfg.d_v, cfg.vocab_size, hinge, rng);
  while (hinge) {
    Graph<double> probe;
    if (away_from_kinks(probe.tensor(crm::batch_loss(probe, ps, batch, mode, loss, parallel_weight).logits))) break;
    batch = fixture::random_batch(3, cfg.d_v, cfg.vocab_size, hinge, rng);
    ++redraws;
  }

  auto f = [&](const ParamSet64& p) {
    Graph<double> g;
    return g.scalar(crm::batch_loss(g, p, batch, mode, loss, parallel_weight).loss);
  };
  Graph<double> g;
  const auto fwd = crm::batch_loss(g, ps, batch, mode, loss, parallel_weight);
  g.backward(fwd.loss);
  const ParamSet64 analytic = g.param_grads(ps);
  const ParamSet64 numeric = oracle::central_diff(f, ps, kEps);
  return {oracle::worst_relative(analytic, numeric, kFloor), g.scalar(fwd.loss), redraws};
}

inline Outcome tcm(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x7c);
  const auto cfg = fixture::toy_tcm();
  ParamSet64 ps = tcm::init_params(cfg, seed).cast<double>();
  fixture::randomize(ps, rng);
  const std::size_t k = static_cast<std::size_t>(rng.range(2, 4));
  std::vector<tcm::SequenceSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(fixture::random_sample(k, cfg.d_v, cfg.d_h, rng));
  std::vector<const tcm::SequenceSample*> ptrs;
  std::vector<std::size_t> labels;
  for (const auto& s : samples) {
    ptrs.push_back(&s);
    labels.push_back(static_cast<std::size_t>(s.label));
  }
  auto build = [&](Graph<double>& g, const ParamSet64& p) {
    return g.softmax_xent(tcm::tcm_logits(g, p, std::span<const tcm::SequenceSample* const>(ptrs)), labels);
  };
  auto f = [&](const ParamSet64& p) {
    Graph<double> g;
    return g.scalar(build(g, p));
  };
  Graph<double> g;
  const Var loss = build(g, ps);
  g.backward(loss);
  const ParamSet64 analytic = g.param_grads(ps);
  const ParamSet64 numeric = oracle::central_diff(f, ps, kEps);
  return {oracle::worst_relative(analytic, numeric, kFloor), g.scalar(loss), 0};
}

}  // namespace t2v::gradcheck
