#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles/window_matcher.hpp"
#include "support/fixtures.hpp"
#include "t2v/evalkit/evalkit.hpp"

using namespace t2v;
using namespace t2v::eval;

TEST_CASE("recall and median rank") {
  const std::vector<std::size_t> ones(7, 1);
  CHECK(recall_at_k(ones, 1) == 100.0);
  CHECK(median_rank(ones) == 1.0);

  const std::vector<std::size_t> r{1, 3};
  CHECK(median_rank(r) == 2.0);
  CHECK(recall_at_k(r, 1) == 50.0);
  CHECK(recall_at_k(r, 3) == 100.0);

  const std::vector<std::size_t> odd{9, 2, 5};
  CHECK(median_rank(odd) == 5.0);

  Rng rng(4);
  std::vector<std::size_t> ranks;
  for (int i = 0; i < 200; ++i) ranks.push_back(1 + rng.below(50));
  double prev = 0;
  for (std::size_t k = 1; k <= 50; ++k) {
    const double now = recall_at_k(ranks, k);
    CHECK(now >= prev);
    prev = now;
  }
  CHECK(prev == 100.0);
  CHECK_THROWS_AS(recall_at_k(std::vector<std::size_t>{}, 1), ValidationError);
  CHECK_THROWS_AS(median_rank(std::vector<std::size_t>{}), ValidationError);
}

TEST_CASE("rank_of puts earlier ties first") {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.1};
  CHECK(rank_of(s, 1) == 1);
  CHECK(rank_of(s, 0) == 2);
  CHECK(rank_of(s, 2) == 3);
  CHECK(rank_of(s, 3) == 4);
  CHECK_THROWS_AS(rank_of(s, 4), ValidationError);
}

TEST_CASE("aop examples") {
  using V = std::vector<std::uint64_t>;
  CHECK(aop_k(V{3, 2, 1}, V{1, 2, 3}, 2) == 0.0);
  CHECK(aop_k(V{1, 2, 4}, V{1, 2, 3}, 2) == 0.5);
  CHECK(aop_k(V{1, 2, 3}, V{1, 2, 3}, 1) == 1.0);
  CHECK(aop_k(V{1, 2, 3}, V{1, 2, 3}, 3) == 1.0);
  // Repeated windows are only matched as often as the ground truth has them.
  CHECK(aop_k(V{1, 1, 1}, V{1, 2, 3}, 1) == doctest::Approx(1.0 / 3));
  // Longer generations are scaled down.
  CHECK(aop_k(V{1, 2, 3, 4}, V{1, 2}, 1) == 0.5 * 0.5 * 2);
  CHECK_THROWS_AS(aop_k(V{1, 2}, V{1, 2, 3}, 3), ValidationError);
  CHECK_THROWS_AS(aop_k(V{1, 2}, V{1, 2}, 0), ValidationError);
}

TEST_CASE("aop_k agrees with the brute-force matcher") {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const std::size_t ls = 1 + rng.below(6), lu = 1 + rng.below(6);
    const std::uint64_t alpha = 2 + rng.below(3);
    std::vector<std::uint64_t> gen(ls), gt(lu);
    for (auto& x : gen) x = rng.below(alpha);
    for (auto& x : gt) x = rng.below(alpha);
    for (std::size_t k = 1; k <= std::min(ls, lu); ++k) {
      CHECK(aop_k(gen, gt, k) == oracle::aop_windows(gen, gt, k));
    }
  }
}

TEST_CASE("linear_fit") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{3, 5, 7, 9};
  const auto f = linear_fit(x, y);
  CHECK(f[0] == doctest::Approx(1.0));
  CHECK(f[1] == doctest::Approx(2.0));
  CHECK(f[2] == doctest::Approx(1.0));
  const std::vector<double> y2{1, 3, 2, 4};
  CHECK(linear_fit(x, y2)[2] < 1.0);
  CHECK_THROWS_AS(linear_fit(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
  CHECK_THROWS_AS(linear_fit(std::vector<double>{2, 2}, std::vector<double>{1, 3}), ValidationError);
}

TEST_CASE("bench config validation") {
  const auto crm = crm::init_params(crm::CrmConfig{}, 1);
  const auto tcm = tcm::init_params(tcm::TcmConfig{}, 1);
  BenchConfig cfg;
  cfg.sizes = {100, 200};
  cfg.queries = 2;
  cfg.M = 0;
  CHECK_THROWS_AS(bench_runtime(cfg, crm, tcm), ValidationError);
  cfg.M = 3;
  cfg.sizes = {100};
  CHECK_THROWS_AS(bench_runtime(cfg, crm, tcm), ValidationError);
  cfg.sizes = {100, 200};
  const auto rep = bench_runtime(cfg, crm, tcm);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].n == 100);
  CHECK(rep.rows[0].ms_median > 0);
  CHECK(rep.csv().rfind("N,ms_median,ms_p90", 0) == 0);

  const auto g = synthetic_gallery(50, crm, tcm, 3);
  CHECK(g.size() == 50);
  CHECK(g.dim() == 32);
  CHECK(synthetic_gallery(50, crm, tcm, 3).embeds == g.embeds);
}

TEST_CASE("evaluation tasks on a small corpus") {
  data::PlantedCorpusConfig cfg;
  cfg.n_videos = 6;
  cfg.seed = 2;
  const auto corpus = data::generate_corpus(cfg);
  const auto videos = corpus.video_ids();
  const auto crm_ps = crm::init_params(crm::CrmConfig{}, 1);
  const auto tcm_ps = tcm::init_params(tcm::TcmConfig{}, 1);

  const auto ret = eval_clip_retrieval(corpus, videos, crm_ps);
  CHECK(!ret.ranks.empty());
  for (auto r : ret.ranks) CHECK((r >= 1 && r <= ret.n_candidates));

  engine::SearchConfig sc;
  sc.M = 2;
  const auto gen = eval_sequence_generation(corpus, videos, {&crm_ps, &tcm_ps}, sc);
  CHECK(gen.instances > 0);
  CHECK(gen.aop_s == doctest::Approx(gen.aop[0] + gen.aop[1] + gen.aop[2]));

  const auto comp = eval_sequence_completion(corpus, videos, {&crm_ps, &tcm_ps}, 6, crm::Mode::adaptive);
  CHECK(comp.instances > 0);
  CHECK((comp.accuracy >= 0 && comp.accuracy <= 100));

  // An untrained coherence head is exactly uniform.
  const auto dist = eval_distortion_cls(tcm_ps, corpus.shots, videos, 90, 3);
  REQUIRE(dist.counts.size() == 3);
  CHECK(dist.counts[0] + dist.counts[1] + dist.counts[2] == 90);

  const auto rk = eval_sequence_ranking(tcm_ps, corpus.shots, videos, 3, 1);
  CHECK(rk.n_candidates == 6);
  CHECK_THROWS_AS(eval_sequence_ranking(tcm_ps, corpus.shots, videos, 7, 1), ValidationError);
}
