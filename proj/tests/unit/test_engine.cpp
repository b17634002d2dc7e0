#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "oracles/naive_knn.hpp"
#include "support/fixtures.hpp"
#include "t2v/datagen/corpus.hpp"
#include "t2v/engine/engine.hpp"

using namespace t2v;
using namespace t2v::engine;
namespace fs = std::filesystem;

namespace {

GalleryIndex tiny(std::vector<std::uint64_t> ids, std::vector<float> embeds, std::size_t d) {
  GalleryIndex g;
  const std::size_t n = ids.size();
  g.shot_ids = std::move(ids);
  g.video_ids.assign(n, "v");
  g.embeds = Tensor::matrix(n, d, std::move(embeds));
  Rng rng(1);
  g.raw_vis = fixture::random_matrix(n, 4, rng);
  g.raw_hist = fixture::random_histograms(n, 3, rng);
  return g;
}

crm::CrmConfig two_dim() {
  crm::CrmConfig c;
  c.d_v = 2;
  c.shot_hidden = 2;
  c.d_e = 2;
  c.vocab_size = 5;
  c.word_dim = 2;
  c.text_hidden = 2;
  return c;
}

void set_eye(ParamSet& ps, const std::string& name) {
  auto& t = ps.at(name);
  std::fill(t.data.begin(), t.data.end(), 0.0f);
  for (std::size_t i = 0; i < t.rows(); ++i) t(i, i) = 1.0f;
}

void set_zero(ParamSet& ps, const std::string& name) {
  auto& t = ps.at(name);
  std::fill(t.data.begin(), t.data.end(), 0.0f);
}

// Every text encodes to the constant q (text.w2 = 0, text.b2 = q), the head
// is tanh (identity weights), W = I.
ParamSet constant_text_crm(float q0, float q1) {
  ParamSet ps = crm::init_params(two_dim(), 1);
  set_zero(ps, "text.w2");
  ps.at("text.b2").data = {q0, q1};
  set_eye(ps, "interact.w");
  set_eye(ps, "head.w1");
  set_eye(ps, "head.w2");
  set_zero(ps, "head.b1");
  set_zero(ps, "head.b2");
  return ps;
}

// Head replaced by the constant q: every step queries with q.
ParamSet constant_query_crm(float q0, float q1) {
  ParamSet ps = crm::init_params(two_dim(), 1);
  set_zero(ps, "head.w1");
  set_zero(ps, "head.b1");
  set_zero(ps, "head.w2");
  ps.at("head.b2").data = {q0, q1};
  return ps;
}

}  // namespace

TEST_CASE("knn examples") {
  const auto g = tiny({1, 2, 3}, {1, 0, 0, 1, 0.5, 0.5}, 2);
  const std::vector<float> q{1, 0};
  auto hits = knn(g, q, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].shot_id == 1);
  CHECK(hits[0].score == 1.0);
  CHECK(hits[1].shot_id == 3);
  CHECK(hits[1].score == 0.5);
  CHECK(knn(g, q, 10).size() == 3);

  const auto two = tiny({2, 1}, {0, 1, 1, 0}, 2);
  const std::vector<float> diag{1, 1};
  hits = knn(two, diag, 2);
  CHECK(hits[0].shot_id == 1);
  CHECK(hits[1].shot_id == 2);
  CHECK_THROWS_AS(knn(g, q, 0), ValidationError);
  CHECK_THROWS_AS(knn(g, std::vector<float>{1, 0, 0}, 1), ValidationError);
}

TEST_CASE("knn equals a full sort for any k, exclusion and thread count") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = trial < 25 ? 1 + rng.below(60) : 9000 + rng.below(3000);
    auto g = fixture::random_gallery(n, 3, 4, 3, rng);
    // Coarse values force ties that only the id rule can order.
    for (auto& x : g.embeds.data) x = static_cast<float>(std::round(x * 2) / 2);
    std::vector<float> q(3);
    for (auto& x : q) x = static_cast<float>(std::round(rng.normal() * 2) / 2);
    std::vector<std::size_t> ex;
    for (std::size_t i = 0; i < n / 5; ++i) ex.push_back(rng.below(n));
    const std::size_t k = 1 + rng.below(12);
    const auto want = oracle::naive_knn(g, q, k, ex);
    for (std::size_t threads : {1, 3, 8}) {
      const auto got = knn(g, q, k, ex, threads);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].row == want[i].row);
        CHECK(got[i].score == want[i].score);
      }
    }
  }
}

TEST_CASE("build_index encodes each shot on its own") {
  data::PlantedCorpusConfig cfg;
  cfg.n_videos = 3;
  const auto corpus = data::generate_corpus(cfg);
  const auto ps = crm::init_params(crm::CrmConfig{}, 2);
  const std::vector<std::size_t> one{7};
  const auto single = build_index(corpus.shots, ps, one);
  CHECK(single.size() == 1);
  CHECK(single.dim() == 32);
  CHECK(single.shot_ids[0] == corpus.shots[7].shot_id);

  const auto idx = build_index(corpus.shots, ps, {}, "abc");
  REQUIRE(idx.size() == corpus.shots.size());
  for (std::size_t i : {0, 17, 119}) {
    const std::vector<std::size_t> r{i};
    const auto f = crm::encode_shot_sequence<float>(data::feature_matrix(corpus.shots, r), ps);
    CHECK(std::vector<float>(idx.embeds.row(i).begin(), idx.embeds.row(i).end()) == f.data);
  }

  const fs::path dir = fs::temp_directory_path() / "t2v_unit_index";
  fs::remove_all(dir);
  save_index(dir, idx);
  const auto back = load_index(dir);
  CHECK(back.embeds == idx.embeds);
  CHECK(back.raw_hist == idx.raw_hist);
  CHECK(back.shot_ids == idx.shot_ids);
  CHECK(back.crm_checkpoint_hash == "abc");
  fs::remove(dir / "index.json");
  CHECK_THROWS_AS(load_index(dir), FormatError);
  fs::remove_all(dir);

  CHECK_THROWS_AS(build_index(corpus.shots, crm::init_params(two_dim(), 1)), ValidationError);
}

TEST_CASE("step_query") {
  const auto ps = constant_text_crm(0, 0);
  const auto g = tiny({1, 2}, {1, 0, 0, 1}, 2);
  const double r = 1 / std::sqrt(2.0);
  const std::vector<float> gh{static_cast<float>(r), static_cast<float>(r)};
  // Empty prefix: head(g) = tanh(g).
  auto q = step_query({}, gh, ps, g, crm::Mode::adaptive);
  CHECK(q[0] == doctest::Approx(std::tanh(r)));
  CHECK(q[1] == doctest::Approx(std::tanh(r)));
  // Prefix (1,0): σ = (0, 1/√2).
  const std::vector<std::size_t> first{0};
  q = step_query(first, gh, ps, g, crm::Mode::adaptive);
  CHECK(std::abs(q[0]) < 1e-7);
  CHECK(q[1] == doctest::Approx(std::tanh(r)));
  // Prefix orthogonal to g leaves g alone.
  const std::vector<float> gx{0.8f, 0.0f};
  const std::vector<std::size_t> second{1};
  q = step_query(second, gx, ps, g, crm::Mode::adaptive);
  CHECK(q[0] == doctest::Approx(std::tanh(0.8)));
  CHECK(q[1] == 0.0f);
  // Parallel mode ignores the prefix.
  q = step_query(first, gh, ps, g, crm::Mode::parallel);
  CHECK(q[0] == doctest::Approx(std::tanh(r)));
}

TEST_CASE("beam search on a hand-traced gallery") {
  // Query is always (1, 0); similarities are the first coordinates.
  const auto ps = constant_query_crm(1, 0);
  const auto g = tiny({11, 12, 13, 14}, {0.9f, 0, 0.8f, 0, 0.5f, 0, 0.1f, 0}, 2);
  SearchConfig sc;
  sc.M = 2;
  sc.B1 = 3;
  sc.B2 = 2;
  sc.rerank = false;
  sc.mode = crm::Mode::parallel;
  const std::vector<std::uint32_t> text{1};
  // Step 1 keeps [11], [12]. Step 2 pools [11,12] 1.7, [11,13] 1.4, [11,14] 1.0,
  // [12,11] 1.7, [12,13] 1.3, [12,14] 0.9; the two 1.7s survive, ids break the tie.
  const auto out = beam_sequence(text, sc, g, {&ps, nullptr});
  REQUIRE(out.size() == 2);
  CHECK(out[0].shot_ids == std::vector<std::uint64_t>{11, 12});
  CHECK(out[1].shot_ids == std::vector<std::uint64_t>{12, 11});
  CHECK(out[0].sim == doctest::Approx(1.7));
  CHECK(out[1].sim == out[0].sim);

  sc.M = 3;
  const auto three = beam_sequence(text, sc, g, {&ps, nullptr});
  CHECK(three[0].shot_ids == std::vector<std::uint64_t>{11, 12, 13});
  CHECK(three[1].shot_ids == std::vector<std::uint64_t>{12, 11, 13});

  sc.B1 = 2;
  CHECK_THROWS_AS(beam_sequence(text, sc, g, {&ps, nullptr}), ValidationError);
  sc.B1 = 3;
  sc.M = 5;
  CHECK_THROWS_AS(beam_sequence(text, sc, g, {&ps, nullptr}), ValidationError);
  sc.M = 2;
  sc.rerank = true;
  CHECK_THROWS_AS(beam_sequence(text, sc, g, {&ps, nullptr}), ValidationError);
}

TEST_CASE("beam invariants on random galleries") {
  const auto ccfg = fixture::toy_crm();
  const auto tcfg = fixture::toy_tcm();
  for (std::uint64_t f = 0; f < 30; ++f) {
    Rng rng(f + 100);
    ParamSet crm_ps = crm::init_params(ccfg, f);
    ParamSet tcm_ps = tcm::init_params(tcfg, f);
    fixture::randomize(crm_ps, rng);
    fixture::randomize(tcm_ps, rng);
    const auto g = fixture::random_gallery(20 + rng.below(20), ccfg.d_e, ccfg.d_v, tcfg.d_h, rng);
    const auto text = fixture::random_tokens(3, ccfg.vocab_size, rng);
    const Models models{&crm_ps, &tcm_ps};

    // B1=2, B2=1 without re-ranking is greedy in parallel mode.
    SearchConfig sc;
    sc.M = 4;
    sc.B1 = 2;
    sc.B2 = 1;
    sc.rerank = false;
    sc.mode = crm::Mode::parallel;
    const auto beam = beam_sequence(text, sc, g, models);
    CHECK(beam.front().rows == greedy_sequence(text, 4, g, crm_ps));

    sc = SearchConfig{};
    sc.M = 4;
    sc.B1 = 5;
    sc.B2 = 3;
    for (auto mode : {crm::Mode::parallel, crm::Mode::adaptive}) {
      sc.mode = mode;
      sc.threads = 1;
      const auto a = beam_sequence(text, sc, g, models);
      sc.threads = 4;
      const auto b = beam_sequence(text, sc, g, models);
      REQUIRE(a.size() == 3);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(to_json(a[i]).dump() == to_json(b[i]).dump());
        CHECK(a[i].shot_ids.size() == 4);
        CHECK(std::set<std::uint64_t>(a[i].shot_ids.begin(), a[i].shot_ids.end()).size() == 4);
        if (i > 0) CHECK(!sequence_before(a[i], a[i - 1]));
      }
    }
  }
}

TEST_CASE("greedy, brute force and completion reductions") {
  const auto ps = constant_query_crm(1, 0);
  const auto g = tiny({11, 12, 13, 14}, {0.5f, 0, 0.9f, 0, 0.1f, 0, 0.8f, 0}, 2);
  const std::vector<std::uint32_t> text{2};
  CHECK(greedy_sequence(text, 1, g, ps) == std::vector<std::size_t>{1});
  CHECK(greedy_sequence(text, 3, g, ps) == std::vector<std::size_t>{1, 3, 0});
  CHECK_THROWS_AS(greedy_sequence(text, 5, g, ps), ValidationError);

  const auto one = tiny({42}, {0.3f, 0.3f}, 2);
  const auto only = brute_force_sequence(text, 1, one, {&ps, nullptr}, crm::Mode::parallel, false);
  CHECK(only.shot_ids == std::vector<std::uint64_t>{42});
  const auto best = brute_force_sequence(text, 2, g, {&ps, nullptr}, crm::Mode::parallel, false);
  CHECK(best.shot_ids == std::vector<std::uint64_t>{12, 14});
  Rng rng(3);
  const auto big = fixture::random_gallery(1001, 2, 4, 3, rng);
  CHECK_THROWS_AS(brute_force_sequence(text, 2, big, {&ps, nullptr}, crm::Mode::parallel, false), ValidationError);

  const auto c1 = complete_sequence(text, {}, one, {&ps, nullptr}, 1, crm::Mode::parallel, false);
  CHECK(c1.shot_id == 42);
  const std::vector<std::size_t> prefix{1};
  const auto c2 = complete_sequence(text, prefix, g, {&ps, nullptr}, 1, crm::Mode::adaptive, false);
  CHECK(c2.shot_id == 14);
  CHECK(c2.candidates.size() == 1);
}
