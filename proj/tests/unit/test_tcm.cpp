#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "support/fixtures.hpp"
#include "t2v/datagen/corpus.hpp"
#include "t2v/tcm/tcm.hpp"

using namespace t2v;
using namespace t2v::tcm;

namespace {

// Pearson χ² against a uniform expectation.
template <std::size_t N>
double chi2_uniform(const std::array<int, N>& counts) {
  int n = 0;
  for (int c : counts) n += c;
  const double e = static_cast<double>(n) / N;
  double x = 0;
  for (int c : counts) x += (c - e) * (c - e) / e;
  return x;
}

SequenceSample sample_of(std::size_t k, const std::string& video, Rng& rng) {
  auto s = fixture::random_sample(k, 4, 6, rng);
  s.video_id = video;
  s.label = DistortionKind::unchanged;
  return s;
}

std::vector<data::ShotRecord> donors(Rng& rng) {
  std::vector<data::ShotRecord> out;
  for (int i = 0; i < 5; ++i) {
    data::ShotRecord r;
    r.shot_id = 100 + i;
    r.video_id = i < 2 ? "same" : "other";
    const auto f = fixture::random_matrix(1, 4, rng);
    const auto h = fixture::random_histograms(1, 6, rng);
    r.feature = f.data;
    r.histogram = h.data;
    out.push_back(r);
  }
  return out;
}

std::size_t rows_changed(const Tensor& a, const Tensor& b) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (!std::equal(a.row(r).begin(), a.row(r).end(), b.row(r).begin())) ++n;
  }
  return n;
}

data::Corpus small_corpus(std::uint64_t seed) {
  data::PlantedCorpusConfig cfg;
  cfg.n_videos = 10;
  cfg.seed = seed;
  return data::generate_corpus(cfg);
}

}  // namespace

TEST_CASE("sample_distortion") {
  Rng rng(1);
  const std::vector<double> only_unchanged{1, 0, 0};
  for (int i = 0; i < 100; ++i) CHECK(sample_distortion(rng, only_unchanged) == DistortionKind::unchanged);
  const std::vector<double> two{0.5, 0.5};
  for (int i = 0; i < 1000; ++i) CHECK(sample_distortion(rng, two) != DistortionKind::color_jitter);
  const std::vector<double> three{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<int, 3> counts{};
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<std::size_t>(sample_distortion(rng, three))];
  CHECK(chi2_uniform(counts) < 9.210);  // df 2, p = 0.01
  CHECK_THROWS_AS(sample_distortion(rng, std::vector<double>{0.5, 0.6}), ConfigError);
  CHECK_THROWS_AS(sample_distortion(rng, std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("k_max is half the sequence") {
  CHECK(k_max(2) == 1);
  CHECK(k_max(3) == 1);
  CHECK(k_max(10) == 5);
}

TEST_CASE("shot replacement") {
  Rng rng(2);
  const auto pool = donors(rng);
  const auto s = sample_of(3, "same", rng);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::size_t> pos;
    const auto d = apply_shot_replacement(s, pool, 1, rng, &pos);
    CHECK(d.label == DistortionKind::shot_replacement);
    CHECK(d.length() == 3);
    CHECK(rows_changed(s.vis, d.vis) == 1);
    CHECK(rows_changed(s.hist, d.hist) == 1);
    REQUIRE(pos.size() == 1);
    // Only donors from another video may be used.
    const auto row = d.vis.row(pos[0]);
    bool from_other = false;
    for (const auto& r : pool) from_other |= r.video_id == "other" && std::equal(row.begin(), row.end(), r.feature.begin());
    CHECK(from_other);
  }
  const auto two = sample_of(2, "same", rng);
  CHECK_THROWS_AS(apply_shot_replacement(two, pool, 2, rng), ValidationError);
  CHECK_THROWS_AS(apply_shot_replacement(two, pool, 0, rng), ValidationError);
  CHECK_THROWS_AS(apply_shot_replacement(two, std::span<const data::ShotRecord>(), 1, rng), ValidationError);

  std::array<int, 4> where{};
  const auto four = sample_of(4, "same", rng);
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::size_t> pos;
    apply_shot_replacement(four, pool, 1, rng, &pos);
    ++where[pos[0]];
  }
  CHECK(chi2_uniform(where) < 11.345);  // df 3, p = 0.01
}

TEST_CASE("color jitter") {
  Rng rng(3);
  const auto s = sample_of(6, "v", rng);
  std::array<int, 5> perms{};
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::size_t> pos;
    int perm = -1;
    const std::size_t k = 1 + (i % 3);
    const auto d = apply_color_jitter(s, k, rng, &pos, &perm);
    REQUIRE(perm >= 0);
    ++perms[static_cast<std::size_t>(perm)];
    if (i < 200) {
      CHECK(d.label == DistortionKind::color_jitter);
      CHECK(d.vis == s.vis);
      CHECK(rows_changed(s.hist, d.hist) == k);
      for (std::size_t r = 0; r < d.length(); ++r) {
        for (int b = 0; b < 3; ++b) {
          double z = 0;
          for (int j = 0; j < 2; ++j) {
            CHECK(d.hist(r, b * 2 + j) >= 0.0f);
            z += d.hist(r, b * 2 + j);
          }
          CHECK(std::abs(z - 1) < 1e-6);
        }
      }
    }
  }
  CHECK(chi2_uniform(perms) < 13.277);  // df 4, p = 0.01
  for (const auto& p : channel_permutations()) CHECK(p != (std::array<int, 3>{0, 1, 2}));
  CHECK_THROWS_AS(apply_color_jitter(s, 4, rng), ValidationError);
  auto odd = s;
  odd.hist = Tensor({6, 4}, 0.25f);
  CHECK_THROWS_AS(apply_color_jitter(odd, 1, rng), ValidationError);
}

TEST_CASE("stretch_block keeps mass and identity scale") {
  const std::vector<float> block{0.1f, 0.2f, 0.3f, 0.4f};
  const auto same = stretch_block(block, 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == doctest::Approx(block[i]).epsilon(1e-6));
  for (double s : {0.6, 0.9, 1.4}) {
    const auto out = stretch_block(block, s);
    double z = 0;
    for (double x : out) {
      CHECK(x >= 0);
      z += x;
    }
    CHECK(std::abs(z - 1) < 1e-9);
  }
}

TEST_CASE("temporal_prior") {
  const auto same = Tensor64::matrix(3, 2, {1, 2, 1, 2, 1, 2});
  const auto kept = temporal_prior(same);
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(kept.data[i] == doctest::Approx(same.data[i]).epsilon(1e-15));
  const auto single = Tensor64::matrix(1, 2, {3, -1});
  CHECK(temporal_prior(single) == single);
  const auto ortho = Tensor64::matrix(3, 2, {1, 0, 0, 1, 1, 0});
  const auto out = temporal_prior(ortho);
  CHECK(out(1, 0) == 0.0);
  CHECK(out(1, 1) == 0.0);
  Rng rng(4);
  Tensor64 x({5, 3});
  for (auto& v : x.data) v = rng.normal();
  auto scaled = x;
  for (auto& v : scaled.data) v *= 2.5;
  const auto a = temporal_prior(x), b = temporal_prior(scaled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-12));
}

TEST_CASE("lstm gate arithmetic") {
  ParamSet64 ps;
  ps.add("x.l0.wx", Tensor64::matrix(1, 4, {0.5, -0.3, 0.8, 1.1}));
  ps.add("x.l0.wh", Tensor64::matrix(1, 4, {0.2, 0.4, -0.6, 0.7}));
  ps.add("x.l0.b", Tensor64::vector({0.1, 0.2, -0.1, 0.05}));
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double x0 = 0.7, x1 = -1.3;
  const double i0 = sig(0.5 * x0 + 0.1), f0 = sig(-0.3 * x0 + 0.2), o0 = sig(0.8 * x0 - 0.1),
               g0 = std::tanh(1.1 * x0 + 0.05);
  const double c0 = i0 * g0, h0 = o0 * std::tanh(c0);
  const double i1 = sig(0.5 * x1 + 0.2 * h0 + 0.1), f1 = sig(-0.3 * x1 + 0.4 * h0 + 0.2),
               o1 = sig(0.8 * x1 - 0.6 * h0 - 0.1), g1 = std::tanh(1.1 * x1 + 0.7 * h0 + 0.05);
  const double c1 = f1 * c0 + i1 * g1, h1 = o1 * std::tanh(c1);
  (void)f0;
  const auto out = lstm_forward(Tensor64::matrix(2, 1, {x0, x1}), ps, "x", 1);
  REQUIRE(out.rows() == 2);
  CHECK(out(0, 0) == doctest::Approx(h0).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(h1).epsilon(1e-12));

  const auto zero = zero_params(TcmConfig{}).cast<double>();
  Rng rng(5);
  Tensor64 seq({4, 32});
  for (auto& v : seq.data) v = rng.normal();
  const auto h = lstm_forward(seq, zero, "lstm_vis", 2);
  CHECK(h.rows() == 4);
  for (double v : h.data) CHECK(v == 0.0);
}

TEST_CASE("score_sequence") {
  const TcmConfig cfg;
  Rng rng(6);
  const auto s = sample_of(4, "v", rng);
  SequenceSample big;
  big.vis = fixture::random_matrix(4, 32, rng);
  big.hist = fixture::random_histograms(4, 24, rng);
  const auto untrained = score_sequence(big, init_params(cfg, 1));
  for (double p : untrained.probs) CHECK(p == doctest::Approx(1.0 / 3));
  CHECK(score_sequence(big, zero_params(cfg)).coherence == doctest::Approx(1.0 / 3));

  ParamSet ps = init_params(cfg, 2);
  fixture::randomize(ps, rng);
  const auto a = score_sequence(big, ps);
  double z = 0;
  for (double p : a.probs) {
    CHECK(p > 0);
    CHECK(p < 1);
    z += p;
  }
  CHECK(std::abs(z - 1) < 1e-6);
  CHECK(a.coherence == a.probs[0]);
  CHECK(score_sequence(big, ps).probs == a.probs);

  SequenceSample one;
  one.vis = fixture::random_matrix(1, 32, rng);
  one.hist = fixture::random_histograms(1, 24, rng);
  CHECK(score_sequence(one, ps).coherence == 1.0);

  // Batched scoring groups by length but must agree with one-at-a-time.
  std::vector<SequenceSample> mixed;
  for (std::size_t k : {3, 5, 3, 2, 5}) {
    SequenceSample m;
    m.vis = fixture::random_matrix(k, 32, rng);
    m.hist = fixture::random_histograms(k, 24, rng);
    mixed.push_back(m);
  }
  const auto batch = score_batch(mixed, ps);
  REQUIRE(batch.size() == mixed.size());
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    CHECK(batch[i].coherence == doctest::Approx(score_sequence(mixed[i], ps).coherence).epsilon(1e-6));
  }

  auto bad = big;
  bad.hist = fixture::random_histograms(3, 24, rng);
  CHECK_THROWS_AS(score_sequence(bad, ps), ValidationError);
  (void)s;
}

TEST_CASE("train_tcm: loss falls, reproducible, profile shapes") {
  int decreased = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto corpus = small_corpus(seed);
    const auto videos = corpus.video_ids();
    TcmTrainConfig t;
    t.steps = 50;
    t.warmup_steps = 5;
    t.log_every = 10;
    t.seed = seed;
    const auto res = train_tcm(TcmConfig{}, t, corpus.shots, videos);
    REQUIRE(res.log.size() >= 2);
    decreased += res.log.back().loss < res.log.front().loss ? 1 : 0;
    if (seed == 1) {
      CHECK(train_tcm(TcmConfig{}, t, corpus.shots, videos).params == res.params);
      check_params(res.params, TcmConfig{});
    }
  }
  CHECK(decreased >= 4);

  const auto full = init_params(TcmConfig::full(3), 1);
  CHECK(full.at("mlp.w1").shape == Shape{896, 128});
  CHECK(full.at("mlp.w2").shape == Shape{128, 3});
  CHECK(full.at("lstm_vis.l0.wx").shape == Shape{512, 2048});
  CHECK(full.at("lstm_hist.l1.wh").shape == Shape{384, 1536});
  CHECK(init_params(TcmConfig::full(2), 1).at("mlp.w2").shape == Shape{128, 2});

  TcmTrainConfig two;
  two.distortions = {DistortionKind::shot_replacement};
  CHECK(two.n_classes() == 2);
  CHECK(parse_distortion("jitter") == DistortionKind::color_jitter);
  CHECK_THROWS_AS(parse_distortion("blur"), ConfigError);
}
