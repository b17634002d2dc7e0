#include <algorithm>
#include <chrono>
#include <cmath>

#include "t2v/evalkit/evalkit.hpp"

namespace t2v::eval {

engine::GalleryIndex synthetic_gallery(std::size_t n, const ParamSet& crm, const ParamSet& tcm, std::uint64_t seed) {
  const std::size_t d_e = crm.at("shot.b2").size();
  const std::size_t d_v = crm.at("shot.w1").rows();
  const std::size_t d_h = tcm.at("lstm_hist.l0.wx").rows();
  if (d_h % 3 != 0) throw ValidationError("synthetic_gallery: histogram dim not divisible by 3");
  Rng rng = Rng::derive(seed, n);
  engine::GalleryIndex g;
  g.embeds = Tensor(Shape{n, d_e});
  g.raw_vis = Tensor(Shape{n, d_v});
  g.raw_hist = Tensor(Shape{n, d_h});
  const double s = 1.0 / std::sqrt(static_cast<double>(d_e));
  for (auto& x : g.embeds.data) x = static_cast<float>(s * rng.normal());
  for (auto& x : g.raw_vis.data) x = static_cast<float>(rng.normal());
  const std::size_t nb = d_h / 3;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      float* b = g.raw_hist.data.data() + i * d_h + c * nb;
      double total = 0;
      for (std::size_t j = 0; j < nb; ++j) total += b[j] = static_cast<float>(0.01 + rng.uniform());
      for (std::size_t j = 0; j < nb; ++j) b[j] = static_cast<float>(b[j] / total);
    }
  }
  g.shot_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.shot_ids[i] = i;
  g.video_ids.assign(n, "synthetic");
  return g;
}

BenchReport bench_runtime(const BenchConfig& cfg, const ParamSet& crm, const ParamSet& tcm,
                          const std::function<void(const BenchRow&)>& progress) {
  if (cfg.M < 1) throw ValidationError("bench: M must be >= 1");
  if (cfg.queries < 1) throw ValidationError("bench: need at least one query per size");
  if (cfg.sizes.size() < 2) throw ValidationError("bench: need at least two gallery sizes for a fit");
  engine::SearchConfig sc;
  sc.M = cfg.M;
  sc.B1 = cfg.B1;
  sc.B2 = cfg.B2;
  sc.mode = crm::Mode::adaptive;
  sc.rerank = true;
  sc.threads = 1;
  sc.validate();
  const engine::Models models{&crm, &tcm};
  const auto vocab = static_cast<std::uint32_t>(crm.at("text.embed").rows());

  Rng qrng = Rng::derive(cfg.seed, 0xbe7c);
  std::vector<std::vector<std::uint32_t>> queries(cfg.queries);
  for (auto& q : queries) {
    const auto len = static_cast<std::size_t>(qrng.range(1, 8));
    for (std::size_t i = 0; i < len; ++i) q.push_back(static_cast<std::uint32_t>(qrng.below(vocab)));
  }

  BenchReport rep;
  for (std::size_t n : cfg.sizes) {
    if (n < cfg.M) throw ValidationError("bench: gallery size below M");
    const auto gallery = synthetic_gallery(n, crm, tcm, cfg.seed);
    engine::beam_sequence(queries[0], sc, gallery, models);  // warm caches
    std::vector<double> ms;
    for (const auto& q : queries) {
      const auto t0 = std::chrono::steady_clock::now();
      engine::beam_sequence(q, sc, gallery, models);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    BenchRow row;
    row.n = n;
    const std::size_t m = ms.size();
    row.ms_median = m % 2 ? ms[m / 2] : 0.5 * (ms[m / 2 - 1] + ms[m / 2]);
    row.ms_p90 = ms[std::min(m - 1, static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(m))) - 1)];
    rep.rows.push_back(row);
    if (progress) progress(row);
  }
  std::vector<double> x, y;
  for (const auto& r : rep.rows) {
    x.push_back(static_cast<double>(r.n));
    y.push_back(r.ms_median);
  }
  const auto fit = linear_fit(x, y);
  rep.intercept = fit[0];
  rep.slope = fit[1];
  rep.r2 = fit[2];
  for (const auto& a : rep.rows) {
    for (const auto& b : rep.rows) {
      if (a.n >= 100000 && b.n == 2 * a.n) rep.doubling.emplace_back(a.n, b.ms_median / a.ms_median);
    }
  }
  return rep;
}

}  // namespace t2v::eval
