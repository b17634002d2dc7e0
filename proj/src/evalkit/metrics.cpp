#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "t2v/evalkit/evalkit.hpp"

namespace t2v::eval {

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw ValidationError("recall_at_k: no ranks");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ValidationError("median_rank: no ranks");
  std::vector<std::size_t> r(ranks.begin(), ranks.end());
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  if (n % 2 == 1) return static_cast<double>(r[n / 2]);
  return 0.5 * (static_cast<double>(r[n / 2 - 1]) + static_cast<double>(r[n / 2]));
}

nlohmann::json RankingResult::to_json(std::span<const std::size_t> ks) const {
  static const std::size_t defaults[] = {1, 10, 50};
  if (ks.empty()) ks = defaults;
  nlohmann::json j;
  for (std::size_t k : ks) j["R@" + std::to_string(k)] = recall(k);
  j["MedR"] = medr();
  j["queries"] = ranks.size();
  j["candidates"] = n_candidates;
  return j;
}

std::size_t rank_of(std::span<const double> scores, std::size_t gt) {
  if (gt >= scores.size()) throw ValidationError("rank_of: ground truth index out of range");
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[gt] || (scores[j] == scores[gt] && j < gt)) ++rank;
  }
  return rank;
}

double aop_k(std::span<const std::uint64_t> gen, std::span<const std::uint64_t> gt, std::size_t k) {
  if (k == 0 || k > gen.size() || k > gt.size()) {
    throw ValidationError("aop_k: k=" + std::to_string(k) + " must lie in [1, " +
                          std::to_string(std::min(gen.size(), gt.size())) + "]");
  }
  using Window = std::vector<std::uint64_t>;
  std::map<Window, std::size_t> pool;
  const std::size_t n_u = gt.size() - k + 1, n_s = gen.size() - k + 1;
  for (std::size_t i = 0; i < n_u; ++i) ++pool[Window(gt.begin() + static_cast<std::ptrdiff_t>(i),
                                                      gt.begin() + static_cast<std::ptrdiff_t>(i + k))];
  std::size_t matched = 0;
  for (std::size_t i = 0; i < n_s; ++i) {
    auto it = pool.find(Window(gen.begin() + static_cast<std::ptrdiff_t>(i), gen.begin() + static_cast<std::ptrdiff_t>(i + k)));
    if (it != pool.end() && it->second > 0) {
      --it->second;
      ++matched;
    }
  }
  const double s = static_cast<double>(n_s), u = static_cast<double>(n_u);
  return static_cast<double>(matched) / s * std::min(1.0, s / u);
}

nlohmann::json AopReport::to_json() const {
  return {{"Recall", recall}, {"AOP-1", aop[0]}, {"AOP-2", aop[1]}, {"AOP-3", aop[2]},
          {"AOP-S", aop_s},   {"instances", instances}, {"skipped", skipped}};
}

nlohmann::json CompletionReport::to_json() const {
  return {{"accuracy", accuracy}, {"instances", instances}, {"skipped", skipped}, {"random", random_baseline}};
}

nlohmann::json DistortionReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    per[tcm::to_string(static_cast<tcm::DistortionKind>(c))] = per_class[c];
  }
  return {{"overall", overall}, {"per_class", per}, {"counts", counts}};
}

std::array<double, 3> linear_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ValidationError("linear_fit: need at least two paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw ValidationError("linear_fit: x values are all equal");
  const double b = sxy / sxx, a = my - b * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (a + b * x[i]);
    ss_res += e * e;
  }
  const double r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return {a, b, r2};
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) rows_j.push_back({{"N", r.n}, {"ms_median", r.ms_median}, {"ms_p90", r.ms_p90}});
  nlohmann::json dbl = nlohmann::json::array();
  for (const auto& [n, ratio] : doubling) dbl.push_back({{"N", n}, {"ratio", ratio}});
  return {{"rows", rows_j}, {"fit", {{"intercept_ms", intercept}, {"ms_per_shot", slope}, {"r2", r2}}}, {"doubling", dbl}};
}

std::string BenchReport::csv() const {
  std::ostringstream out;
  out << "N,ms_median,ms_p90\n";
  for (const auto& r : rows) out << r.n << ',' << r.ms_median << ',' << r.ms_p90 << '\n';
  return out.str();
}

}  // namespace t2v::eval
