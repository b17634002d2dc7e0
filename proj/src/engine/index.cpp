#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "t2v/datagen/formats.hpp"
#include "t2v/engine/engine.hpp"

namespace t2v::engine {

using nlohmann::json;

void GalleryIndex::validate() const {
  const std::size_t n = shot_ids.size();
  if (embeds.rows() != n || raw_vis.rows() != n || raw_hist.rows() != n || video_ids.size() != n) {
    throw ValidationError("gallery index: banks are not row-aligned");
  }
  if (embeds.shape.size() != 2 || raw_vis.shape.size() != 2 || raw_hist.shape.size() != 2) {
    throw ValidationError("gallery index: banks must be matrices");
  }
}

GalleryIndex GalleryIndex::subset(std::span<const std::size_t> rows) const {
  GalleryIndex out;
  out.crm_checkpoint_hash = crm_checkpoint_hash;
  auto take = [&](const Tensor& src) {
    const std::size_t d = src.cols();
    Tensor t(Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = src.row(rows[i]);
      std::copy(r.begin(), r.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return t;
  };
  for (std::size_t r : rows) {
    if (r >= size()) throw ValidationError("gallery subset: row " + std::to_string(r) + " out of range");
    out.shot_ids.push_back(shot_ids[r]);
    out.video_ids.push_back(video_ids[r]);
  }
  out.embeds = take(embeds);
  out.raw_vis = take(raw_vis);
  out.raw_hist = take(raw_hist);
  return out;
}

GalleryIndex build_index(std::span<const data::ShotRecord> shots, const ParamSet& crm,
                         std::span<const std::size_t> rows, std::string crm_hash) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(shots.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  if (rows.empty()) throw ValidationError("build_index: empty gallery");
  const std::size_t d_v = crm.at("shot.w1").rows();
  for (std::size_t r : rows) {
    if (shots[r].feature.size() != d_v) {
      throw ValidationError("build_index: shot feature dim " + std::to_string(shots[r].feature.size()) +
                            " does not match checkpoint d_v=" + std::to_string(d_v));
    }
  }
  GalleryIndex idx;
  idx.crm_checkpoint_hash = std::move(crm_hash);
  idx.raw_vis = data::feature_matrix(shots, rows);
  idx.raw_hist = data::histogram_matrix(shots, rows);
  for (std::size_t r : rows) {
    idx.shot_ids.push_back(shots[r].shot_id);
    idx.video_ids.push_back(shots[r].video_id);
  }
  const std::size_t d_e = crm.at("shot.b2").size();
  idx.embeds = Tensor(Shape{rows.size(), d_e});
  // Rows are independent, so chunking does not change any value.
  constexpr std::size_t kChunk = 4096;
  for (std::size_t lo = 0; lo < rows.size(); lo += kChunk) {
    const std::size_t hi = std::min(rows.size(), lo + kChunk);
    Graph<float> g;
    Var x = g.input(hi - lo, d_v,
                    std::vector<float>(idx.raw_vis.data.begin() + static_cast<std::ptrdiff_t>(lo * d_v),
                                       idx.raw_vis.data.begin() + static_cast<std::ptrdiff_t>(hi * d_v)));
    std::vector<std::size_t> offsets(hi - lo + 1);
    for (std::size_t i = 0; i < offsets.size(); ++i) offsets[i] = i;
    Var e = crm::encode_shots(g, crm, x, std::move(offsets));
    std::copy(g.value(e).begin(), g.value(e).end(), idx.embeds.data.begin() + static_cast<std::ptrdiff_t>(lo * d_e));
  }
  return idx;
}

void save_index(const fs::path& dir, const GalleryIndex& index) {
  index.validate();
  fs::create_directories(dir);
  data::save_features(dir / "embeds.t2vf", index.embeds);
  data::save_features(dir / "vis.t2vf", index.raw_vis);
  data::save_features(dir / "hist.t2vf", index.raw_hist);
  {
    std::ofstream out(dir / "manifest.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "manifest.jsonl").string());
    for (std::size_t i = 0; i < index.size(); ++i) {
      out << json{{"shot_id", index.shot_ids[i]}, {"video_id", index.video_ids[i]}, {"row", i}}.dump() << '\n';
    }
  }
  std::ofstream out(dir / "index.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "index.json").string());
  out << json{{"dim", index.dim()}, {"count", index.size()}, {"crm_checkpoint_hash", index.crm_checkpoint_hash}}.dump(2)
      << '\n';
}

GalleryIndex load_index(const fs::path& dir) {
  std::ifstream desc_in(dir / "index.json");
  if (!desc_in) throw FormatError("missing index descriptor " + (dir / "index.json").string());
  json desc;
  try {
    desc = json::parse(desc_in);
  } catch (const json::exception& e) {
    throw FormatError("index.json: " + std::string(e.what()));
  }
  GalleryIndex idx;
  idx.embeds = data::load_features(dir / "embeds.t2vf");
  idx.raw_vis = data::load_features(dir / "vis.t2vf");
  idx.raw_hist = data::load_features(dir / "hist.t2vf");
  idx.crm_checkpoint_hash = desc.value("crm_checkpoint_hash", "");
  std::ifstream man(dir / "manifest.jsonl");
  if (!man) throw FormatError("missing " + (dir / "manifest.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (j.at("row").get<std::size_t>() != idx.shot_ids.size()) {
        throw FormatError("manifest.jsonl line " + std::to_string(lineno) + ": rows out of order");
      }
      idx.shot_ids.push_back(j.at("shot_id").get<std::uint64_t>());
      idx.video_ids.push_back(j.at("video_id").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError("manifest.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (desc.value("count", std::size_t{0}) != idx.size() || desc.value("dim", std::size_t{0}) != idx.dim()) {
    throw FormatError("index.json count/dim disagree with the stored banks");
  }
  idx.validate();
  return idx;
}

std::size_t default_threads() {
  if (const char* env = std::getenv("T2V_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.shot_id < b.shot_id;
}

double inner(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

namespace {

void scan(const GalleryIndex& index, std::span<const float> query, std::size_t k, std::span<const std::size_t> exclude,
          std::size_t lo, std::size_t hi, std::vector<Hit>& heap) {
  // heap keeps the current top-k with the worst hit at the front.
  const std::size_t d = index.dim();
  const float* base = index.embeds.data.data();
  for (std::size_t r = lo; r < hi; ++r) {
    if (!exclude.empty() && std::find(exclude.begin(), exclude.end(), r) != exclude.end()) continue;
    Hit h{r, index.shot_ids[r], inner(query, std::span<const float>(base + r * d, d))};
    if (heap.size() < k) {
      heap.push_back(h);
      std::push_heap(heap.begin(), heap.end(), hit_before);
    } else if (hit_before(h, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), hit_before);
      heap.back() = h;
      std::push_heap(heap.begin(), heap.end(), hit_before);
    }
  }
}

}  // namespace

std::vector<Hit> knn(const GalleryIndex& index, std::span<const float> query, std::size_t k,
                     std::span<const std::size_t> exclude, std::size_t threads) {
  if (k == 0) throw ValidationError("knn: k must be >= 1");
  if (query.size() != index.dim()) {
    throw ValidationError("knn: query dim " + std::to_string(query.size()) + " vs index dim " +
                          std::to_string(index.dim()));
  }
  const std::size_t n = index.size();
  threads = std::max<std::size_t>(1, std::min(threads, n / 4096 + 1));
  std::vector<std::vector<Hit>> parts(threads);
  if (threads == 1) {
    scan(index, query, k, exclude, 0, n, parts[0]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = n * t / threads, hi = n * (t + 1) / threads;
      pool.emplace_back([&, t, lo, hi] { scan(index, query, k, exclude, lo, hi, parts[t]); });
    }
    for (auto& th : pool) th.join();
  }
  // The comparator is a total order (ids are unique), so the merge does not
  // depend on how the rows were sharded.
  std::vector<Hit> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  std::sort(out.begin(), out.end(), hit_before);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace t2v::engine
