#include "t2v/datagen/formats.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace t2v::data {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::string bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

  template <typename U>
  U get(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>("payload")); }

  std::string get_bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic(const char* magic) {
    if (bytes_.size() < 4 || std::memcmp(bytes_.data(), magic, 4) != 0) {
      throw FormatError(what_ + ": bad magic at offset 0");
    }
    pos_ = 4;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    throw FormatError(what_ + ": " + msg + " at offset " + std::to_string(offset));
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated ") + field, pos_);
  }

  std::string bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

template <typename F>
void for_each_line(const fs::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void write_lines(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace

void save_features(const fs::path& path, const Tensor& bank) {
  const std::size_t count = bank.rank() >= 2 ? bank.shape[0] : (bank.size() ? 1 : 0);
  const std::size_t dim = bank.rank() >= 2 ? bank.shape[1] : bank.size();
  if (count * dim != bank.size()) throw ValidationError("save_features: bank must be a count x dim matrix");
  std::string out = "T2VF";
  put_le<std::uint32_t>(out, kFeatureBankVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint64_t>(out, count);
  out.reserve(out.size() + 4 * bank.size());
  for (float f : bank.data) put_f32(out, f);
  write_file(path, out);
}

Tensor load_features(const fs::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic("T2VF");
  const std::size_t vpos = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureBankVersion) r.fail("unsupported version " + std::to_string(version), vpos);
  const auto dim = r.get<std::uint32_t>("dim");
  const auto count = r.get<std::uint64_t>("count");
  const std::size_t payload = r.pos();
  if (dim == 0 && count != 0) r.fail("zero dim with non-empty bank", payload - 12);
  if (count != 0 && r.remaining() / 4 / dim < count) r.fail("truncated payload", payload + r.remaining());
  if (r.remaining() != 4 * count * dim) r.fail("trailing bytes after payload", payload + 4 * count * dim);
  Tensor bank(Shape{static_cast<std::size_t>(count), dim});
  for (auto& f : bank.data) f = r.get_f32();
  return bank;
}

void save_checkpoint(const fs::path& path, const ParamSet& params, const nlohmann::json& config) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) throw NumericError("save_checkpoint: non-finite values in '" + name + "'");
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += 4 * t.size();
  }
  const json header = {{"tensors", tensors}, {"config", config}, {"param_version", params.version}};
  const std::string h = header.dump();
  std::string out = "T2VC";
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& [name, t] : params) {
    for (float f : t.data) put_f32(out, f);
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const fs::path& path) {
  Reader r(read_file(path), path.string());
  r.expect_magic("T2VC");
  const std::size_t vpos = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unknown checkpoint version " + std::to_string(version), vpos);
  const auto header_len = r.get<std::uint32_t>("header_len");
  const std::size_t hpos = r.pos();
  json header;
  try {
    header = json::parse(r.get_bytes(header_len, "header"));
  } catch (const json::exception& e) {
    r.fail(std::string("malformed header (") + e.what() + ")", hpos);
  }
  const std::size_t payload = r.pos();
  Checkpoint ck;
  ck.config = header.value("config", json::object());
  ck.params.version = header.value("param_version", 1);
  std::uint64_t expected = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name");
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset");
    if (offset != expected) r.fail("tensor '" + name + "' payload offset mismatch", payload + offset);
    if (ck.params.contains(name)) r.fail("tensor name collision '" + name + "'", hpos);
    const std::size_t n = shape_size(shape);
    if (r.remaining() < 4 * n) r.fail("payload too short for tensor '" + name + "'", r.pos());
    Tensor t(shape);
    for (auto& f : t.data) f = r.get_f32();
    ck.params.add(name, std::move(t));
    expected += 4 * n;
  }
  if (r.remaining() != 0) r.fail("payload length mismatch (" + std::to_string(r.remaining()) + " extra bytes)", r.pos());
  return ck;
}

std::string file_hash(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_shot_manifest(const fs::path& path, const std::vector<ShotRecord>& shots) {
  std::vector<json> rows;
  rows.reserve(shots.size());
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const auto& s = shots[i];
    rows.push_back({{"shot_id", s.shot_id},
                    {"video_id", s.video_id},
                    {"start_s", static_cast<float>(s.start_s)},
                    {"end_s", static_cast<float>(s.end_s)},
                    {"feature_row", i},
                    {"hist_row", i}});
  }
  write_lines(path, rows);
}

std::vector<ManifestRow> read_shot_manifest(const fs::path& path) {
  std::vector<ManifestRow> out;
  for_each_line(path, [&](const json& j) {
    ManifestRow r;
    r.shot_id = j.at("shot_id");
    r.video_id = j.at("video_id");
    r.start_s = j.at("start_s").get<float>();
    r.end_s = j.at("end_s").get<float>();
    r.feature_row = j.at("feature_row");
    r.hist_row = j.at("hist_row");
    if (!(r.end_s > r.start_s)) throw ValidationError("shot " + std::to_string(r.shot_id) + ": end_s <= start_s");
    out.push_back(std::move(r));
  });
  return out;
}

void write_transcripts(const fs::path& path, const std::vector<TranscriptChunk>& chunks) {
  std::vector<json> rows;
  rows.reserve(chunks.size());
  for (const auto& c : chunks) {
    rows.push_back({{"video_id", c.video_id},
                    {"start_s", static_cast<float>(c.start_s)},
                    {"end_s", static_cast<float>(c.end_s)},
                    {"text", c.text}});
  }
  write_lines(path, rows);
}

std::vector<TranscriptChunk> read_transcripts(const fs::path& path, std::uint32_t vocab_size) {
  std::vector<TranscriptChunk> out;
  for_each_line(path, [&](const json& j) {
    TranscriptChunk c;
    c.video_id = j.at("video_id");
    c.start_s = j.at("start_s").get<float>();
    c.end_s = j.at("end_s").get<float>();
    c.text = j.at("text");
    c.tokens = tokenize(c.text, vocab_size);
    if (c.tokens.empty()) throw ValidationError("transcript chunk with no tokens in " + c.video_id);
    out.push_back(std::move(c));
  });
  return out;
}

json config_to_json(const PlantedCorpusConfig& c) {
  return {{"n_concepts", c.n_concepts},     {"d_v", c.d_v},
          {"d_h", c.d_h},                   {"n_videos", c.n_videos},
          {"shots_per_video", c.shots_per_video}, {"style_drift", c.style_drift},
          {"misalign_prob", c.misalign_prob}, {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},                 {"vocab_size", c.vocab_size},
          {"clip_len_min", c.clip_len_min}, {"clip_len_max", c.clip_len_max},
          {"concepts_per_clip", c.concepts_per_clip}};
}

PlantedCorpusConfig config_from_json(const json& j) {
  PlantedCorpusConfig c;
  c.n_concepts = j.value("n_concepts", c.n_concepts);
  c.d_v = j.value("d_v", c.d_v);
  c.d_h = j.value("d_h", c.d_h);
  c.n_videos = j.value("n_videos", c.n_videos);
  c.shots_per_video = j.value("shots_per_video", c.shots_per_video);
  c.style_drift = j.value("style_drift", c.style_drift);
  c.misalign_prob = j.value("misalign_prob", c.misalign_prob);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.clip_len_min = j.value("clip_len_min", c.clip_len_min);
  c.clip_len_max = j.value("clip_len_max", c.clip_len_max);
  c.concepts_per_clip = j.value("concepts_per_clip", c.concepts_per_clip);
  return c;
}

void save_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  std::vector<std::size_t> all(corpus.shots.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Tensor vis = feature_matrix(corpus.shots, all);
  Tensor hist = histogram_matrix(corpus.shots, all);
  if (corpus.shots.empty()) {
    vis = Tensor(Shape{0, corpus.config.d_v});
    hist = Tensor(Shape{0, corpus.config.d_h});
  }
  save_features(dir / "vis.t2vf", vis);
  save_features(dir / "hist.t2vf", hist);
  write_shot_manifest(dir / "shots.jsonl", corpus.shots);
  write_transcripts(dir / "transcripts.jsonl", corpus.transcripts);
  std::vector<json> clips;
  for (const auto& c : corpus.clips) {
    std::vector<std::uint64_t> ids;
    for (std::size_t s : c.shots) ids.push_back(corpus.shots[s].shot_id);
    clips.push_back({{"clip_id", c.clip_id}, {"video_id", c.video_id}, {"shot_ids", ids}});
  }
  write_lines(dir / "clips.jsonl", clips);
  const json truth = {{"config", config_to_json(corpus.config)},
                      {"shot_concept", corpus.truth.shot_concept},
                      {"clip_text_source", corpus.truth.clip_text_source}};
  write_file(dir / "truth.json", truth.dump() + "\n");
}

Corpus load_corpus(const fs::path& dir) {
  Corpus corpus;
  const json truth = json::parse(read_file(dir / "truth.json"));
  corpus.config = config_from_json(truth.at("config"));
  corpus.truth.shot_concept = truth.at("shot_concept").get<std::vector<std::uint32_t>>();
  corpus.truth.clip_text_source = truth.at("clip_text_source").get<std::vector<std::size_t>>();

  const Tensor vis = load_features(dir / "vis.t2vf");
  const Tensor hist = load_features(dir / "hist.t2vf");
  const auto rows = read_shot_manifest(dir / "shots.jsonl");
  std::map<std::uint64_t, std::size_t> index_of;
  for (const auto& r : rows) {
    if (r.feature_row >= vis.rows() || r.hist_row >= hist.rows()) {
      throw FormatError("shot " + std::to_string(r.shot_id) + " references a row beyond the feature bank");
    }
    if (!index_of.emplace(r.shot_id, corpus.shots.size()).second) {
      throw ValidationError("duplicate shot_id " + std::to_string(r.shot_id));
    }
    ShotRecord s;
    s.shot_id = r.shot_id;
    s.video_id = r.video_id;
    s.start_s = r.start_s;
    s.end_s = r.end_s;
    auto fr = vis.row(r.feature_row);
    auto hr = hist.row(r.hist_row);
    s.feature.assign(fr.begin(), fr.end());
    s.histogram.assign(hr.begin(), hr.end());
    corpus.shots.push_back(std::move(s));
  }
  corpus.transcripts = read_transcripts(dir / "transcripts.jsonl", corpus.config.vocab_size);
  for_each_line(dir / "clips.jsonl", [&](const json& j) {
    ClipSpec c;
    c.clip_id = j.at("clip_id");
    c.video_id = j.at("video_id");
    for (std::uint64_t id : j.at("shot_ids").get<std::vector<std::uint64_t>>()) {
      auto it = index_of.find(id);
      if (it == index_of.end()) throw ValidationError("clip references unknown shot " + std::to_string(id));
      c.shots.push_back(it->second);
    }
    corpus.clips.push_back(std::move(c));
  });
  return corpus;
}

}  // namespace t2v::data
