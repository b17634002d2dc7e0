#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace t2v::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

// Cursor over one line's value text.
struct ValueParser {
  std::string_view s;
  std::size_t pos = 0;
  std::string error;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  bool scalar(nlohmann::json& out) {
    skip_ws();
    if (pos >= s.size()) return fail("missing value");
    if (s[pos] == '"') return string(out);
    std::size_t end = pos;
    while (end < s.size() && s[end] != ',' && s[end] != ']' && !std::isspace(static_cast<unsigned char>(s[end]))) {
      ++end;
    }
    std::string tok(s.substr(pos, end - pos));
    pos = end;
    if (tok == "true" || tok == "false") {
      out = tok == "true";
      return true;
    }
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits += c;
    }
    if (digits.empty()) return fail("missing value");
    const bool floating = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    if (!floating) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec == std::errc() && p == digits.data() + digits.size()) {
        out = v;
        return true;
      }
      return fail("cannot parse '" + tok + "' (strings need double quotes)");
    }
    double v = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc() || p != digits.data() + digits.size()) return fail("cannot parse number '" + tok + "'");
    out = v;
    return true;
  }

  bool string(nlohmann::json& out) {
    ++pos;
    std::string v;
    while (pos < s.size() && s[pos] != '"') {
      char c = s[pos++];
      if (c == '\\') {
        if (pos >= s.size()) break;
        const char e = s[pos++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: return fail(std::string("unknown escape \\") + e);
        }
      }
      v += c;
    }
    if (pos >= s.size()) return fail("unterminated string");
    ++pos;
    out = v;
    return true;
  }

  bool value(nlohmann::json& out) {
    skip_ws();
    if (pos < s.size() && s[pos] == '[') {
      ++pos;
      out = nlohmann::json::array();
      skip_ws();
      if (pos < s.size() && s[pos] == ']') {
        ++pos;
        return true;
      }
      for (;;) {
        nlohmann::json item;
        if (!scalar(item)) return false;
        out.push_back(std::move(item));
        skip_ws();
        if (pos < s.size() && s[pos] == ',') {
          ++pos;
          skip_ws();
          if (pos < s.size() && s[pos] == ']') {
            ++pos;
            return true;
          }
          continue;
        }
        if (pos < s.size() && s[pos] == ']') {
          ++pos;
          return true;
        }
        return fail("expected ',' or ']' in array");
      }
    }
    return scalar(out);
  }

  bool fail(std::string msg) {
    error = std::move(msg);
    return false;
  }
};

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_str) {
      ++i;
      continue;
    }
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

template <typename U>
U to_unsigned(std::int64_t v, bool& ok) {
  ok = v >= 0 && static_cast<std::uint64_t>(v) <= std::numeric_limits<U>::max();
  return static_cast<U>(v);
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& source) {
  ConfigDoc doc;
  doc.source_ = source;
  std::istringstream in(text);
  std::string raw, section;
  int lineno = 0;
  auto err = [&](const std::string& msg) { throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') err("section header must end with ']'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!is_ident(section)) err("bad section name '" + section + "'");
      doc.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) err("expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!is_ident(key)) err("bad key '" + key + "'");
    if (section.empty()) err("key '" + key + "' appears before any [section]");
    ValueParser vp{std::string_view(line).substr(eq + 1), 0, {}};
    nlohmann::json v;
    if (!vp.value(v)) err(vp.error);
    vp.skip_ws();
    if (vp.pos != vp.s.size()) err("unexpected text after value");
    auto& sec = doc.sections_[section];
    if (sec.count(key)) {
      err("duplicate key '" + key + "' (first set on line " + std::to_string(sec[key].line) + ")");
    }
    sec[key] = ConfigValue{std::move(v), lineno};
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool ConfigDoc::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key);
}

const ConfigValue& ConfigDoc::get(const std::string& section, const std::string& key) const {
  return sections_.at(section).at(key);
}

void ConfigDoc::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [sec, keys] : sections_) {
    for (const auto& [key, v] : keys) {
      const std::string full = sec + "." + key;
      if (std::find(known.begin(), known.end(), full) == known.end()) {
        throw ConfigError(source_ + ":" + std::to_string(v.line) + ": unknown key '" + full + "'");
      }
    }
  }
}

void ConfigDoc::fail(const ConfigValue& v, const std::string& section, const std::string& key,
                     const std::string& what) const {
  throw ConfigError(source_ + ":" + std::to_string(v.line) + ": " + section + "." + key + " " + what);
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::string& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_string()) fail(v, section, key, "must be a string");
  out = v.value.get<std::string>();
}

void ConfigDoc::read(const std::string& section, const std::string& key, bool& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_boolean()) fail(v, section, key, "must be true or false");
  out = v.value.get<bool>();
}

void ConfigDoc::read(const std::string& section, const std::string& key, double& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_number()) fail(v, section, key, "must be a number");
  out = v.value.get<double>();
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::int64_t& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_number_integer()) fail(v, section, key, "must be an integer");
  out = v.value.get<std::int64_t>();
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::uint64_t& out) const {
  std::int64_t x = 0;
  if (!has(section, key)) return;
  read(section, key, x);
  bool ok = false;
  out = to_unsigned<std::uint64_t>(x, ok);
  if (!ok) fail(get(section, key), section, key, "must be a non-negative integer");
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::uint32_t& out) const {
  std::int64_t x = 0;
  if (!has(section, key)) return;
  read(section, key, x);
  bool ok = false;
  out = to_unsigned<std::uint32_t>(x, ok);
  if (!ok) fail(get(section, key), section, key, "must fit in an unsigned 32-bit integer");
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::vector<std::int64_t>& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_array()) fail(v, section, key, "must be an array of integers");
  std::vector<std::int64_t> r;
  for (const auto& x : v.value) {
    if (!x.is_number_integer()) fail(v, section, key, "must be an array of integers");
    r.push_back(x.get<std::int64_t>());
  }
  out = std::move(r);
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::vector<std::size_t>& out) const {
  std::vector<std::int64_t> r;
  if (!has(section, key)) return;
  read(section, key, r);
  out.clear();
  for (auto x : r) {
    if (x < 0) fail(get(section, key), section, key, "entries must be non-negative");
    out.push_back(static_cast<std::size_t>(x));
  }
}

void ConfigDoc::read(const std::string& section, const std::string& key, std::vector<std::string>& out) const {
  if (!has(section, key)) return;
  const auto& v = get(section, key);
  if (!v.value.is_array()) fail(v, section, key, "must be an array of strings");
  std::vector<std::string> r;
  for (const auto& x : v.value) {
    if (!x.is_string()) fail(v, section, key, "must be an array of strings");
    r.push_back(x.get<std::string>());
  }
  out = std::move(r);
}

// ---- RunConfig ----

namespace {

struct KeyDoc {
  const char* key;
  std::string value;
  const char* note;
};

std::string q(const std::string& s) { return "\"" + s + "\""; }

template <typename T>
std::string num(T v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

template <typename T>
std::string list(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

// Keys with their defaults, in section order. The reference doc and the
// unknown-key check both come from this table.
std::vector<std::pair<std::string, std::vector<KeyDoc>>> key_table() {
  const RunConfig d = RunConfig::defaults();
  const auto& c = d.corpus;
  const auto& t = d.crm_train;
  const auto& u = d.tcm_train;
  std::string dist = "[";
  for (std::size_t i = 0; i < u.distortions.size(); ++i) dist += (i ? ", " : "") + q(tcm::to_string(u.distortions[i]));
  dist += "]";
  return {
      {"data",
       {{"dir", q(d.data_dir), "corpus directory written by gen-data and read by every later stage"},
        {"seed", num(c.seed), "corpus generation and the 6:1:3 video split"},
        {"n_concepts", num(c.n_concepts), "planted concepts, one token each"},
        {"d_v", num(c.d_v), "shot feature dim (full profile: 512)"},
        {"d_h", num(c.d_h), "histogram dim, three channel blocks (full profile: 384)"},
        {"n_videos", num(c.n_videos), ""},
        {"shots_per_video", num(c.shots_per_video), ""},
        {"style_drift", num(c.style_drift), "per-shot step of each video's style walk"},
        {"misalign_prob", num(c.misalign_prob), "chance a clip's text describes a neighboring clip"},
        {"noise_sigma", num(c.noise_sigma), ""},
        {"vocab_size", num(c.vocab_size), "hashing tokenizer buckets (full profile: 8192)"},
        {"clip_len_min", num(c.clip_len_min), ""},
        {"clip_len_max", num(c.clip_len_max), "at most 10"},
        {"concepts_per_clip", num(c.concepts_per_clip), "0: one concept per shot; n: n contiguous runs per clip"},
        {"max_texts", num(d.bags.max_texts), "bag size L (own text plus neighbors), reference value 3"},
        {"window_s", num(d.bags.window_s), "neighbor window in seconds, reference value 3"}}},
      {"model",
       {{"profile", q(d.profile), "desk (small dims) or full (512-wide shot MLP, 384-bin histograms)"},
        {"mode", q(crm::to_string(d.mode)), "CRM encoder: parallel or adaptive"},
        {"distortions", dist, "TCM pretext classes besides unchanged: replacement, jitter"},
        {"crm_checkpoint", q(d.crm_checkpoint), ""},
        {"tcm_checkpoint", q(d.tcm_checkpoint), ""},
        {"index_dir", q(d.index_dir), ""}}},
      {"train",
       {{"loss", q(crm::to_string(t.loss)), "mil_nce, vse or vsepp"},
        {"lr", num(t.base_lr), "SGD base learning rate"},
        {"warmup_steps", num(t.warmup_steps), "linear warm-up from 0"},
        {"batch", num(t.batch), "bags per step (reference value 1024)"},
        {"steps", num(t.steps), "0 runs `epochs` full passes instead"},
        {"epochs", num(t.epochs), ""},
        {"decay", list(t.decay_epochs), "epochs at which lr is multiplied by decay_factor"},
        {"decay_factor", num(t.decay_factor), ""},
        {"parallel_weight", num(t.parallel_weight), "adaptive mode: weight of the whole-clip loss term"},
        {"seed", num(t.seed), ""},
        {"log_every", num(t.log_every), ""},
        {"checkpoint_every", num(t.checkpoint_every), "0: final checkpoint only"}}},
      {"tcm_train",
       {{"lr", num(u.base_lr), ""},
        {"warmup_steps", num(u.warmup_steps), ""},
        {"batch", num(u.batch), ""},
        {"steps", num(u.steps), ""},
        {"decay", list(u.decay_epochs), "epochs of steps_per_epoch steps"},
        {"decay_factor", num(u.decay_factor), ""},
        {"steps_per_epoch", num(u.steps_per_epoch), ""},
        {"crop_min", num(u.crop_min), "shortest training crop"},
        {"crop_max", num(u.crop_max), "longest training crop"},
        {"seed", num(u.seed), ""},
        {"log_every", num(u.log_every), ""}}},
      {"beam",
       {{"M", num(d.beam.M), "sequence length"},
        {"B1", num(d.beam.B1), "candidates per step; must exceed B2"},
        {"B2", num(d.beam.B2), "sequences kept after re-ranking"},
        {"rerank", d.beam.rerank ? "true" : "false", "re-rank by TCM coherence"}}},
      {"eval",
       {{"split", q(d.eval_split), "train, val, test or all"},
        {"completion_B1", num(d.completion_b1), "kNN candidates in sequence completion"},
        {"distcls_samples", num(d.distcls_samples), "balanced samples for distortion classification"},
        {"ranking_M", num(d.ranking_m), "window length for sequence ranking (M! orders)"},
        {"seed", num(d.eval_seed), "sampling seed for distcls and ranking tie-breaks"}}},
      {"bench",
       {{"sizes", list(d.bench.sizes), "synthetic gallery sizes"},
        {"M", num(d.bench.M), ""},
        {"B1", num(d.bench.B1), ""},
        {"B2", num(d.bench.B2), ""},
        {"queries", num(d.bench.queries), "timed queries per size (median reported)"}}},
  };
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.beam.M = 3;
  c.beam.B1 = 4;
  c.beam.B2 = 2;
  return c;
}

RunConfig RunConfig::from_doc(const ConfigDoc& doc) {
  std::vector<std::string> known;
  for (const auto& [sec, keys] : key_table()) {
    for (const auto& k : keys) known.push_back(sec + "." + k.key);
  }
  doc.reject_unknown(known);

  RunConfig c = defaults();
  doc.read("model", "profile", c.profile);
  if (c.profile == "full") {
    c.corpus.d_v = 512;
    c.corpus.d_h = 384;
    c.corpus.vocab_size = crm::CrmConfig::full().vocab_size;
  } else if (c.profile != "desk") {
    throw ConfigError(doc.source() + ":" + std::to_string(doc.get("model", "profile").line) +
                      ": model.profile must be desk or full");
  }

  auto& d = c.corpus;
  doc.read("data", "dir", c.data_dir);
  doc.read("data", "seed", d.seed);
  doc.read("data", "n_concepts", d.n_concepts);
  doc.read("data", "d_v", d.d_v);
  doc.read("data", "d_h", d.d_h);
  doc.read("data", "n_videos", d.n_videos);
  doc.read("data", "shots_per_video", d.shots_per_video);
  doc.read("data", "style_drift", d.style_drift);
  doc.read("data", "misalign_prob", d.misalign_prob);
  doc.read("data", "noise_sigma", d.noise_sigma);
  doc.read("data", "vocab_size", d.vocab_size);
  doc.read("data", "clip_len_min", d.clip_len_min);
  doc.read("data", "clip_len_max", d.clip_len_max);
  doc.read("data", "concepts_per_clip", d.concepts_per_clip);
  doc.read("data", "max_texts", c.bags.max_texts);
  doc.read("data", "window_s", c.bags.window_s);

  auto where = [&](const char* sec, const char* key) {
    return doc.source() + ":" + std::to_string(doc.get(sec, key).line) + ": ";
  };
  std::string s;
  if (doc.has("model", "mode")) {
    doc.read("model", "mode", s);
    try {
      c.mode = crm::parse_mode(s);
    } catch (const Error& e) {
      throw ConfigError(where("model", "mode") + e.what());
    }
  }
  if (doc.has("model", "distortions")) {
    std::vector<std::string> names;
    doc.read("model", "distortions", names);
    c.tcm_train.distortions.clear();
    for (const auto& n : names) {
      try {
        c.tcm_train.distortions.push_back(tcm::parse_distortion(n));
      } catch (const Error& e) {
        throw ConfigError(where("model", "distortions") + e.what());
      }
    }
  }
  doc.read("model", "crm_checkpoint", c.crm_checkpoint);
  doc.read("model", "tcm_checkpoint", c.tcm_checkpoint);
  doc.read("model", "index_dir", c.index_dir);

  auto& t = c.crm_train;
  if (doc.has("train", "loss")) {
    doc.read("train", "loss", s);
    try {
      t.loss = crm::parse_loss(s);
    } catch (const Error& e) {
      throw ConfigError(where("train", "loss") + e.what());
    }
  }
  doc.read("train", "lr", t.base_lr);
  doc.read("train", "warmup_steps", t.warmup_steps);
  doc.read("train", "batch", t.batch);
  doc.read("train", "steps", t.steps);
  doc.read("train", "epochs", t.epochs);
  doc.read("train", "decay", t.decay_epochs);
  doc.read("train", "decay_factor", t.decay_factor);
  doc.read("train", "parallel_weight", t.parallel_weight);
  doc.read("train", "seed", t.seed);
  doc.read("train", "log_every", t.log_every);
  doc.read("train", "checkpoint_every", t.checkpoint_every);

  auto& u = c.tcm_train;
  doc.read("tcm_train", "lr", u.base_lr);
  doc.read("tcm_train", "warmup_steps", u.warmup_steps);
  doc.read("tcm_train", "batch", u.batch);
  doc.read("tcm_train", "steps", u.steps);
  doc.read("tcm_train", "decay", u.decay_epochs);
  doc.read("tcm_train", "decay_factor", u.decay_factor);
  doc.read("tcm_train", "steps_per_epoch", u.steps_per_epoch);
  doc.read("tcm_train", "crop_min", u.crop_min);
  doc.read("tcm_train", "crop_max", u.crop_max);
  doc.read("tcm_train", "seed", u.seed);
  doc.read("tcm_train", "log_every", u.log_every);

  doc.read("beam", "M", c.beam.M);
  doc.read("beam", "B1", c.beam.B1);
  doc.read("beam", "B2", c.beam.B2);
  doc.read("beam", "rerank", c.beam.rerank);

  doc.read("eval", "split", c.eval_split);
  doc.read("eval", "completion_B1", c.completion_b1);
  doc.read("eval", "distcls_samples", c.distcls_samples);
  doc.read("eval", "ranking_M", c.ranking_m);
  doc.read("eval", "seed", c.eval_seed);

  doc.read("bench", "sizes", c.bench.sizes);
  doc.read("bench", "M", c.bench.M);
  doc.read("bench", "B1", c.bench.B1);
  doc.read("bench", "B2", c.bench.B2);
  doc.read("bench", "queries", c.bench.queries);
  return c;
}

void RunConfig::set_seed(std::uint64_t seed) {
  corpus.seed = seed;
  crm_train.seed = seed;
  tcm_train.seed = seed;
  bench.seed = seed;
  eval_seed = seed;
}

void RunConfig::validate() const {
  corpus.validate();
  crm_model().validate();
  tcm_model().validate();
  tcm_train.validate();
  if (eval_split != "train" && eval_split != "val" && eval_split != "test" && eval_split != "all") {
    throw ConfigError("eval.split must be train, val, test or all (got '" + eval_split + "')");
  }
}

crm::CrmConfig RunConfig::crm_model() const {
  crm::CrmConfig m = profile == "full" ? crm::CrmConfig::full() : crm::CrmConfig{};
  m.d_v = corpus.d_v;
  m.vocab_size = corpus.vocab_size;
  return m;
}

tcm::TcmConfig RunConfig::tcm_model() const {
  tcm::TcmConfig m = profile == "full" ? tcm::TcmConfig::full(tcm_train.n_classes()) : tcm::TcmConfig{};
  m.d_v = corpus.d_v;
  m.d_h = corpus.d_h;
  m.n_classes = tcm_train.n_classes();
  return m;
}

std::string config_reference() {
  std::ostringstream out;
  out << "# Configuration reference\n\n"
      << "Config files use a small TOML subset: `[section]` headers, `key = value` lines, `#` comments.\n"
      << "Values are double-quoted strings, integers, floats, `true`/`false`, or one-line arrays of those.\n"
      << "Unknown keys, duplicate keys and type mismatches are errors that name the offending line.\n"
      << "`--seed` on the command line replaces data.seed, train.seed, tcm_train.seed and eval.seed.\n"
      << "The only environment variable read is `T2V_THREADS` (kNN shard threads); it never changes results.\n";
  for (const auto& [sec, keys] : key_table()) {
    out << "\n## [" << sec << "]\n\n| key | default | notes |\n|---|---|---|\n";
    for (const auto& k : keys) out << "| `" << k.key << "` | `" << k.value << "` | " << k.note << " |\n";
  }
  return out.str();
}

}  // namespace t2v::cli
