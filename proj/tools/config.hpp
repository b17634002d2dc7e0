#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/crm/crm.hpp"
#include "t2v/datagen/corpus.hpp"
#include "t2v/engine/engine.hpp"
#include "t2v/evalkit/evalkit.hpp"
#include "t2v/tcm/tcm.hpp"

namespace t2v::cli {

// A parsed TOML-style document: [section] headers, key = value lines, '#'
// comments. Values are strings, integers, floats, booleans or flat arrays of
// those. Every value remembers its line for error messages.
struct ConfigValue {
  nlohmann::json value;
  int line = 0;
};

class ConfigDoc {
 public:
  static ConfigDoc parse(const std::string& text, const std::string& source = "config");
  static ConfigDoc load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const ConfigValue& get(const std::string& section, const std::string& key) const;
  // Every key not in `known` (as "section.key") is an error naming its line.
  void reject_unknown(const std::vector<std::string>& known) const;
  const std::string& source() const { return source_; }

  // Typed reads that leave `out` untouched when the key is absent.
  void read(const std::string& section, const std::string& key, std::string& out) const;
  void read(const std::string& section, const std::string& key, bool& out) const;
  void read(const std::string& section, const std::string& key, double& out) const;
  void read(const std::string& section, const std::string& key, std::int64_t& out) const;
  void read(const std::string& section, const std::string& key, std::uint64_t& out) const;
  void read(const std::string& section, const std::string& key, std::uint32_t& out) const;
  void read(const std::string& section, const std::string& key, std::vector<std::int64_t>& out) const;
  void read(const std::string& section, const std::string& key, std::vector<std::size_t>& out) const;
  void read(const std::string& section, const std::string& key, std::vector<std::string>& out) const;

 private:
  [[noreturn]] void fail(const ConfigValue& v, const std::string& section, const std::string& key,
                         const std::string& what) const;

  std::string source_;
  std::map<std::string, std::map<std::string, ConfigValue>> sections_;
};

struct RunConfig {
  // [data]
  std::string data_dir = "run/corpus";
  data::PlantedCorpusConfig corpus;
  data::BagOptions bags;
  // [model]
  std::string profile = "desk";
  crm::Mode mode = crm::Mode::adaptive;
  std::string crm_checkpoint = "run/crm.t2vc";
  std::string tcm_checkpoint = "run/tcm.t2vc";
  std::string index_dir = "run/index";
  // [train], [tcm_train]
  crm::TrainConfig crm_train;
  tcm::TcmTrainConfig tcm_train;
  // [beam]
  engine::SearchConfig beam;
  // [eval]
  std::string eval_split = "test";
  std::size_t completion_b1 = 6;
  std::size_t distcls_samples = 3000;
  std::size_t ranking_m = 4;
  std::uint64_t eval_seed = 7;
  // [bench]
  eval::BenchConfig bench;

  static RunConfig defaults();
  static RunConfig from_doc(const ConfigDoc& doc);
  // Replaces every seed (corpus, split, training, evaluation).
  void set_seed(std::uint64_t seed);
  void validate() const;

  crm::CrmConfig crm_model() const;
  tcm::TcmConfig tcm_model() const;
};

// Markdown reference of every key with its default.
std::string config_reference();

}  // namespace t2v::cli
