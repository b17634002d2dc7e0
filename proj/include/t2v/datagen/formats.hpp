#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/datagen/corpus.hpp"
#include "t2v/numkit/tensor.hpp"

namespace t2v::data {

namespace fs = std::filesystem;

// Feature bank: "T2VF", u32 version=1, u32 dim, u64 count, count·dim f32 LE.
inline constexpr std::uint32_t kFeatureBankVersion = 1;
void save_features(const fs::path& path, const Tensor& bank);
Tensor load_features(const fs::path& path);

// Checkpoint: "T2VC", u32 version, u32 header_len, JSON header, f32 LE payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamSet params;
  nlohmann::json config = nlohmann::json::object();
};

void save_checkpoint(const fs::path& path, const ParamSet& params, const nlohmann::json& config);
Checkpoint load_checkpoint(const fs::path& path);

// FNV-1a over the file contents, as 16 hex digits.
std::string file_hash(const fs::path& path);

void write_shot_manifest(const fs::path& path, const std::vector<ShotRecord>& shots);
// Shot records without feature payloads; the rows name positions in the banks.
struct ManifestRow {
  std::uint64_t shot_id = 0;
  std::string video_id;
  double start_s = 0, end_s = 0;
  std::uint64_t feature_row = 0, hist_row = 0;
};
std::vector<ManifestRow> read_shot_manifest(const fs::path& path);

void write_transcripts(const fs::path& path, const std::vector<TranscriptChunk>& chunks);
std::vector<TranscriptChunk> read_transcripts(const fs::path& path, std::uint32_t vocab_size);

nlohmann::json config_to_json(const PlantedCorpusConfig& cfg);
PlantedCorpusConfig config_from_json(const nlohmann::json& j);

// Corpus directory: vis.t2vf, hist.t2vf, shots.jsonl, transcripts.jsonl,
// clips.jsonl and truth.json.
void save_corpus(const fs::path& dir, const Corpus& corpus);
Corpus load_corpus(const fs::path& dir);

}  // namespace t2v::data
