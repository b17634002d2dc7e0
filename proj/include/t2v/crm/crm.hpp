#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "t2v/datagen/corpus.hpp"
#include "t2v/numkit/graph.hpp"
#include "t2v/numkit/rng.hpp"
#include "t2v/numkit/tensor.hpp"

// Content retrieval: shot-sequence and text encoders, the context interaction
// update, and the bag losses.
namespace t2v::crm {

enum class Mode { parallel, adaptive };
enum class LossKind { mil_nce, vse, vsepp };

const char* to_string(Mode m);
Mode parse_mode(std::string_view s);
const char* to_string(LossKind k);
LossKind parse_loss(std::string_view s);

struct CrmConfig {
  std::size_t d_v = 32;
  std::size_t shot_hidden = 64;
  std::size_t d_e = 32;
  std::uint32_t vocab_size = 4096;
  std::size_t word_dim = 32;
  std::size_t text_hidden = 64;

  // shot MLP 512→2048→512, W 512×512, head 512→512→512.
  static CrmConfig full();
  void validate() const;
  nlohmann::json to_json() const;
  static CrmConfig from_json(const nlohmann::json& j);
};

std::vector<std::string> param_names();
ParamSet init_params(const CrmConfig& cfg, std::uint64_t seed);
// Checks that every tensor exists with the shape the config implies.
void check_params(const ParamSet& params, const CrmConfig& cfg);

// ---- graph builders (rows are items) ----

// Per-shot MLP φ(s) → embedding; x is S×d_v.
template <typename T>
Var shot_mlp(Graph<T>& g, const BasicParamSet<T>& ps, Var x);

// Mean of shot_mlp over each segment of rows.
template <typename T>
Var encode_shots(Graph<T>& g, const BasicParamSet<T>& ps, Var shots, std::vector<std::size_t> offsets);

// embed → maxpool over tokens → MLP, one row per text.
template <typename T>
Var encode_texts(Graph<T>& g, const BasicParamSet<T>& ps, const std::vector<std::vector<std::uint32_t>>& texts);

// Row-wise g − max(0, cos(f, g))·Wᵀf.
template <typename T>
Var interact(Graph<T>& g, const BasicParamSet<T>& ps, Var context, Var text);

template <typename T>
Var head(Graph<T>& g, const BasicParamSet<T>& ps, Var x);

// ---- single-item forward passes ----

// shots is K×d_v, K ≥ 1; returns the d_e clip embedding.
template <typename T>
BasicTensor<T> encode_shot_sequence(const BasicTensor<T>& shots, const BasicParamSet<T>& ps);

template <typename T>
BasicTensor<T> encode_text(std::span<const std::uint32_t> tokens, const BasicParamSet<T>& ps);

template <typename T>
T cos_sim_clamped(std::span<const T> a, std::span<const T> b) {
  return cos_clamped<T>(a, b);
}

template <typename T>
BasicTensor<T> context_interact(std::span<const T> context, std::span<const T> text, const BasicParamSet<T>& ps);

template <typename T>
BasicTensor<T> apply_head(std::span<const T> x, const BasicParamSet<T>& ps);

// Text-side feature used against shot embeddings: head(σ(context, g(h))).
// An empty or zero context leaves g unchanged (parallel mode and step 1).
template <typename T>
BasicTensor<T> query_feature(std::span<const std::uint32_t> tokens, std::span<const T> context,
                             const BasicParamSet<T>& ps);

// ---- bags ----

// Number of shots in c_A, uniform in [1, K−1].
std::size_t split_point(std::size_t k, Rng& rng);
std::pair<data::ClipSample, data::ClipSample> split_clip(const data::ClipSample& clip, Rng& rng);

struct EncodedBag {
  BasicTensor<double> clip_embed;                // f(c); f(c_B) in adaptive mode
  std::vector<BasicTensor<double>> text_embeds;  // final text features (after σ and head)
  BasicTensor<double> f_ca, f_cb;                // adaptive only
};

// split = shots in c_A (adaptive) or ignored (parallel). shots is K×d_v.
EncodedBag encode_bag(const Tensor& shots, const std::vector<std::vector<std::uint32_t>>& texts, const ParamSet& ps,
                      Mode mode, std::size_t split);

struct BagLogits {
  std::vector<double> pos;
  std::vector<double> neg;
};

// pos_i = clip_i·text for texts of bag i; neg_i = clip_i·foreign texts and
// foreign clips·texts of bag i.
std::vector<BagLogits> batch_bag_logits(std::span<const EncodedBag> bags, Mode mode);

// ---- batched training loss ----

template <typename T>
struct BagBatch {
  BasicTensor<T> shots;                           // every clip's shots stacked, S×d_v
  std::vector<std::size_t> offsets;               // clip i owns rows [offsets[i], offsets[i+1])
  std::vector<std::size_t> split;                 // adaptive: rows of c_A per clip
  std::vector<std::vector<std::uint32_t>> texts;  // all bag texts
  std::vector<std::size_t> owner;                 // bag of each text

  std::size_t size() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

// Builds a batch from bags; adaptive mode samples split points from rng.
BagBatch<float> make_batch(std::span<const data::PositiveBag* const> bags, std::span<const data::ShotRecord> shots,
                           Mode mode, Rng& rng, LossKind loss = LossKind::mil_nce);

template <typename T>
struct BatchForward {
  Var logits;  // clips × texts
  Var loss;
};

// parallel_weight > 0 (adaptive mode only) adds that multiple of the
// whole-clip loss f(c)·head(g(h)) to the split-clip loss.
template <typename T>
BatchForward<T> batch_loss(Graph<T>& g, const BasicParamSet<T>& ps, const BagBatch<T>& batch, Mode mode,
                           LossKind loss, double parallel_weight = 0.0);

// ---- training ----

struct TrainConfig {
  Mode mode = Mode::parallel;
  LossKind loss = LossKind::mil_nce;
  std::size_t batch = 32;
  std::int64_t steps = 2400;  // 0: run `epochs` full passes instead
  std::int64_t epochs = 0;
  double base_lr = 0.2;
  std::int64_t warmup_steps = 100;
  std::vector<std::int64_t> decay_epochs{40, 80};
  double decay_factor = 0.1;
  // Adaptive mode: weight of the extra whole-clip term (0 trains the split
  // term alone).
  double parallel_weight = 1.0;
  std::uint64_t seed = 1;
  std::int64_t log_every = 50;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string checkpoint_path;        // empty: none written

  nlohmann::json to_json() const;
};

struct LogEntry {
  std::int64_t step = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainResult {
  ParamSet params;
  std::vector<LogEntry> log;
};

// Deterministic given the seed. log_sink (if set) receives one JSON object per
// logged step.
TrainResult train_crm(const CrmConfig& model, const TrainConfig& train, std::span<const data::PositiveBag> bags,
                      std::span<const data::ShotRecord> shots, const ParamSet* init = nullptr,
                      const std::function<void(const nlohmann::json&)>& log_sink = {});

nlohmann::json checkpoint_config(const CrmConfig& model, const TrainConfig& train);

}  // namespace t2v::crm
