#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/datagen/corpus.hpp"
#include "t2v/numkit/graph.hpp"
#include "t2v/numkit/rng.hpp"
#include "t2v/numkit/tensor.hpp"

// Temporal coherence: distortions, the neighbor-similarity prior, and the
// two-stream LSTM classifier whose P(unchanged) scores a shot sequence.
namespace t2v::tcm {

enum class DistortionKind : std::size_t { unchanged = 0, shot_replacement = 1, color_jitter = 2 };

const char* to_string(DistortionKind k);
DistortionKind parse_distortion(std::string_view s);

struct TcmConfig {
  std::size_t d_v = 32;
  std::size_t d_h = 24;
  std::size_t mlp_hidden = 128;
  std::size_t n_classes = 3;  // 2: replacement only, 3: replacement + jitter

  // LSTMs 512/512 and 384/384, MLP 896→128→C.
  static TcmConfig full(std::size_t n_classes = 3);
  void validate() const;
  nlohmann::json to_json() const;
  static TcmConfig from_json(const nlohmann::json& j);
};

// Per LSTM layer: wx (in×4h), wh (h×4h), b (4h); gate columns i, f, o, g.
std::vector<std::string> param_names(const TcmConfig& cfg);
// Random LSTM and hidden weights; the output layer starts at zero so an
// untrained model is exactly uniform.
ParamSet init_params(const TcmConfig& cfg, std::uint64_t seed);
ParamSet zero_params(const TcmConfig& cfg);
void check_params(const ParamSet& params, const TcmConfig& cfg);

struct SequenceSample {
  Tensor vis;   // K×d_v
  Tensor hist;  // K×d_h
  DistortionKind label = DistortionKind::unchanged;
  std::string video_id;

  std::size_t length() const { return vis.rows(); }
};

SequenceSample make_sample(std::span<const data::ShotRecord> shots, std::span<const std::size_t> rows);

// Largest number of distorted shots for a length-K sequence.
inline std::size_t k_max(std::size_t k) { return k / 2; }

// probs has 2 or 3 entries (unchanged, replacement[, jitter]), non-negative,
// summing to 1.
DistortionKind sample_distortion(Rng& rng, std::span<const double> probs);

// Swaps k uniformly chosen positions (both streams) for shots of other videos.
SequenceSample apply_shot_replacement(const SequenceSample& s, std::span<const data::ShotRecord> donors,
                                      std::size_t k, Rng& rng, std::vector<std::size_t>* positions = nullptr);

inline constexpr double kStretchMin = 0.6;
inline constexpr double kStretchMax = 1.4;

// Channel-block shuffle (never the identity) and per-channel stretch on k
// histograms; visual features are untouched.
SequenceSample apply_color_jitter(const SequenceSample& s, std::size_t k, Rng& rng,
                                  std::vector<std::size_t>* positions = nullptr, int* permutation = nullptr);

// The five non-identity orderings of three channel blocks.
const std::array<std::array<int, 3>, 5>& channel_permutations();

// Stretches one channel block about its centre by `scale` and renormalizes.
std::vector<double> stretch_block(std::span<const float> block, double scale);

// x_i scaled by the mean clamped cosine with its existing neighbors.
template <typename T>
BasicTensor<T> temporal_prior(const BasicTensor<T>& seq);

// Graph LSTM over a batch: steps[t] is B×in, returns the top layer's hidden
// state per step.
template <typename T>
std::vector<Var> lstm_forward(Graph<T>& g, const BasicParamSet<T>& ps, const std::string& prefix,
                              std::size_t layers, const std::vector<Var>& steps);

// Single sequence K×in → K×h.
template <typename T>
BasicTensor<T> lstm_forward(const BasicTensor<T>& seq, const BasicParamSet<T>& ps, const std::string& prefix,
                            std::size_t layers);

// Class logits (B×C) for equal-length samples; the prior is applied here.
template <typename T>
Var tcm_logits(Graph<T>& g, const BasicParamSet<T>& ps, std::span<const SequenceSample* const> batch);

struct Score {
  std::vector<double> probs;
  double coherence = 1.0;
};

// K = 1 is coherent by convention.
Score score_sequence(const Tensor& vis, const Tensor& hist, const ParamSet& ps);
Score score_sequence(const SequenceSample& s, const ParamSet& ps);
// Groups samples by length internally; result order matches input.
std::vector<Score> score_batch(std::span<const SequenceSample> samples, const ParamSet& ps);

// ---- training ----

struct TcmTrainConfig {
  std::vector<DistortionKind> distortions{DistortionKind::shot_replacement, DistortionKind::color_jitter};
  std::size_t batch = 32;
  std::int64_t steps = 2000;
  double base_lr = 0.3;
  std::int64_t warmup_steps = 100;
  std::vector<std::int64_t> decay_epochs{15, 17};
  double decay_factor = 0.1;
  std::int64_t steps_per_epoch = 100;
  std::size_t crop_min = 2;
  std::size_t crop_max = data::kMaxClipShots;
  std::uint64_t seed = 1;
  std::int64_t log_every = 50;
  std::string checkpoint_path;

  std::size_t n_classes() const { return 1 + distortions.size(); }
  void validate() const;
  nlohmann::json to_json() const;
};

// Draws one pretext sample: a random crop of one video's consecutive shots,
// a uniformly drawn distortion, k uniform in [1, k_max].
class SampleSource {
 public:
  SampleSource(std::span<const data::ShotRecord> shots, std::span<const std::string> videos,
               std::size_t n_classes, std::size_t crop_min, std::size_t crop_max);
  SequenceSample draw(Rng& rng) const;
  // Same, with the label forced (for balanced evaluation sets).
  SequenceSample draw(Rng& rng, DistortionKind label) const;

 private:
  std::vector<data::ShotRecord> pool_;            // shots of the given videos; also the donor pool
  std::vector<std::vector<std::size_t>> videos_;  // rows of pool_ per video, time order
  std::size_t n_classes_, crop_min_, crop_max_;
};

struct TcmLogEntry {
  std::int64_t step = 0;
  double lr = 0, loss = 0, acc = 0;
};

struct TcmTrainResult {
  ParamSet params;
  std::vector<TcmLogEntry> log;
};

TcmTrainResult train_tcm(const TcmConfig& model, const TcmTrainConfig& train, std::span<const data::ShotRecord> shots,
                         std::span<const std::string> videos,
                         const std::function<void(const nlohmann::json&)>& log_sink = {});

nlohmann::json checkpoint_config(const TcmConfig& model, const TcmTrainConfig& train);

}  // namespace t2v::tcm
