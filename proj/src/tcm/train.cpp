#include <algorithm>
#include <map>

#include "t2v/datagen/formats.hpp"
#include "t2v/numkit/optim.hpp"
#include "t2v/tcm/tcm.hpp"

namespace t2v::tcm {

void TcmTrainConfig::validate() const {
  if (distortions.empty() || distortions.size() > 2) {
    throw ConfigError("tcm training: distortions must be [replacement] or [replacement, jitter]");
  }
  if (distortions[0] != DistortionKind::shot_replacement ||
      (distortions.size() == 2 && distortions[1] != DistortionKind::color_jitter)) {
    throw ConfigError("tcm training: distortions must be [replacement] or [replacement, jitter]");
  }
  if (batch < 1) throw ConfigError("tcm training: batch must be >= 1");
  if (steps < 1) throw ConfigError("tcm training: steps must be >= 1");
  if (steps_per_epoch < 1) throw ConfigError("tcm training: steps_per_epoch must be >= 1");
  if (crop_min < 2 || crop_max < crop_min) throw ConfigError("tcm training: need 2 <= crop_min <= crop_max");
}

nlohmann::json TcmTrainConfig::to_json() const {
  std::vector<std::string> d;
  for (auto k : distortions) d.emplace_back(to_string(k));
  return {{"distortions", d},
          {"batch", batch},
          {"steps", steps},
          {"base_lr", base_lr},
          {"warmup_steps", warmup_steps},
          {"decay_epochs", decay_epochs},
          {"decay_factor", decay_factor},
          {"steps_per_epoch", steps_per_epoch},
          {"crop_min", crop_min},
          {"crop_max", crop_max},
          {"seed", seed}};
}

nlohmann::json checkpoint_config(const TcmConfig& model, const TcmTrainConfig& train) {
  return {{"kind", "tcm"}, {"model", model.to_json()}, {"train", train.to_json()}};
}

TcmTrainResult train_tcm(const TcmConfig& model, const TcmTrainConfig& train, std::span<const data::ShotRecord> shots,
                         std::span<const std::string> videos,
                         const std::function<void(const nlohmann::json&)>& log_sink) {
  model.validate();
  train.validate();
  if (model.n_classes != train.n_classes()) {
    throw ConfigError("tcm training: model has " + std::to_string(model.n_classes) + " classes but " +
                      std::to_string(train.distortions.size()) + " distortions are enabled");
  }
  if (!shots.empty() && (shots[0].feature.size() != model.d_v || shots[0].histogram.size() != model.d_h)) {
    throw ConfigError("tcm training: corpus dims (" + std::to_string(shots[0].feature.size()) + ", " +
                      std::to_string(shots[0].histogram.size()) + ") differ from model (" + std::to_string(model.d_v) +
                      ", " + std::to_string(model.d_h) + ")");
  }
  SampleSource source(shots, videos, model.n_classes, train.crop_min, train.crop_max);

  LrSchedule sched;
  sched.base_lr = train.base_lr;
  sched.warmup_steps = train.warmup_steps;
  sched.decay_epochs = train.decay_epochs;
  sched.decay_factor = train.decay_factor;
  sched.steps_per_epoch = train.steps_per_epoch;

  TcmTrainResult res;
  res.params = init_params(model, train.seed);
  Rng rng = Rng::derive(train.seed, 0x7c4);

  for (std::int64_t step = 0; step < train.steps; ++step) {
    std::vector<SequenceSample> samples;
    for (std::size_t i = 0; i < train.batch; ++i) samples.push_back(source.draw(rng));

    std::map<std::size_t, std::vector<const SequenceSample*>> by_len;
    for (const auto& s : samples) by_len[s.length()].push_back(&s);

    Graph<float> g;
    std::vector<Var> parts;
    std::vector<std::size_t> labels;
    for (const auto& [len, group] : by_len) {
      parts.push_back(tcm_logits<float>(g, res.params, group));
      for (const auto* s : group) labels.push_back(static_cast<std::size_t>(s->label));
    }
    Var logits = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
    Var loss = g.softmax_xent(logits, labels);
    g.backward(loss);

    const std::size_t c = model.n_classes;
    const auto& L = g.value(logits);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      auto row = L.begin() + static_cast<std::ptrdiff_t>(r * c);
      if (static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row) == labels[r]) {
        ++correct;
      }
    }
    const double lr = lr_at(sched, step);
    const double lv = g.scalar(loss);
    const double acc = static_cast<double>(correct) / static_cast<double>(labels.size());
    res.params = sgd_step(res.params, g.param_grads(res.params), lr);
    ++res.params.version;

    if (step + 1 == train.steps || (train.log_every > 0 && step % train.log_every == 0)) {
      res.log.push_back({step, lr, lv, acc});
      if (log_sink) log_sink({{"step", step}, {"lr", lr}, {"loss", lv}, {"acc", acc}});
    }
  }
  if (!train.checkpoint_path.empty()) {
    data::save_checkpoint(train.checkpoint_path, res.params, checkpoint_config(model, train));
  }
  return res;
}

}  // namespace t2v::tcm
