#include <algorithm>

#include "t2v/crm/crm.hpp"
#include "t2v/datagen/formats.hpp"
#include "t2v/numkit/optim.hpp"

namespace t2v::crm {

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"loss", to_string(loss)},
          {"batch", batch},
          {"steps", steps},
          {"epochs", epochs},
          {"base_lr", base_lr},
          {"warmup_steps", warmup_steps},
          {"decay_epochs", decay_epochs},
          {"decay_factor", decay_factor},
          {"parallel_weight", parallel_weight},
          {"seed", seed}};
}

nlohmann::json checkpoint_config(const CrmConfig& model, const TrainConfig& train) {
  return {{"kind", "crm"}, {"model", model.to_json()}, {"train", train.to_json()}};
}

TrainResult train_crm(const CrmConfig& model, const TrainConfig& train, std::span<const data::PositiveBag> bags,
                      std::span<const data::ShotRecord> shots, const ParamSet* init,
                      const std::function<void(const nlohmann::json&)>& log_sink) {
  model.validate();
  if (train.batch < 2) throw ConfigError("train_crm: batch must be >= 2");
  if (train.steps <= 0 && train.epochs <= 0) throw ConfigError("train_crm: steps or epochs must be positive");
  if (!shots.empty() && shots[0].feature.size() != model.d_v) {
    throw ConfigError("train_crm: corpus d_v=" + std::to_string(shots[0].feature.size()) + " but model d_v=" +
                      std::to_string(model.d_v));
  }

  std::vector<const data::PositiveBag*> usable;
  for (const auto& b : bags) {
    if (train.mode == Mode::adaptive && b.clip.shots.size() < 2) continue;
    usable.push_back(&b);
  }
  if (usable.size() < 2) throw ValidationError("train_crm: fewer than 2 usable bags");

  const std::size_t batch = std::min(train.batch, usable.size());
  const std::int64_t per_epoch = static_cast<std::int64_t>(usable.size() / batch);
  const std::int64_t total = train.steps > 0 ? train.steps : train.epochs * per_epoch;

  LrSchedule sched;
  sched.base_lr = train.base_lr;
  sched.warmup_steps = train.warmup_steps;
  sched.decay_epochs = train.decay_epochs;
  sched.decay_factor = train.decay_factor;
  sched.steps_per_epoch = per_epoch;

  TrainResult res;
  if (init) {
    check_params(*init, model);
    res.params = *init;
  } else {
    res.params = init_params(model, train.seed);
  }
  Rng order_rng = Rng::derive(train.seed, 0x0de7);
  Rng split_rng = Rng::derive(train.seed, 0x5b1);

  std::vector<std::size_t> order(usable.size());
  std::size_t cursor = order.size();
  std::vector<const data::PositiveBag*> chosen(batch);
  const nlohmann::json cfg_echo = checkpoint_config(model, train);

  for (std::int64_t step = 0; step < total; ++step) {
    if (cursor + batch > order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      order_rng.shuffle(order);
      cursor = 0;
    }
    for (std::size_t i = 0; i < batch; ++i) chosen[i] = usable[order[cursor + i]];
    cursor += batch;

    BagBatch<float> b = make_batch(chosen, shots, train.mode, split_rng, train.loss);
    Graph<float> g;
    BatchForward<float> fw = batch_loss(g, res.params, b, train.mode, train.loss, train.parallel_weight);
    g.backward(fw.loss);
    const double lr = lr_at(sched, step);
    const double loss = g.scalar(fw.loss);
    res.params = sgd_step(res.params, g.param_grads(res.params), lr);
    ++res.params.version;

    const bool last = step + 1 == total;
    if (last || (train.log_every > 0 && step % train.log_every == 0)) {
      res.log.push_back({step, lr, loss});
      if (log_sink) log_sink({{"step", step}, {"lr", lr}, {"loss", loss}});
    }
    if (!train.checkpoint_path.empty() && train.checkpoint_every > 0 && (step + 1) % train.checkpoint_every == 0 &&
        !last) {
      data::save_checkpoint(train.checkpoint_path, res.params, cfg_echo);
    }
  }
  if (!train.checkpoint_path.empty()) data::save_checkpoint(train.checkpoint_path, res.params, cfg_echo);
  return res;
}

}  // namespace t2v::crm
