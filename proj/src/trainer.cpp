#include "difftrack/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

TrainingExample make_training_example(const sim::EpisodeRecord& episode, int t_now, int horizon,
                                      const MapFrame& frame, double dt_normalizer) {
  if (t_now < 0 || horizon <= 0 || t_now + horizon > episode.length()) {
    throw RangeError("window [" + std::to_string(t_now) + ", " + std::to_string(t_now + horizon) +
                     ") overruns episode " + episode.episode_id + " of length " +
                     std::to_string(episode.length()));
  }
  TrainingExample ex;
  for (const sim::DetectionRecord& d : episode.detections) {
    if (d.t > t_now) break;
    ex.history.detections.push_back({(t_now - d.t) / dt_normalizer, frame.to_normalized(d.x),
                                     frame.to_normalized(d.y), d.agent});
  }
  ex.future = TrajectorySlate(episode.agents(), horizon);
  for (int a = 0; a < episode.agents(); ++a) {
    for (int t = 0; t < horizon; ++t) {
      const Vec2 p = episode.trajectories[static_cast<std::size_t>(a)][static_cast<std::size_t>(t_now + t)];
      ex.future.set_state(a, t, {frame.to_normalized(p[0]), frame.to_normalized(p[1])});
    }
  }
  return ex;
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (epochs <= 0) throw ConfigError("train.epochs", "must be positive");
  if (max_steps < 0) throw ConfigError("train.max_steps", "must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps", "must be positive");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip", "must be >= 0");
  if (ema_decay && !(*ema_decay >= 0.0 && *ema_decay < 1.0)) {
    throw ConfigError("train.ema_decay", "must lie in [0, 1)");
  }
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every", "must be >= 0");
}

Trainer::Trainer(DiffusionTracker& model, const TrainConfig& config)
    : model_(model), config_(config), m_(model.params().zeros_like()), v_(model.params().zeros_like()) {
  config_.validate();
  round_to_float(model_.params());
  if (config_.ema_decay) ema_ = model_.params();
}

ad::Var Trainer::build_loss(ad::Tape& tape, std::span<const TrainingExample> batch, const Batch& draws) const {
  const int agents = batch[0].future.agents();
  const int horizon = batch[0].future.horizon();
  if (agents != model_.config().agents) {
    throw DimensionError("batch has " + std::to_string(agents) + " agents, model expects " +
                         std::to_string(model_.config().agents));
  }
  std::vector<TrajectorySlate> noisy;
  std::vector<int> segment_steps;
  std::vector<DetectionHistory> histories;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    require_same_shape(batch[0].future, batch[b].future, "training batch");
    noisy.push_back(forward_noise(batch[b].future, draws.steps[b], draws.noise[b], model_.schedule()));
    segment_steps.insert(segment_steps.end(), static_cast<std::size_t>(agents), draws.steps[b]);
    histories.push_back(batch[b].history);
  }
  if (horizon != model_.config().denoiser.horizon) {
    throw DimensionError("batch horizon does not match the model");
  }
  const ParamSet& params = model_.params();
  const ad::Var cond = model_.condition_batch(tape, params, histories);
  const ad::Var pred = model_.denoiser().forward(tape, params, tape.constant(pack_slates(noisy)), cond,
                                                 segment_steps, agents);
  return ad::mse(pred, tape.constant(pack_slates(draws.noise)));
}

double Trainer::loss(std::span<const TrainingExample> batch, std::span<const int> steps,
                     std::span<const TrajectorySlate> noise) const {
  if (batch.empty() || steps.size() != batch.size() || noise.size() != batch.size()) {
    throw PreconditionError("loss: batch, steps and noise must be non-empty and the same length");
  }
  ad::Tape tape(false);
  Batch draws{{steps.begin(), steps.end()}, {noise.begin(), noise.end()}};
  return build_loss(tape, batch, draws).value()(0, 0);
}

double Trainer::train_step(std::span<const TrainingExample> batch, Rng& rng) {
  if (batch.empty()) throw PreconditionError("train_step: empty batch");
  Batch draws;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    draws.steps.push_back(static_cast<int>(rng.uniform_int(1, model_.schedule().num_steps)));
  }
  for (const TrainingExample& ex : batch) {
    draws.noise.push_back(TrajectorySlate::standard_normal(ex.future.agents(), ex.future.horizon(), rng));
  }

  ad::Tape tape(true);
  const ad::Var loss_var = build_loss(tape, batch, draws);
  const double loss = loss_var.value()(0, 0);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at update " << step_ + 1 << " (batch of " << batch.size() << ", steps";
    for (int s : draws.steps) msg << ' ' << s;
    msg << ')';
    throw TrainingError(msg.str());
  }
  tape.backward(loss_var);

  ParamSet& params = model_.params();
  std::vector<const ad::Matrix*> grads(params.size(), nullptr);
  tape.for_each_parameter_grad([&](int slot, const ad::Matrix& g) { grads[static_cast<std::size_t>(slot)] = &g; });
  double norm_sq = 0.0;
  for (const ad::Matrix* g : grads) {
    if (g != nullptr) norm_sq += g->squaredNorm();
  }
  if (!std::isfinite(norm_sq)) throw TrainingError("non-finite gradient at update " + std::to_string(step_ + 1));
  const double norm = std::sqrt(norm_sq);
  const double scale = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  ++step_;
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i] == nullptr) continue;
    const int slot = static_cast<int>(i);
    const ad::Matrix g = *grads[i] * scale;
    ad::Matrix& m = m_.at(slot);
    ad::Matrix& v = v_.at(slot);
    m = (b1 * m + (1.0 - b1) * g).cast<float>().cast<double>();
    v = (b2 * v + (1.0 - b2) * g.cwiseProduct(g)).cast<float>().cast<double>();
    const ad::Matrix update =
        config_.learning_rate * (m / correction1).array() / ((v / correction2).array().sqrt() + config_.adam_eps);
    params.at(slot) = (params.at(slot) - update).cast<float>().cast<double>();
  }
  if (ema_) {
    const double d = *config_.ema_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const int slot = static_cast<int>(i);
      ema_->at(slot) = (d * ema_->at(slot) + (1.0 - d) * params.at(slot)).cast<float>().cast<double>();
    }
  }
  return loss;
}

void Trainer::fit(const std::vector<sim::EpisodeRecord>& episodes,
                  const std::function<void(const StepRecord&)>& on_step) {
  const int horizon = model_.config().denoiser.horizon;
  std::vector<std::size_t> usable;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    if (episodes[e].length() >= horizon) usable.push_back(e);
  }
  if (usable.empty()) throw DataError("no episode is at least one horizon (" + std::to_string(horizon) + ") long");
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  const long per_epoch = static_cast<long>((usable.size() + batch - 1) / batch);
  const long total = config_.max_steps > 0 ? std::min<long>(config_.max_steps, per_epoch * config_.epochs)
                                           : per_epoch * config_.epochs;
  const MapFrame frame = model_.config().frame();
  const Rng root(config_.seed);
  const auto start = std::chrono::steady_clock::now();

  while (step_ < total) {
    const int epoch = static_cast<int>(step_ / per_epoch);
    Rng epoch_rng = root.substream((1ull << 40) + static_cast<std::uint64_t>(epoch));
    std::vector<int> t_now(usable.size());
    for (std::size_t k = 0; k < usable.size(); ++k) {
      t_now[k] = static_cast<int>(epoch_rng.uniform_int(0, episodes[usable[k]].length() - horizon));
    }
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[static_cast<std::size_t>(epoch_rng.uniform_int(0, static_cast<std::int64_t>(k) - 1))]);
    }
    for (long b = step_ % per_epoch; b < per_epoch && step_ < total; ++b) {
      std::vector<TrainingExample> examples;
      for (std::size_t k = static_cast<std::size_t>(b) * batch; k < std::min(order.size(), (b + 1) * batch); ++k) {
        const std::size_t which = order[k];
        examples.push_back(make_training_example(episodes[usable[which]], t_now[which], horizon, frame,
                                                 model_.config().dt_normalizer));
      }
      Rng step_rng = root.substream(static_cast<std::uint64_t>(step_));
      const double loss = train_step(examples, step_rng);
      if (on_step) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        on_step({step_, epoch, loss, wall});
      }
    }
  }
}

void Trainer::restore(long step, const ParamSet& m, const ParamSet& v, std::optional<ParamSet> ema) {
  if (!m.same_layout(model_.params()) || !v.same_layout(model_.params()) ||
      (ema && !ema->same_layout(model_.params()))) {
    throw VersionError("optimizer state does not match the model's parameter layout");
  }
  if (ema.has_value() != config_.ema_decay.has_value()) {
    throw VersionError("checkpoint EMA state does not match train.ema_decay");
  }
  step_ = step;
  m_ = m;
  v_ = v;
  ema_ = std::move(ema);
}

}  // namespace difftrack
