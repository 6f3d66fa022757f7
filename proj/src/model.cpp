#include "difftrack/model.hpp"

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

TrackingMode parse_tracking_mode(const std::string& name) {
  if (name == "single" || name == "single-target") return TrackingMode::kSingleTarget;
  if (name == "multi-known-origin" || name == "known-origin") return TrackingMode::kKnownOrigin;
  if (name == "multi-unknown-origin" || name == "unknown-origin") return TrackingMode::kUnknownOrigin;
  throw ConfigError("mode", "unknown tracking mode '" + name + "'");
}

std::string to_string(TrackingMode mode) {
  switch (mode) {
    case TrackingMode::kSingleTarget: return "single";
    case TrackingMode::kKnownOrigin: return "multi-known-origin";
    case TrackingMode::kUnknownOrigin: return "multi-unknown-origin";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  denoiser.validate();
  if (agents < 1) throw ConfigError("agents", "must be >= 1");
  if (mode == TrackingMode::kSingleTarget && agents != 1) {
    throw ConfigError("agents", "single-target mode tracks exactly one agent");
  }
  if (!(dt_normalizer > 0.0)) throw ConfigError("dt_normalizer", "must be positive");
  if (!(map_size > 0.0)) throw ConfigError("map_size", "must be positive");
}

ad::Matrix pack_slates(std::span<const TrajectorySlate> slates) {
  if (slates.empty()) throw DimensionError("pack_slates: empty batch");
  const int agents = slates[0].agents();
  const int horizon = slates[0].horizon();
  ad::Matrix out(2, static_cast<Eigen::Index>(slates.size()) * agents * horizon);
  Eigen::Index col = 0;
  for (const TrajectorySlate& s : slates) {
    require_same_shape(slates[0], s, "pack_slates");
    for (int a = 0; a < agents; ++a) {
      for (int t = 0; t < horizon; ++t, ++col) {
        out(0, col) = s.at(a, t, 0);
        out(1, col) = s.at(a, t, 1);
      }
    }
  }
  return out;
}

std::vector<TrajectorySlate> unpack_slates(const ad::Matrix& packed, int agents, int horizon) {
  const Eigen::Index per = static_cast<Eigen::Index>(agents) * horizon;
  if (packed.rows() != 2 || packed.cols() % per != 0) {
    throw DimensionError("unpack_slates: packed matrix does not tile into slates");
  }
  std::vector<TrajectorySlate> out;
  Eigen::Index col = 0;
  for (Eigen::Index s = 0; s < packed.cols() / per; ++s) {
    TrajectorySlate slate(agents, horizon);
    for (int a = 0; a < agents; ++a) {
      for (int t = 0; t < horizon; ++t, ++col) {
        slate.at(a, t, 0) = packed(0, col);
        slate.at(a, t, 1) = packed(1, col);
      }
    }
    out.push_back(std::move(slate));
  }
  return out;
}

DiffusionTracker::DiffusionTracker(const ModelConfig& config, std::uint64_t init_seed)
    : config_(config), schedule_(config.schedule.build()) {
  config_.validate();
  Rng rng(init_seed);
  encoder_ = DetectionEncoder(config.denoiser.cond_dim, params_, rng);
  denoiser_ = Denoiser(config.denoiser, params_, rng);
}

std::vector<std::vector<Detection>> DiffusionTracker::sequences_for(const DetectionHistory& history) const {
  if (config_.encoder_mode() == EncoderMode::kPerAgent) return split_by_agent(history, config_.agents);
  return {history.detections};
}

ConditionVector DiffusionTracker::condition(const DetectionHistory& history) const {
  ad::Tape tape(false);
  const auto sequences = sequences_for(history);
  ConditionVector cond;
  cond.embedding = encoder_.encode(tape, params_, sequences).value();
  cond.per_agent = config_.encoder_mode() == EncoderMode::kPerAgent;
  return cond;
}

ad::Var DiffusionTracker::condition_batch(ad::Tape& tape, const ParamSet& params,
                                      std::span<const DetectionHistory> histories) const {
  std::vector<std::vector<Detection>> sequences;
  for (const DetectionHistory& h : histories) {
    auto s = sequences_for(h);
    for (auto& seq : s) sequences.push_back(std::move(seq));
  }
  ad::Var emb = encoder_.encode(tape, params, sequences);
  if (config_.encoder_mode() == EncoderMode::kShared && config_.agents > 1) {
    emb = ad::repeat_cols(emb, config_.agents);
  }
  return emb;
}

std::vector<TrajectorySlate> DiffusionTracker::predict_noise(std::span<const TrajectorySlate> slates,
                                                         int step, const ConditionVector& cond) const {
  if (slates.empty()) return {};
  const int agents = slates[0].agents();
  const int horizon = slates[0].horizon();
  if (horizon != config_.denoiser.horizon) {
    throw DimensionError("slate horizon " + std::to_string(horizon) +
                         " does not match model horizon " + std::to_string(config_.denoiser.horizon));
  }
  if (step < 1 || step > schedule_.num_steps) {
    throw PreconditionError("predict_noise: step " + std::to_string(step) + " outside schedule");
  }
  if (cond.width() != config_.denoiser.cond_dim) {
    throw DimensionError("condition width " + std::to_string(cond.width()) + " != cond_dim " +
                         std::to_string(config_.denoiser.cond_dim));
  }
  const ad::Matrix per_slate = cond.expanded(agents);
  const auto count = static_cast<Eigen::Index>(slates.size());
  ad::Tape tape(false);
  const std::vector<int> steps(static_cast<std::size_t>(count * agents), step);
  const ad::Var out = denoiser_.forward(tape, params_, tape.constant(pack_slates(slates)),
                                        tape.constant(per_slate.replicate(1, count)), steps, agents);
  return unpack_slates(out.value(), agents, horizon);
}

TrajectorySlate DiffusionTracker::predict_noise(const TrajectorySlate& slate, int step,
                                            const ConditionVector& cond) const {
  return predict_noise(std::span<const TrajectorySlate>(&slate, 1), step, cond).front();
}

}  // namespace difftrack
