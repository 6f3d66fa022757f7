#pragma once

#include <span>
#include <vector>

#include "difftrack/autodiff.hpp"
#include "difftrack/layers.hpp"
#include "difftrack/params.hpp"

namespace difftrack {

class Rng;

struct DenoiserConfig {
  int base_channels = 32;
  int depth = 2;
  int attention_heads = 4;
  int head_dim = 16;
  int cond_dim = 64;
  int horizon = 60;
  int kernel_size = 5;
  int norm_groups = 8;

  int attention_width() const noexcept { return attention_heads * head_dim; }
  int channels_at(int level) const noexcept { return base_channels << level; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Detection conditioning for one slate: either one embedding per agent
/// (columns = agents) or one embedding shared by every pathway (one column).
struct ConditionVector {
  ad::Matrix embedding;  // [cond_dim, 1 or agents]
  bool per_agent = false;

  int width() const noexcept { return static_cast<int>(embedding.rows()); }
  /// [cond_dim, agents], broadcasting a shared embedding.
  ad::Matrix expanded(int agents) const;
};

/// Sinusoidal embedding of diffusion steps, one column per entry of `steps`.
ad::Matrix step_embedding(std::span<const int> steps, int dim);

/// Noise-prediction network: one shared-weight temporal U-net pathway per
/// agent with FiLM conditioning and a cross-agent attention block after every
/// down and up level.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, ParamSet& params, Rng& rng);

  const DenoiserConfig& config() const noexcept { return config_; }

  /// x: [2, segments * horizon] noisy coordinates, segment s = group * agents + a.
  /// cond: [cond_dim, segments] detection embeddings. steps: one per segment.
  ad::Var forward(ad::Tape& tape, const ParamSet& params, ad::Var x, ad::Var cond,
                  std::span<const int> steps, int agents) const;

  /// Zeroes the final projection so the network predicts exactly zero noise.
  void zero_output_layer(ParamSet& params) const;

 private:
  struct Level {
    ResidualBlock block;
    Conv1d resample;  // stride-2 downsample on the way down; unused on the way up
    CrossAttentionBlock attention;
  };

  DenoiserConfig config_;
  Linear step_hidden_;
  Linear step_out_;
  std::vector<Level> down_;
  ResidualBlock mid_first_;
  ResidualBlock mid_second_;
  std::vector<Level> up_;  // up_[l] produces level l
  ConvBlock final_block_;
  Conv1d final_proj_;
};

/// Multi-head cross attention on plain matrices. q[m], k[m], v[m] are
/// [heads * head_dim, tokens] for agent m; returns one [heads * head_dim, tokens]
/// array per agent: out_m = sum_n softmax(Q_m^T K_n / sqrt(head_dim)) applied to V_n.
std::vector<ad::Matrix> cross_attend(std::span<const ad::Matrix> q, std::span<const ad::Matrix> k,
                                     std::span<const ad::Matrix> v, int heads);

/// Applies a FiLM layer to one [channels, length] feature array.
ad::Matrix film_modulate(const ad::Matrix& features, const ad::Matrix& cond, const FiLM& layer,
                         const ParamSet& params);

}  // namespace difftrack
