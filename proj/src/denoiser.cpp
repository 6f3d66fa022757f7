#include "difftrack/denoiser.hpp"

#include <cmath>
#include <string>

#include "difftrack/errors.hpp"
#include "difftrack/rng.hpp"

namespace difftrack {

void DenoiserConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ConfigError(field, "must be positive, got " + std::to_string(v));
  };
  positive(base_channels, "base_channels");
  positive(depth, "depth");
  positive(attention_heads, "attention_heads");
  positive(head_dim, "head_dim");
  positive(cond_dim, "cond_dim");
  positive(horizon, "horizon");
  positive(kernel_size, "kernel_size");
  positive(norm_groups, "norm_groups");
  if (horizon % (1 << depth) != 0) {
    throw ConfigError("horizon", std::to_string(horizon) + " is not divisible by 2^depth = " +
                                     std::to_string(1 << depth));
  }
  if (base_channels % norm_groups != 0) {
    throw ConfigError("norm_groups", "must divide base_channels");
  }
  if (kernel_size % 2 == 0) throw ConfigError("kernel_size", "must be odd");
  if (cond_dim % 2 != 0) throw ConfigError("cond_dim", "must be even for the step embedding");
}

ad::Matrix ConditionVector::expanded(int agents) const {
  if (per_agent) {
    if (embedding.cols() != agents) {
      throw DimensionError("per-agent condition has " + std::to_string(embedding.cols()) +
                           " columns for " + std::to_string(agents) + " agents");
    }
    return embedding;
  }
  if (embedding.cols() != 1) throw DimensionError("shared condition must have one column");
  return embedding.replicate(1, agents);
}

ad::Matrix step_embedding(std::span<const int> steps, int dim) {
  const int half = dim / 2;
  ad::Matrix out(dim, static_cast<Eigen::Index>(steps.size()));
  const double log_scale = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  for (std::size_t c = 0; c < steps.size(); ++c) {
    for (int k = 0; k < half; ++k) {
      const double arg = steps[c] * std::exp(-log_scale * k);
      out(k, static_cast<Eigen::Index>(c)) = std::sin(arg);
      out(half + k, static_cast<Eigen::Index>(c)) = std::cos(arg);
    }
  }
  return out;
}

Denoiser::Denoiser(const DenoiserConfig& config, ParamSet& params, Rng& rng) : config_(config) {
  config_.validate();
  const int cond = config.cond_dim;
  const int k = config.kernel_size;
  const int groups = config.norm_groups;
  step_hidden_ = Linear::create(params, "denoiser.step.hidden", cond, 2 * cond, rng);
  step_out_ = Linear::create(params, "denoiser.step.out", 2 * cond, cond, rng);

  int in = 2;
  for (int l = 0; l < config.depth; ++l) {
    const std::string name = "denoiser.down" + std::to_string(l);
    const int ch = config.channels_at(l);
    Level level;
    level.block = ResidualBlock::create(params, name + ".res", in, ch, cond, k, groups, rng);
    level.resample = Conv1d::create(params, name + ".downsample", ch, ch, 3, 2, 1, rng);
    level.attention = CrossAttentionBlock::create(params, name + ".attn", ch, config.attention_heads,
                                                  config.head_dim, groups, rng);
    down_.push_back(level);
    in = ch;
  }
  const int mid = config.channels_at(config.depth);
  mid_first_ = ResidualBlock::create(params, "denoiser.mid0", in, mid, cond, k, groups, rng);
  mid_second_ = ResidualBlock::create(params, "denoiser.mid1", mid, mid, cond, k, groups, rng);

  up_.resize(static_cast<std::size_t>(config.depth));
  int below = mid;
  for (int l = config.depth - 1; l >= 0; --l) {
    const std::string name = "denoiser.up" + std::to_string(l);
    const int ch = config.channels_at(l);
    Level level;
    level.block = ResidualBlock::create(params, name + ".res", below + ch, ch, cond, k, groups, rng);
    level.attention = CrossAttentionBlock::create(params, name + ".attn", ch, config.attention_heads,
                                                  config.head_dim, groups, rng);
    up_[static_cast<std::size_t>(l)] = level;
    below = ch;
  }
  final_block_ = ConvBlock::create(params, "denoiser.final.block", config.base_channels,
                                   config.base_channels, k, groups, rng);
  final_proj_ = Conv1d::create(params, "denoiser.final.proj", config.base_channels, 2, 1, 1, 0, rng);
}

void Denoiser::zero_output_layer(ParamSet& params) const {
  params.at(final_proj_.weight).setZero();
  params.at(final_proj_.bias).setZero();
}

ad::Var Denoiser::forward(ad::Tape& tape, const ParamSet& params, ad::Var x, ad::Var cond,
                          std::span<const int> steps, int agents) const {
  const int horizon = config_.horizon;
  if (x.rows() != 2) throw DimensionError("denoiser input must have 2 coordinate rows");
  if (x.cols() % horizon != 0) {
    throw DimensionError("denoiser input width " + std::to_string(x.cols()) +
                         " is not a multiple of horizon " + std::to_string(horizon));
  }
  const auto segments = x.cols() / horizon;
  if (agents <= 0 || segments % agents != 0) {
    throw DimensionError(std::to_string(segments) + " segments do not split into groups of " +
                         std::to_string(agents) + " agents");
  }
  if (cond.rows() != config_.cond_dim || cond.cols() != segments) {
    throw DimensionError("condition must be " + std::to_string(config_.cond_dim) + "x" +
                         std::to_string(segments));
  }
  if (static_cast<Eigen::Index>(steps.size()) != segments) {
    throw DimensionError("need one diffusion step per segment");
  }
  if (!x.value().allFinite() || !cond.value().allFinite()) {
    throw NumericError("non-finite denoiser input");
  }

  ad::Var step = tape.constant(step_embedding(steps, config_.cond_dim));
  step = step_out_(tape, params, ad::mish(step_hidden_(tape, params, step)));
  const ad::Var signal = ad::add(cond, step);

  std::vector<ad::Var> skips;
  ad::Var h = x;
  int length = horizon;
  for (const Level& level : down_) {
    h = level.block(tape, params, h, signal, length);
    skips.push_back(h);
    h = level.resample(tape, params, h, length);
    length /= 2;
    h = level.attention(tape, params, h, agents, length);
  }
  h = mid_first_(tape, params, h, signal, length);
  h = mid_second_(tape, params, h, signal, length);
  for (int l = config_.depth - 1; l >= 0; --l) {
    const Level& level = up_[static_cast<std::size_t>(l)];
    h = ad::upsample2(h);
    length *= 2;
    h = ad::concat_rows(h, skips[static_cast<std::size_t>(l)]);
    h = level.block(tape, params, h, signal, length);
    h = level.attention(tape, params, h, agents, length);
  }
  h = final_block_(tape, params, h, length);
  return final_proj_(tape, params, h, length);
}

std::vector<ad::Matrix> cross_attend(std::span<const ad::Matrix> q, std::span<const ad::Matrix> k,
                                     std::span<const ad::Matrix> v, int heads) {
  if (q.empty() || q.size() != k.size() || q.size() != v.size()) {
    throw DimensionError("cross_attend needs matching non-empty q/k/v lists");
  }
  const Eigen::Index rows = q[0].rows();
  const Eigen::Index tokens = q[0].cols();
  for (std::span<const ad::Matrix> list : {q, k, v}) {
    for (const ad::Matrix& m : list) {
      if (m.rows() != rows || m.cols() != tokens) {
        throw DimensionError("cross_attend: heterogeneous agent feature shapes");
      }
    }
  }
  const auto agents = static_cast<Eigen::Index>(q.size());
  auto pack = [&](std::span<const ad::Matrix> list) {
    ad::Matrix m(rows, agents * tokens);
    for (Eigen::Index a = 0; a < agents; ++a) m.middleCols(a * tokens, tokens) = list[a];
    return m;
  };
  ad::Tape tape(false);
  ad::Var out = ad::cross_attention(tape.constant(pack(q)), tape.constant(pack(k)),
                                    tape.constant(pack(v)), static_cast<int>(agents),
                                    static_cast<int>(tokens), heads);
  std::vector<ad::Matrix> result;
  for (Eigen::Index a = 0; a < agents; ++a) result.push_back(out.value().middleCols(a * tokens, tokens));
  return result;
}

ad::Matrix film_modulate(const ad::Matrix& features, const ad::Matrix& cond, const FiLM& layer,
                         const ParamSet& params) {
  if (cond.rows() != layer.proj.in || cond.cols() != 1) {
    throw DimensionError("film_modulate: condition width " + std::to_string(cond.rows()) +
                         " does not match projection input " + std::to_string(layer.proj.in));
  }
  if (features.rows() != layer.channels) {
    throw DimensionError("film_modulate: feature channels do not match layer");
  }
  ad::Tape tape(false);
  return layer(tape, params, tape.constant(features), tape.constant(cond),
               static_cast<int>(features.cols()))
      .value();
}

}  // namespace difftrack
