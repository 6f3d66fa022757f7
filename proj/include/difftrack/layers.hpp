#pragma once

#include <optional>
#include <string>

#include "difftrack/autodiff.hpp"
#include "difftrack/params.hpp"

namespace difftrack {

class Rng;

// Layers hold parameter slots only; values live in a ParamSet passed at call
// time, so one layer description serves training and read-only sampling.

struct Linear {
  int weight = -1;  // [out, in]
  int bias = -1;    // [out, 1]
  int in = 0;
  int out = 0;

  static Linear create(ParamSet& params, const std::string& name, int in, int out, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x) const;
};

struct Conv1d {
  int weight = -1;  // [out, in * kernel]
  int bias = -1;
  int in = 0;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  static Conv1d create(ParamSet& params, const std::string& name, int in, int out, int kernel,
                       int stride, int pad, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const;
  int output_length(int length) const { return (length + 2 * pad - kernel) / stride + 1; }
};

struct GroupNorm {
  int gamma = -1;
  int beta = -1;
  int groups = 1;

  static GroupNorm create(ParamSet& params, const std::string& name, int channels, int groups);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const;
};

/// conv -> group norm -> mish
struct ConvBlock {
  Conv1d conv;
  GroupNorm norm;

  static ConvBlock create(ParamSet& params, const std::string& name, int in, int out, int kernel,
                          int groups, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const;
};

/// Feature-wise linear modulation: [gamma; beta] = W * mish(cond) + b, then
/// gamma * features + beta per channel. The gamma half of the bias starts at
/// one so a fresh layer is close to identity.
struct FiLM {
  Linear proj;  // cond_dim -> 2 * channels
  int channels = 0;

  static FiLM create(ParamSet& params, const std::string& name, int cond_dim, int channels, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var features, ad::Var cond,
                     int length) const;
};

/// Two FiLM-conditioned conv blocks with a residual path (1x1 conv when the
/// channel count changes).
struct ResidualBlock {
  ConvBlock first;
  FiLM first_film;
  ConvBlock second;
  FiLM second_film;
  std::optional<Conv1d> skip;

  static ResidualBlock create(ParamSet& params, const std::string& name, int in, int out,
                              int cond_dim, int kernel, int groups, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, ad::Var cond,
                     int length) const;
};

/// Pre-norm multi-head cross-agent attention with a residual connection.
struct CrossAttentionBlock {
  GroupNorm norm;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static CrossAttentionBlock create(ParamSet& params, const std::string& name, int channels,
                                    int heads, int head_dim, int groups, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int agents,
                     int length) const;
};

}  // namespace difftrack
