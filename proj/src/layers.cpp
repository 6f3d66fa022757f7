#include "difftrack/layers.hpp"

#include "difftrack/rng.hpp"

namespace difftrack {

Linear Linear::create(ParamSet& params, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = params.add(name + ".weight", fan_in_uniform(out, in, in, rng));
  l.bias = params.add(name + ".bias", fan_in_uniform(out, 1, in, rng));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x) const {
  return ad::add_bias(ad::matmul(params.bind(tape, weight), x), params.bind(tape, bias));
}

Conv1d Conv1d::create(ParamSet& params, const std::string& name, int in, int out, int kernel,
                      int stride, int pad, Rng& rng) {
  Conv1d c;
  c.in = in;
  c.out = out;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = pad;
  c.weight = params.add(name + ".weight", fan_in_uniform(out, in * kernel, in * kernel, rng));
  c.bias = params.add(name + ".bias", fan_in_uniform(out, 1, in * kernel, rng));
  return c;
}

ad::Var Conv1d::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const {
  return ad::conv1d(x, params.bind(tape, weight), params.bind(tape, bias), length, kernel, stride, pad);
}

GroupNorm GroupNorm::create(ParamSet& params, const std::string& name, int channels, int groups) {
  GroupNorm g;
  g.groups = groups;
  g.gamma = params.add(name + ".gamma", ad::Matrix::Ones(channels, 1));
  g.beta = params.add(name + ".beta", ad::Matrix::Zero(channels, 1));
  return g;
}

ad::Var GroupNorm::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const {
  return ad::group_norm(x, params.bind(tape, gamma), params.bind(tape, beta), groups, length);
}

ConvBlock ConvBlock::create(ParamSet& params, const std::string& name, int in, int out, int kernel,
                            int groups, Rng& rng) {
  ConvBlock b;
  b.conv = Conv1d::create(params, name + ".conv", in, out, kernel, 1, kernel / 2, rng);
  b.norm = GroupNorm::create(params, name + ".norm", out, groups);
  return b;
}

ad::Var ConvBlock::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, int length) const {
  return ad::mish(norm(tape, params, conv(tape, params, x, length), length));
}

FiLM FiLM::create(ParamSet& params, const std::string& name, int cond_dim, int channels, Rng& rng) {
  FiLM f;
  f.channels = channels;
  f.proj = Linear::create(params, name + ".proj", cond_dim, 2 * channels, rng);
  params.at(f.proj.bias).topRows(channels).array() += 1.0;
  return f;
}

ad::Var FiLM::operator()(ad::Tape& tape, const ParamSet& params, ad::Var features, ad::Var cond,
                         int length) const {
  ad::Var scale_shift = proj(tape, params, ad::mish(cond));
  return ad::film(features, ad::slice_rows(scale_shift, 0, channels),
                  ad::slice_rows(scale_shift, channels, channels), length);
}

ResidualBlock ResidualBlock::create(ParamSet& params, const std::string& name, int in, int out,
                                    int cond_dim, int kernel, int groups, Rng& rng) {
  ResidualBlock r;
  r.first = ConvBlock::create(params, name + ".block0", in, out, kernel, groups, rng);
  r.first_film = FiLM::create(params, name + ".film0", cond_dim, out, rng);
  r.second = ConvBlock::create(params, name + ".block1", out, out, kernel, groups, rng);
  r.second_film = FiLM::create(params, name + ".film1", cond_dim, out, rng);
  if (in != out) r.skip = Conv1d::create(params, name + ".skip", in, out, 1, 1, 0, rng);
  return r;
}

ad::Var ResidualBlock::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x, ad::Var cond,
                                  int length) const {
  ad::Var h = first_film(tape, params, first(tape, params, x, length), cond, length);
  h = second_film(tape, params, second(tape, params, h, length), cond, length);
  return ad::add(h, skip ? (*skip)(tape, params, x, length) : x);
}

CrossAttentionBlock CrossAttentionBlock::create(ParamSet& params, const std::string& name,
                                                int channels, int heads, int head_dim, int groups,
                                                Rng& rng) {
  CrossAttentionBlock b;
  const int width = heads * head_dim;
  b.heads = heads;
  b.norm = GroupNorm::create(params, name + ".norm", channels, groups);
  b.query = Linear::create(params, name + ".query", channels, width, rng);
  b.key = Linear::create(params, name + ".key", channels, width, rng);
  b.value = Linear::create(params, name + ".value", channels, width, rng);
  b.output = Linear::create(params, name + ".output", width, channels, rng);
  return b;
}

ad::Var CrossAttentionBlock::operator()(ad::Tape& tape, const ParamSet& params, ad::Var x,
                                        int agents, int length) const {
  ad::Var h = norm(tape, params, x, length);
  ad::Var attended = ad::cross_attention(query(tape, params, h), key(tape, params, h),
                                         value(tape, params, h), agents, length, heads);
  return ad::add(x, output(tape, params, attended));
}

}  // namespace difftrack
