// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "difftrack/denoiser.hpp"
#include "difftrack/diffusion.hpp"
#include "difftrack/eval.hpp"
#include "difftrack/io.hpp"
#include "difftrack/sampler.hpp"
#include "difftrack/sim.hpp"
#include "difftrack/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

namespace difftrack {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- shared toy setup --------------------------------------------------------

ModelConfig toy_config(int agents, TrackingMode mode, double map_size, double dt_normalizer) {
  ModelConfig c;
  c.denoiser.base_channels = 16;
  c.denoiser.depth = 2;
  c.denoiser.attention_heads = 2;
  c.denoiser.head_dim = 8;
  c.denoiser.cond_dim = 16;
  c.denoiser.horizon = 16;
  c.denoiser.kernel_size = 5;
  c.denoiser.norm_groups = 4;
  c.schedule = ScheduleConfig::scaled_default(50);
  c.mode = mode;
  c.agents = agents;
  c.map_size = map_size;
  c.dt_normalizer = dt_normalizer;
  return c;
}

struct StraightLineWorld {
  sim::MapSpec map;
  std::vector<sim::EpisodeRecord> train;
  std::vector<sim::EpisodeRecord> test;
  std::unique_ptr<DiffusionTracker> model;
  std::vector<double> losses;
  double train_seconds = 0.0;
};

sim::EpisodeConfig straight_line_config() {
  sim::EpisodeConfig ec;
  ec.agents = 1;
  ec.behavior = sim::Behavior::kStraightLine;
  ec.length = 120;
  ec.detection_rate = 0.11;
  return ec;
}

/// 200 straight-line episodes on an open map and a model trained 2000 steps on
/// them; sampling uses the EMA weights.
StraightLineWorld& straight_line_world() {
  static std::unique_ptr<StraightLineWorld> world;
  if (world) return *world;
  world = std::make_unique<StraightLineWorld>();
  world->map = sim::generate_map(sim::MapProfile::kOpen, 21);
  const sim::EpisodeConfig ec = straight_line_config();
  world->train = sim::generate_dataset(world->map, ec, 200, 101);
  world->test = sim::generate_dataset(world->map, ec, 30, 202);
  ModelConfig mc = toy_config(1, TrackingMode::kSingleTarget, world->map.size, ec.length);
  mc.schedule = ScheduleConfig::scaled_default(200);
  mc.schedule.kind = ScheduleKind::kCosine;
  world->model = std::make_unique<DiffusionTracker>(mc, 5);
  TrainConfig tc;
  tc.batch_size = 200;
  tc.learning_rate = 1e-2;
  tc.ema_decay = 0.99;
  tc.epochs = 100000;
  tc.max_steps = 2000;
  tc.seed = 9;
  Trainer trainer(*world->model, tc);
  const auto start = std::chrono::steady_clock::now();
  trainer.fit(world->train, [&](const StepRecord& r) { world->losses.push_back(r.loss); });
  world->train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  world->model->params() = *trainer.ema();
  return *world;
}

// --- criteria ----------------------------------------------------------------

Outcome forward_noising_statistics() {
  const NoiseSchedule schedule = schedule_from_betas({0.2, 0.375});  // alpha_bar_2 = 0.8 * 0.625 = 0.5
  const int step = 2;
  TrajectorySlate tau0(2, 8);
  for (std::size_t k = 0; k < tau0.size(); ++k) tau0.values()[k] = -0.9 + 0.11 * static_cast<double>(k);
  const int draws = 10000;
  std::vector<double> sum(tau0.size(), 0.0), sum_sq(tau0.size(), 0.0);
  Rng rng(1);
  for (int d = 0; d < draws; ++d) {
    const TrajectorySlate eps = TrajectorySlate::standard_normal(2, 8, rng);
    const TrajectorySlate x = forward_noise(tau0, step, eps, schedule);
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum[k] += x.values()[k];
      sum_sq[k] += x.values()[k] * x.values()[k];
    }
  }
  double worst_z = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < tau0.size(); ++k) {
    const double mean = sum[k] / draws;
    const double var = (sum_sq[k] - draws * mean * mean) / (draws - 1);
    const double se = std::sqrt(var / draws);
    worst_z = std::max(worst_z, std::abs(mean - std::sqrt(0.5) * tau0.values()[k]) / se);
    worst_var = std::max(worst_var, std::abs(var / 0.5 - 1.0));
  }
  return {worst_z <= 3.0 && worst_var <= 0.05,
          "max |mean error| " + fmt("%.2f", worst_z) + " SE (limit 3), max variance deviation " +
              fmt("%.2f", 100 * worst_var) + "% (limit 5%) over 16 coordinates x 10000 draws"};
}

Outcome sampler_algebra() {
  const NoiseSchedule schedule = schedule_from_betas({0.1, 0.1});  // alpha_2 = 0.9, alpha_bar_2 = 0.81
  TrajectorySlate tau(1, 1), eps(1, 1), z(1, 1);
  tau.at(0, 0, 0) = 1.0;
  eps.at(0, 0, 0) = 1.0;
  const DiffusionState next = denoise_step({tau, 2}, eps, schedule, z);
  const double got = next.slate.at(0, 0, 0);
  const double hand = (1.0 / std::sqrt(0.9)) * (1.0 - 0.1 / std::sqrt(0.19));
  const bool rounds = std::abs(got - 0.8123) < 5e-5;
  return {std::abs(got - hand) <= 1e-6 && rounds && next.step == 1,
          "denoise_step = " + fmt("%.9f", got) + ", closed form " + fmt("%.9f", hand) + " (|diff| " +
              fmt("%.1e", std::abs(got - hand)) + ", limit 1e-6), rounds to " + fmt("%.4f", got)};
}

Outcome attention_oracle() {
  Rng rng(3);
  std::vector<ad::Matrix> q, k, v;
  for (int a = 0; a < 2; ++a) {
    q.push_back(testing::random_matrix(4, 3, rng));
    k.push_back(testing::random_matrix(4, 3, rng));
    v.push_back(testing::random_matrix(4, 3, rng));
  }
  double worst = 0.0;
  for (int heads : {1, 2}) {
    const auto got = cross_attend(q, k, v, heads);
    const auto want = testing::dense_cross_attention(q, k, v, heads);
    for (int a = 0; a < 2; ++a) worst = std::max(worst, (got[a] - want[a]).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-6, "max deviation from dense softmax loop " + fmt("%.2e", worst) + " (limit 1e-6)"};
}

Outcome permutation_equivariance() {
  double worst = 0.0;
  for (int agents : {2, 3, 4}) {
    const DiffusionTracker model(testing::tiny_model_config(agents, 16), 40 + agents);
    worst = std::max(worst, testing::max_equivariance_error(model, agents == 3 ? 34 : 33, 77 + agents));
  }
  return {worst <= 1e-5, "max deviation " + fmt("%.2e", worst) + " over 100 random inputs and permutations (limit 1e-5)"};
}

testing::GradCheckResult objective_gradcheck(const std::function<ObjectiveValue(const TrajectorySlate&)>& f,
                                             const TrajectorySlate& slate) {
  std::vector<ad::Matrix> inputs{Eigen::Map<const ad::Matrix>(slate.values().data(), 2, static_cast<Eigen::Index>(slate.size() / 2))};
  const ObjectiveValue at = f(slate);
  const std::vector<ad::Matrix> analytic{
      Eigen::Map<const ad::Matrix>(at.gradient.values().data(), 2, static_cast<Eigen::Index>(slate.size() / 2))};
  auto loss = [&] {
    TrajectorySlate probe(slate.agents(), slate.horizon());
    std::copy(inputs[0].data(), inputs[0].data() + inputs[0].size(), probe.values().begin());
    return f(probe).value;
  };
  return testing::check_gradients(inputs, analytic, loss, 1e-3, 1e-6);
}

Outcome gradient_checks() {
  Rng rng(8);
  testing::GradCheckResult motion, obstacle;
  ConstraintSet constraints;
  constraints.obstacles = {{{0.0, 0.0}, 0.5}, {{0.4, -0.3}, 0.3}, {{-0.5, 0.5}, 0.4}};
  for (int trial = 0; trial < 10; ++trial) {
    TrajectorySlate s = TrajectorySlate::standard_normal(3, 12, rng);
    for (double& v : s.values()) v *= 0.5;
    const auto m = objective_gradcheck(motion_objective, s);
    const auto o = objective_gradcheck([&](const TrajectorySlate& x) { return obstacle_objective(x, constraints); }, s);
    motion.checked += m.checked, motion.passed += m.passed;
    obstacle.checked += o.checked, obstacle.passed += o.passed;
  }
  const auto denoiser = testing::denoiser_parameter_gradcheck(11, 1e-3);
  const bool pass = motion.pass_fraction() >= 0.95 && obstacle.pass_fraction() >= 0.95 && denoiser.pass_fraction() >= 0.95;
  return {pass, "within 1e-3: motion " + fmt("%.1f", 100 * motion.pass_fraction()) + "% of " +
                    std::to_string(motion.checked) + ", obstacle " + fmt("%.1f", 100 * obstacle.pass_fraction()) +
                    "% of " + std::to_string(obstacle.checked) + ", denoiser parameters " +
                    fmt("%.1f", 100 * denoiser.pass_fraction()) + "% of " + std::to_string(denoiser.checked) +
                    " (limit 95%)"};
}

Outcome toy_training_convergence() {
  StraightLineWorld& w = straight_line_world();
  const double first = std::accumulate(w.losses.begin(), w.losses.begin() + 100, 0.0) / 100.0;
  const double last = std::accumulate(w.losses.end() - 100, w.losses.end(), 0.0) / 100.0;
  const double reduction = 1.0 - last / first;

  EvalOptions opt;
  opt.n_samples = 30;
  opt.point_stride = 8;
  opt.max_points = 60;
  opt.require_detection = true;
  opt.constraints.grad_steps = 0;
  opt.seed = 3;
  const EvalReport report = horizon_sweep(*w.model, w.test, opt);
  const HorizonStats& h = report.per_horizon.front();
  const bool pass = w.losses.size() == 2000 && reduction >= 0.5 && h.ade < h.baseline_ade;
  return {pass, std::to_string(w.losses.size()) + " steps in " + fmt("%.0f", w.train_seconds) + " s, smoothed loss " +
                    fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " (-" + fmt("%.1f", 100 * reduction) +
                    "%, limit 50%); ADE " + fmt("%.4f", h.ade) + " vs stationary baseline " +
                    fmt("%.4f", h.baseline_ade) + " over " + std::to_string(report.n_points) + " detected points x 30 samples"};
}

Outcome guidance_effect() {
  StraightLineWorld& w = straight_line_world();
  const sim::MapSpec dense = sim::generate_map(sim::MapProfile::kDense, 21);
  if (dense.size != w.map.size) return {false, "dense and open maps differ in size"};
  const auto episodes = sim::generate_dataset(dense, straight_line_config(), 20, 303);
  EvalOptions opt;
  opt.n_samples = 30;
  opt.point_stride = 12;
  opt.max_points = 40;
  opt.inpaint_current = true;
  opt.seed = 17;
  opt.constraints.obstacles = normalized_obstacles(dense);
  EvalOptions off = opt;
  off.constraints.grad_steps = 0;
  const auto guided = sample_points(*w.model, episodes, opt);
  const auto unguided = sample_points(*w.model, episodes, off);
  std::vector<TrajectorySlate> g, u;
  for (const auto& p : guided) g.insert(g.end(), p.samples.begin(), p.samples.end());
  for (const auto& p : unguided) u.insert(u.end(), p.samples.begin(), p.samples.end());
  const double rg = collision_rate(g, dense), ru = collision_rate(u, dense);
  const std::size_t states = u.size() * 16;
  const double reduction = ru > 0.0 ? 1.0 - rg / ru : 0.0;
  return {states >= 900 && ru > 0.0 && reduction >= 0.8,
          "collision fraction unguided " + fmt("%.4f", ru) + ", guided " + fmt("%.4f", rg) + " (-" +
              fmt("%.1f", 100 * reduction) + "%, limit 80%) over " + std::to_string(states) +
              " states per arm with matched seeds"};
}

Outcome inpainting_contract() {
  StraightLineWorld& w = straight_line_world();
  const DiffusionTracker& model = *w.model;
  const MapFrame frame = model.config().frame();
  std::size_t slates = 0, held = 0, points = 0;
  for (const auto& ep : w.test) {
    for (const auto& d : ep.detections) {
      if (d.t + model.config().denoiser.horizon > ep.length() || points >= 20) continue;
      const TrainingExample ex = make_training_example(ep, d.t, model.config().denoiser.horizon, frame,
                                                       model.config().dt_normalizer);
      const InpaintMask mask = current_detection_mask(ex.history, 1);
      if (mask.empty()) continue;
      const auto samples =
          monte_carlo_sample(model, model.condition(ex.history), ConstraintSet{}, mask, 10, Rng(points));
      for (const auto& s : samples) held += mask.satisfied_by(s) ? 1 : 0;
      slates += samples.size();
      ++points;
    }
  }
  return {slates > 0 && held == slates, std::to_string(held) + " of " + std::to_string(slates) +
                                             " guided slates hold the pinned detection exactly (" +
                                             std::to_string(points) + " points)"};
}

Outcome origin_ablation() {
  const sim::MapSpec map = sim::generate_map(sim::MapProfile::kPrisoner, 5);
  sim::EpisodeConfig ec;
  ec.agents = 3;
  const auto train = sim::generate_dataset(map, ec, 120, 11);
  const auto test = sim::generate_dataset(map, ec, 20, 12);
  double max_len = 0;
  for (const auto& ep : train) max_len = std::max<double>(max_len, ep.length());

  EvalOptions opt;
  opt.horizons = {4, 8, 16};
  opt.n_samples = 30;
  opt.point_stride = 16;
  opt.max_points = 60;
  opt.constraints.grad_steps = 0;
  opt.seed = 23;
  std::map<TrackingMode, EvalReport> reports;
  double seconds = 0.0;
  for (TrackingMode mode : {TrackingMode::kKnownOrigin, TrackingMode::kUnknownOrigin}) {
    const auto start = std::chrono::steady_clock::now();
    DiffusionTracker model(toy_config(3, mode, map.size, max_len), 31);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.learning_rate = 1e-3;
    tc.epochs = 1000;
    tc.max_steps = 600;
    tc.seed = 41;
    Trainer trainer(model, tc);
    trainer.fit(train);
    reports.emplace(mode, horizon_sweep(model, test, opt));
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  const HorizonStats& known = reports.at(TrackingMode::kKnownOrigin).at(4);
  const HorizonStats& unknown = reports.at(TrackingMode::kUnknownOrigin).at(4);
  const int n_points = reports.at(TrackingMode::kKnownOrigin).n_points;
  std::string rows;
  for (int h : opt.horizons) {
    rows += " h" + std::to_string(h) + " " + fmt("%.4f", reports.at(TrackingMode::kKnownOrigin).at(h).ade) + "/" +
            fmt("%.4f", reports.at(TrackingMode::kUnknownOrigin).at(h).ade);
  }
  return {n_points >= 50 && known.ade <= unknown.ade,
          "ADE at shortest horizon known " + fmt("%.4f", known.ade) + " vs unknown " + fmt("%.4f", unknown.ade) +
              " over " + std::to_string(n_points) + " points x 30 samples;" + rows + " (" + fmt("%.0f", seconds) + " s)"};
}

Outcome metric_oracles() {
  Rng rng(99);
  sim::MapSpec map;
  map.size = 100;
  map.visibility_resolution = 2;
  map.visibility.assign(4, 0.0);
  int exact = 0, ordered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int agents = static_cast<int>(rng.uniform_int(1, 4));
    const int horizon = static_cast<int>(rng.uniform_int(1, 10));
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    const TrajectorySlate truth = TrajectorySlate::standard_normal(agents, horizon, rng);
    std::vector<TrajectorySlate> samples;
    for (int k = 0; k < n; ++k) {
      TrajectorySlate s = TrajectorySlate::standard_normal(agents, horizon, rng);
      for (double& v : s.values()) v *= 0.6;
      samples.push_back(std::move(s));
    }
    map.obstacles.clear();
    for (int o = static_cast<int>(rng.uniform_int(0, 4)); o > 0; --o) {
      map.obstacles.push_back({{rng.uniform(0, 100), rng.uniform(0, 100)}, rng.uniform(2, 30)});
    }
    const double a = ade(samples, truth), m = min_ade(samples, truth);
    const bool same = a == testing::ade_loop(samples, truth) && m == testing::min_ade_loop(samples, truth) &&
                      collision_rate(samples, map) == testing::collision_rate_loop(samples, map);
    exact += same ? 1 : 0;
    ordered += m <= a ? 1 : 0;
  }
  return {exact == 1000 && ordered == 1000, std::to_string(exact) + "/1000 cases identical to loop oracles, min_ade <= ade in " +
                                                std::to_string(ordered) + "/1000"};
}

Outcome simulator_integrity() {
  const std::vector<sim::MapProfile> profiles{sim::MapProfile::kPrisoner, sim::MapProfile::kSmuggler,
                                              sim::MapProfile::kDense, sim::MapProfile::kOpen};
  long obstacle = 0, speed = 0, mismatched = 0, rate_out = 0, regenerated_diff = 0, episodes = 0;
  double max_step = 0.0;
  const double rate = 0.11, lo = 0.10, hi = 0.12;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const sim::MapSpec map = sim::generate_map(profiles[p], 7 + p);
    sim::EpisodeConfig ec;
    ec.detection_rate = rate;
    ec.mixed_behaviors = profiles[p] != sim::MapProfile::kOpen;
    if (profiles[p] == sim::MapProfile::kOpen) ec.behavior = sim::Behavior::kStraightLine, ec.length = 150;
    ec.agents = p == 3 ? 2 : 3;
    const auto first = sim::generate_dataset(map, ec, 250, 1000 + p);
    const auto second = sim::generate_dataset(map, ec, 250, 1000 + p);
    for (std::size_t i = 0; i < first.size(); ++i) {
      const sim::EpisodeCheck check = sim::check_episode(first[i], map, ec.max_speed);
      obstacle += check.obstacle_states;
      speed += check.speed_violations;
      mismatched += check.detection_mismatches;
      max_step = std::max(max_step, check.max_step);
      for (int a = 0; a < first[i].agents(); ++a) {
        const auto n = std::count_if(first[i].detections.begin(), first[i].detections.end(),
                                     [a](const sim::DetectionRecord& d) { return d.agent == a; });
        const double r = static_cast<double>(n) / first[i].length();
        rate_out += (r < lo || r > hi) ? 1 : 0;
      }
      regenerated_diff += io::episode_to_json(first[i]).dump() != io::episode_to_json(second[i]).dump() ? 1 : 0;
      ++episodes;
    }
  }
  const bool pass = episodes == 1000 && obstacle == 0 && speed == 0 && mismatched == 0 && rate_out == 0 &&
                    regenerated_diff == 0;
  return {pass, std::to_string(episodes) + " episodes: " + std::to_string(obstacle) + " obstacle states, " +
                    std::to_string(speed) + " speed violations (max step " + fmt("%.2f", max_step) + "), " +
                    std::to_string(mismatched) + " detection mismatches, " + std::to_string(rate_out) +
                    " agent rates outside [0.10, 0.12], " + std::to_string(regenerated_diff) + " regeneration diffs"};
}

}  // namespace
}  // namespace difftrack

int main(int argc, char** argv) {
  using namespace difftrack;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"forward-noising statistics", forward_noising_statistics},
      {"sampler algebra", sampler_algebra},
      {"attention oracle", attention_oracle},
      {"permutation equivariance", permutation_equivariance},
      {"gradient checks", gradient_checks},
      {"toy training convergence", toy_training_convergence},
      {"constraint guidance effect", guidance_effect},
      {"inpainting contract", inpainting_contract},
      {"origin ablation trend", origin_ablation},
      {"metric oracles", metric_oracles},
      {"simulator integrity", simulator_integrity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && selected.count(id) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %2d  %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
