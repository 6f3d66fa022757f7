#include "difftrack/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "difftrack/errors.hpp"

namespace difftrack::io {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

Json point(Vec2 p) { return Json::array({p[0], p[1]}); }

Vec2 point_from(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw DataError("expected an [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json points(const std::vector<Vec2>& ps) {
  Json out = Json::array();
  for (const Vec2& p : ps) out.push_back(point(p));
  return out;
}

std::vector<Vec2> points_from(const Json& j) {
  std::vector<Vec2> out;
  for (const Json& p : j) out.push_back(point_from(p));
  return out;
}

/// Integer-valued doubles are written as JSON integers.
Json quantized(Vec2 p) {
  return Json::array({static_cast<std::int64_t>(p[0]), static_cast<std::int64_t>(p[1])});
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const Json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

void check_format_version(const Json& record, const std::string& where) {
  if (!record.is_object() || !record.contains("format_version") || !record["format_version"].is_string()) {
    throw VersionError(where + ": missing format_version");
  }
  const std::string v = record["format_version"].get<std::string>();
  const auto dot = v.find('.');
  int major = -1;
  try {
    major = std::stoi(v.substr(0, dot));
  } catch (const std::exception&) {
    throw VersionError(where + ": unparseable format_version '" + v + "'");
  }
  if (major != kFormatMajor) {
    throw VersionError(where + ": unsupported format_version " + v + " (this build reads " +
                       std::to_string(kFormatMajor) + ".x)");
  }
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& value) {
  std::ofstream out = open_out(path);
  out << value.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Json episode_to_json(const sim::EpisodeRecord& ep) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["episode_id"] = ep.episode_id;
  j["behavior"] = sim::to_string(ep.behavior);
  j["goal_ids"] = ep.goal_ids;
  j["map_ref"] = ep.map_ref;
  j["detection_rate"] = ep.detection_rate;
  Json trajectories = Json::array();
  for (const auto& traj : ep.trajectories) {
    Json t = Json::array();
    for (const Vec2& p : traj) t.push_back(quantized(p));
    trajectories.push_back(std::move(t));
  }
  j["trajectories"] = std::move(trajectories);
  Json detections = Json::array();
  for (const sim::DetectionRecord& d : ep.detections) {
    detections.push_back(Json::array({d.t, d.agent, static_cast<std::int64_t>(d.x), static_cast<std::int64_t>(d.y)}));
  }
  j["detections"] = std::move(detections);
  j["config_hash"] = ep.config_hash;
  j["seed"] = ep.seed;
  return j;
}

sim::EpisodeRecord episode_from_json(const Json& j, const std::string& where) {
  check_format_version(j, where);
  try {
    sim::EpisodeRecord ep;
    ep.episode_id = j.at("episode_id").get<std::string>();
    ep.behavior = sim::parse_behavior(j.at("behavior").get<std::string>());
    ep.goal_ids = j.at("goal_ids").get<std::vector<int>>();
    ep.map_ref = j.at("map_ref").get<std::string>();
    ep.detection_rate = j.at("detection_rate").get<double>();
    for (const Json& traj : j.at("trajectories")) ep.trajectories.push_back(points_from(traj));
    for (const Json& d : j.at("detections")) {
      if (!d.is_array() || d.size() != 4) throw DataError("detection must be [t, agent, x, y]");
      ep.detections.push_back({d[0].get<int>(), d[1].get<int>(), d[2].get<double>(), d[3].get<double>()});
    }
    ep.config_hash = j.at("config_hash").get<std::string>();
    ep.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& traj : ep.trajectories) {
      if (traj.size() != ep.trajectories[0].size()) throw DataError("agent trajectories differ in length");
    }
    return ep;
  } catch (const Json::exception& e) {
    throw DataError(where + ": " + e.what());
  } catch (const Error& e) {
    throw DataError(where + ": " + e.what());
  }
}

void write_episodes(const std::filesystem::path& path, std::span<const sim::EpisodeRecord> episodes) {
  std::ofstream out = open_out(path);
  for (const sim::EpisodeRecord& ep : episodes) out << episode_to_json(ep).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<sim::EpisodeRecord> read_episodes(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<sim::EpisodeRecord> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    out.push_back(episode_from_json(j, where));
  }
  return out;
}

Json map_to_json(const sim::MapSpec& map, const Provenance& provenance) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "map";
  j["id"] = map.id;
  j["size"] = map.size;
  Json obstacles = Json::array();
  for (const sim::Obstacle& o : map.obstacles) obstacles.push_back({{"center", point(o.center)}, {"radius", o.radius}});
  j["obstacles"] = std::move(obstacles);
  j["visibility_resolution"] = map.visibility_resolution;
  j["visibility"] = map.visibility;
  j["start_center"] = point(map.start_center);
  j["start_spread"] = map.start_spread;
  j["hideouts"] = points(map.hideouts);
  j["rendezvous_points"] = points(map.rendezvous_points);
  j["config_hash"] = provenance.config_hash;
  j["seed"] = provenance.seed;
  return j;
}

sim::MapSpec map_from_json(const Json& j, const std::string& where) {
  check_format_version(j, where);
  try {
    sim::MapSpec map;
    map.id = j.at("id").get<std::string>();
    map.size = j.at("size").get<double>();
    for (const Json& o : j.at("obstacles")) {
      map.obstacles.push_back({point_from(o.at("center")), o.at("radius").get<double>()});
    }
    map.visibility_resolution = j.at("visibility_resolution").get<int>();
    map.visibility = j.at("visibility").get<std::vector<double>>();
    map.start_center = point_from(j.at("start_center"));
    map.start_spread = j.at("start_spread").get<double>();
    map.hideouts = points_from(j.at("hideouts"));
    map.rendezvous_points = points_from(j.at("rendezvous_points"));
    map.validate();
    return map;
  } catch (const Json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

void write_map(const std::filesystem::path& path, const sim::MapSpec& map, const Provenance& provenance) {
  std::ofstream out = open_out(path);
  out << map_to_json(map, provenance).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

sim::MapSpec read_map(const std::filesystem::path& path) { return map_from_json(read_json(path), path.string()); }

void write_samples(const std::filesystem::path& path, std::span<const PointSamples> records,
                   const Provenance& provenance) {
  std::ofstream out = open_out(path);
  for (const PointSamples& r : records) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "samples";
    j["episode_id"] = r.episode_id;
    j["t_now"] = r.t_now;
    j["mode"] = r.mode;
    j["guided"] = r.guided;
    j["inpainted"] = r.inpainted;
    j["agents"] = r.samples.empty() ? 0 : r.samples[0].agents();
    j["horizon"] = r.samples.empty() ? 0 : r.samples[0].horizon();
    Json slates = Json::array();
    for (const TrajectorySlate& s : r.samples) slates.push_back(std::vector<double>(s.values().begin(), s.values().end()));
    j["samples"] = std::move(slates);
    j["config_hash"] = provenance.config_hash;
    j["seed"] = provenance.seed;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<PointSamples> read_samples(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<PointSamples> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const Json j = Json::parse(line);
      check_format_version(j, where);
      PointSamples r;
      r.episode_id = j.at("episode_id").get<std::string>();
      r.t_now = j.at("t_now").get<int>();
      r.mode = j.value("mode", "");
      r.guided = j.at("guided").get<bool>();
      r.inpainted = j.at("inpainted").get<bool>();
      const int agents = j.at("agents").get<int>();
      const int horizon = j.at("horizon").get<int>();
      for (const Json& s : j.at("samples")) {
        const auto values = s.get<std::vector<double>>();
        TrajectorySlate slate(agents, horizon);
        if (values.size() != slate.size()) throw DataError(where + ": sample size does not match agents x horizon");
        std::copy(values.begin(), values.end(), slate.values().begin());
        r.samples.push_back(std::move(slate));
      }
      out.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

Json report_to_json(const EvalReport& report) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "eval-report";
  j["mode"] = report.mode;
  j["n_samples"] = report.n_samples;
  j["n_points"] = report.n_points;
  j["collision_rate"] = report.collision_rate ? Json(*report.collision_rate) : Json(nullptr);
  Json rows = Json::array();
  for (const HorizonStats& h : report.per_horizon) {
    rows.push_back({{"horizon", h.horizon},
                    {"ade", h.ade},
                    {"ade_std_err", h.ade_std_err},
                    {"min_ade", h.min_ade},
                    {"min_ade_std_err", h.min_ade_std_err},
                    {"baseline_ade", h.baseline_ade}});
  }
  j["per_horizon"] = std::move(rows);
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  return j;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "horizon,ade,ade_std_err,min_ade,min_ade_std_err,baseline_ade\n";
  for (const HorizonStats& h : report.per_horizon) {
    out << h.horizon << ',' << h.ade << ',' << h.ade_std_err << ',' << h.min_ade << ',' << h.min_ade_std_err << ','
        << h.baseline_ade << '\n';
  }
  return out.str();
}

}  // namespace difftrack::io
