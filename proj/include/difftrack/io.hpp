#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "difftrack/eval.hpp"
#include "difftrack/sim.hpp"

namespace difftrack::io {

using Json = nlohmann::ordered_json;

/// Major.minor version written first in every file; readers accept any
/// minor revision of kFormatMajor.
inline constexpr const char* kFormatVersion = "1.0";
inline constexpr int kFormatMajor = 1;

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 hex digits of the FNV-1a hash of the compact JSON dump.
std::string config_hash(const Json& config);

/// Throws VersionError unless `record` carries a supported format_version.
void check_format_version(const Json& record, const std::string& where);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

Json episode_to_json(const sim::EpisodeRecord& episode);
sim::EpisodeRecord episode_from_json(const Json& record, const std::string& where);
void write_episodes(const std::filesystem::path& path, std::span<const sim::EpisodeRecord> episodes);
/// Throws DataError naming the file and line of a malformed record.
std::vector<sim::EpisodeRecord> read_episodes(const std::filesystem::path& path);

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

Json map_to_json(const sim::MapSpec& map, const Provenance& provenance);
sim::MapSpec map_from_json(const Json& record, const std::string& where);
void write_map(const std::filesystem::path& path, const sim::MapSpec& map, const Provenance& provenance);
sim::MapSpec read_map(const std::filesystem::path& path);

void write_samples(const std::filesystem::path& path, std::span<const PointSamples> records,
                   const Provenance& provenance);
std::vector<PointSamples> read_samples(const std::filesystem::path& path);

Json report_to_json(const EvalReport& report);
/// One row per horizon: horizon,ade,ade_std_err,min_ade,min_ade_std_err,baseline_ade.
std::string report_to_csv(const EvalReport& report);

}  // namespace difftrack::io
