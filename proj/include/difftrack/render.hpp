#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "difftrack/sim.hpp"

namespace difftrack::render {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major, row 0 at the top

  Image(int w, int h, Rgb fill = {});
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  void blend(int x, int y, Rgb c, double alpha);
};

/// Blue at fraction 0 through red at fraction 1.
Rgb time_color(double fraction);

/// Map backdrop: visibility as grey shading (low visibility darker),
/// mountains near-black, hideouts and rendezvous points marked.
Image draw_map(const sim::MapSpec& map, int pixels);

/// Map plus the episode's ground truth over [t_now, t_now + horizon), its
/// detections up to t_now, and sampled hypotheses (normalized coordinates)
/// colored by time.
Image draw_scene(const sim::MapSpec& map, const sim::EpisodeRecord& episode, int t_now, int horizon,
                 std::span<const TrajectorySlate> samples, int pixels);

/// Throws IoError on failure.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace difftrack::render
