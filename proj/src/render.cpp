#include "difftrack/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "difftrack/errors.hpp"

namespace difftrack::render {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  if (w <= 0 || h <= 0) throw DimensionError("image size must be positive");
}

void Image::blend(int x, int y, Rgb c, double alpha) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  Rgb& p = at(x, y);
  auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
  };
  p = {mix(p.r, c.r), mix(p.g, c.g), mix(p.b, c.b)};
}

Rgb time_color(double fraction) {
  const double f = std::clamp(fraction, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255 * f)), 40, static_cast<std::uint8_t>(std::lround(255 * (1 - f)))};
}

namespace {

struct Canvas {
  Image image;
  double scale;  // pixels per world unit

  int px(double world_x) const { return static_cast<int>(std::floor(world_x * scale)); }
  // World y grows upward; image rows grow downward.
  int py(double world_y) const { return image.height - 1 - static_cast<int>(std::floor(world_y * scale)); }

  void disk(Vec2 p, double radius_px, Rgb c, double alpha = 1.0) {
    const int cx = px(p[0]), cy = py(p[1]);
    const int r = static_cast<int>(std::ceil(radius_px));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (dx * dx + dy * dy <= radius_px * radius_px) image.blend(cx + dx, cy + dy, c, alpha);
      }
    }
  }

  void line(Vec2 a, Vec2 b, Rgb c, double alpha = 1.0) {
    const int x0 = px(a[0]), y0 = py(a[1]), x1 = px(b[0]), y1 = py(b[1]);
    const int n = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
    for (int k = 0; k <= n; ++k) {
      const double f = static_cast<double>(k) / n;
      image.blend(static_cast<int>(std::lround(x0 + f * (x1 - x0))), static_cast<int>(std::lround(y0 + f * (y1 - y0))),
                  c, alpha);
    }
  }
};

Canvas map_canvas(const sim::MapSpec& map, int pixels) {
  Canvas canvas{Image(pixels, pixels), pixels / map.size};
  for (int y = 0; y < pixels; ++y) {
    for (int x = 0; x < pixels; ++x) {
      const Vec2 w{(x + 0.5) / canvas.scale, (pixels - y - 0.5) / canvas.scale};
      const auto shade = static_cast<std::uint8_t>(std::lround(90 + 130 * map.visibility_at(w)));
      canvas.image.at(x, y) = map.in_obstacle(w) ? Rgb{25, 25, 25} : Rgb{shade, shade, shade};
    }
  }
  for (const Vec2& h : map.hideouts) canvas.disk(h, 4.0, {240, 200, 0});
  for (const Vec2& r : map.rendezvous_points) canvas.disk(r, 3.0, {0, 200, 200});
  return canvas;
}

}  // namespace

Image draw_map(const sim::MapSpec& map, int pixels) { return map_canvas(map, pixels).image; }

Image draw_scene(const sim::MapSpec& map, const sim::EpisodeRecord& episode, int t_now, int horizon,
                 std::span<const TrajectorySlate> samples, int pixels) {
  Canvas canvas = map_canvas(map, pixels);
  const MapFrame frame = map.frame();
  for (const TrajectorySlate& s : samples) {
    for (int a = 0; a < s.agents(); ++a) {
      for (int t = 1; t < s.horizon(); ++t) {
        const Vec2 p{frame.to_world(s.at(a, t - 1, 0)), frame.to_world(s.at(a, t - 1, 1))};
        const Vec2 q{frame.to_world(s.at(a, t, 0)), frame.to_world(s.at(a, t, 1))};
        canvas.line(p, q, time_color(static_cast<double>(t) / std::max(1, s.horizon() - 1)), 0.35);
      }
    }
  }
  const int end = std::min(episode.length(), t_now + horizon);
  for (const auto& traj : episode.trajectories) {
    for (int t = 1; t <= t_now && t < episode.length(); ++t) canvas.line(traj[t - 1], traj[t], {200, 200, 200}, 0.8);
    for (int t = t_now + 1; t < end; ++t) canvas.line(traj[t - 1], traj[t], {0, 220, 0});
  }
  for (const sim::DetectionRecord& d : episode.detections) {
    if (d.t <= t_now) canvas.disk({d.x, d.y}, 2.5, {255, 255, 255});
  }
  return canvas.image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Rgb c = image.at(x, y);
      row[static_cast<std::size_t>(x) * 3] = c.r;
      row[static_cast<std::size_t>(x) * 3 + 1] = c.g;
      row[static_cast<std::size_t>(x) * 3 + 2] = c.b;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("failed closing " + path.string());
}

}  // namespace difftrack::render
