#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hwm::eval {

struct GrayScale {
  double lo = 0.0;
  double hi = 0.0;
};

struct Graymap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Min-max over all values of all maps.
GrayScale scale_of(const std::vector<const std::vector<double>*>& maps);

/// round(255 (v - lo) / (hi - lo)); a flat scale maps everything to 128.
Graymap quantize(const std::vector<double>& values, std::size_t height, std::size_t width, const GrayScale& scale);

/// Binary (P5) portable graymap.
void write_pgm(const std::filesystem::path& path, const Graymap& g);
Graymap read_pgm(const std::filesystem::path& path);

/// Text sidecar: "lo <v>", "hi <v>" and one "image <name>" line per map.
void write_scale_sidecar(const std::filesystem::path& path, const GrayScale& scale,
                         const std::vector<std::string>& images);
GrayScale read_scale_sidecar(const std::filesystem::path& path);

/// Sidecar path for an image: <path>.scale.txt.
std::filesystem::path sidecar_for(const std::filesystem::path& image);

/// One map, scaled to its own range; writes the image and its sidecar.
void render_error_map(const std::vector<double>& values, std::size_t height, std::size_t width,
                      const std::filesystem::path& path);

/// Several maps on one shared scale with a single sidecar.
void render_shared(const std::vector<std::vector<double>>& maps, std::size_t height, std::size_t width,
                   const std::vector<std::filesystem::path>& paths, const std::filesystem::path& sidecar);

}  // namespace hwm::eval
