#include "hwm/eval/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hwm/util/binio.hpp"

namespace hwm::eval {

GrayScale scale_of(const std::vector<const std::vector<double>*>& maps) {
  GrayScale s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto* m : maps) {
    for (double v : *m) {
      if (!std::isfinite(v)) throw std::invalid_argument("cannot render a non-finite value");
      s.lo = std::min(s.lo, v);
      s.hi = std::max(s.hi, v);
    }
  }
  if (s.lo > s.hi) throw std::invalid_argument("cannot render an empty map");
  return s;
}

Graymap quantize(const std::vector<double>& values, std::size_t height, std::size_t width, const GrayScale& scale) {
  if (values.size() != height * width || values.empty()) throw std::invalid_argument("map size does not match H x W");
  Graymap g{height, width, std::vector<std::uint8_t>(values.size())};
  const double range = scale.hi - scale.lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (range <= 0.0) {
      g.pixels[i] = 128;
      continue;
    }
    const double v = std::clamp((values[i] - scale.lo) / range, 0.0, 1.0);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return g;
}

void write_pgm(const std::filesystem::path& path, const Graymap& g) {
  std::string header = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), g.pixels.begin(), g.pixels.end());
  write_file_atomic(path, bytes);
}

Graymap read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P5") throw FormatError(FormatErrc::BadMagic, path.string() + ": not a binary graymap");
  Graymap g;
  try {
    g.width = std::stoul(token());
    g.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw FormatError(FormatErrc::Malformed, path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw FormatError(FormatErrc::Malformed, path.string() + ": bad graymap header");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos != g.width * g.height) throw FormatError(FormatErrc::Truncated, path.string());
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return g;
}

void write_scale_sidecar(const std::filesystem::path& path, const GrayScale& scale,
                         const std::vector<std::string>& images) {
  char buf[64];
  std::string text;
  std::snprintf(buf, sizeof buf, "lo %.17g\n", scale.lo);
  text += buf;
  std::snprintf(buf, sizeof buf, "hi %.17g\n", scale.hi);
  text += buf;
  for (const auto& im : images) text += "image " + im + "\n";
  write_text_atomic(path, text);
}

GrayScale read_scale_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrc::Io, "cannot open " + path.string());
  GrayScale s;
  bool lo = false, hi = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "lo") lo = static_cast<bool>(ls >> s.lo);
    if (key == "hi") hi = static_cast<bool>(ls >> s.hi);
  }
  if (!lo || !hi) throw FormatError(FormatErrc::Malformed, path.string() + ": missing lo/hi");
  return s;
}

std::filesystem::path sidecar_for(const std::filesystem::path& image) {
  return image.string() + ".scale.txt";
}

void render_error_map(const std::vector<double>& values, std::size_t height, std::size_t width,
                      const std::filesystem::path& path) {
  const auto scale = scale_of({&values});
  write_pgm(path, quantize(values, height, width, scale));
  write_scale_sidecar(sidecar_for(path), scale, {path.filename().string()});
}

void render_shared(const std::vector<std::vector<double>>& maps, std::size_t height, std::size_t width,
                   const std::vector<std::filesystem::path>& paths, const std::filesystem::path& sidecar) {
  if (maps.size() != paths.size() || maps.empty()) throw std::invalid_argument("one path per map required");
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& m : maps) ptrs.push_back(&m);
  const auto scale = scale_of(ptrs);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    write_pgm(paths[i], quantize(maps[i], height, width, scale));
    names.push_back(paths[i].filename().string());
  }
  write_scale_sidecar(sidecar, scale, names);
}

}  // namespace hwm::eval
