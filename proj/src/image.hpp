#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace falcon {

// 8-bit RGB raster, row-major triples.
struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t index(int x, int y) const {
    return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x));
  }
  void validate() const;
};

struct HsvPixel {
  double h = 0.0;  // degrees in [0, 360); 0 when s == 0
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

struct HsvImage {
  int width = 0;
  int height = 0;
  std::vector<HsvPixel> pixels;
};

HsvPixel rgbToHsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
HsvImage rgbToHsv(const ImageRGB& image);

// Binary PPM (P6, maxval 255). Comments allowed between header tokens.
// FormatError messages name the byte offset of the defect.
ImageRGB readPpm(std::istream& is);
ImageRGB loadPpm(const std::string& path);
void writePpm(const ImageRGB& image, std::ostream& os);
void savePpm(const ImageRGB& image, const std::string& path);

// Nearest-neighbour resampling; source index = floor(dst * src / target).
ImageRGB resizeNearest(const ImageRGB& image, int targetW, int targetH);

}  // namespace falcon
