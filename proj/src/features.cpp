#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "errors.hpp"

namespace falcon {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ColorBin colorBinOf(const HsvPixel& p) {
  if (p.v < 0.2) return ColorBin::Black;
  if (p.s < 0.2) return ColorBin::White;
  double h = p.h;
  if (h < 30.0 || h >= 330.0) return ColorBin::Red;
  if (h < 90.0) return ColorBin::Yellow;
  if (h < 150.0) return ColorBin::Green;
  if (h < 210.0) return ColorBin::Cyan;
  if (h < 270.0) return ColorBin::Blue;
  return ColorBin::Magenta;
}

const char* colorBinName(ColorBin bin) {
  switch (bin) {
    case ColorBin::Black: return "black";
    case ColorBin::White: return "white";
    case ColorBin::Red: return "red";
    case ColorBin::Yellow: return "yellow";
    case ColorBin::Green: return "green";
    case ColorBin::Cyan: return "cyan";
    case ColorBin::Blue: return "blue";
    case ColorBin::Magenta: return "magenta";
  }
  return "?";
}

ColorBin colorBinFromName(const std::string& name) {
  for (int i = 0; i < kColorBinCount; ++i) {
    ColorBin bin = static_cast<ColorBin>(i);
    if (name == colorBinName(bin)) return bin;
  }
  throw ArgumentError("unknown color bin: " + name);
}

void colorBinCanonicalRgb(ColorBin bin, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  switch (bin) {
    case ColorBin::Black: r = 26; g = 26; b = 26; return;   // v ~ 0.1
    case ColorBin::White: r = 250; g = 250; b = 250; return;
    case ColorBin::Red: r = 255; g = 0; b = 0; return;
    case ColorBin::Yellow: r = 255; g = 255; b = 0; return;
    case ColorBin::Green: r = 0; g = 255; b = 0; return;
    case ColorBin::Cyan: r = 0; g = 255; b = 255; return;
    case ColorBin::Blue: r = 0; g = 0; b = 255; return;
    case ColorBin::Magenta: r = 255; g = 0; b = 255; return;
  }
}

std::vector<FeatureKind> allFeatureKinds() {
  std::vector<FeatureKind> kinds;
  for (int i = 0; i < kColorBinCount; ++i)
    kinds.push_back({FeatureKind::Family::Color, i});
  for (int i = 0; i < static_cast<int>(kOrientationsDeg.size()); ++i)
    kinds.push_back({FeatureKind::Family::Texture, i});
  return kinds;
}

std::string kindToString(FeatureKind kind) {
  if (kind.family == FeatureKind::Family::Color)
    return std::string("color:") + colorBinName(kind.bin());
  return "texture:" + std::to_string(kind.orientationDeg());
}

FeatureKind parseFeatureKind(const std::string& text) {
  if (text.rfind("color:", 0) == 0)
    return {FeatureKind::Family::Color, static_cast<int>(colorBinFromName(text.substr(6)))};
  if (text.rfind("texture:", 0) == 0) {
    int deg = std::stoi(text.substr(8));
    for (int i = 0; i < static_cast<int>(kOrientationsDeg.size()); ++i)
      if (kOrientationsDeg[static_cast<std::size_t>(i)] == deg)
        return {FeatureKind::Family::Texture, i};
    throw ArgumentError("unsupported texture orientation: " + text);
  }
  throw ArgumentError("cannot parse feature kind: " + text);
}

Kernel gaborKernel(double wavelength, double orientationDeg, const GaborBank& bank) {
  if (!(wavelength > 0.0)) throw ArgumentError("gaborKernel: wavelength must be > 0");
  double sigma = bank.sigmaRatio * wavelength;
  int half = static_cast<int>(std::ceil(bank.truncation * sigma));
  double theta = orientationDeg * kPi / 180.0;
  double ct = std::cos(theta), st = std::sin(theta);
  double g2 = bank.aspect * bank.aspect;
  Kernel k;
  k.side = 2 * half + 1;
  k.values.resize(static_cast<std::size_t>(k.side) * static_cast<std::size_t>(k.side));
  double sum = 0.0;
  for (int y = -half; y <= half; ++y) {
    for (int x = -half; x <= half; ++x) {
      double xr = x * ct + y * st;
      double yr = -x * st + y * ct;
      double v = std::exp(-(xr * xr + g2 * yr * yr) / (2.0 * sigma * sigma)) *
                 std::cos(2.0 * kPi * xr / wavelength);
      k.values[static_cast<std::size_t>(y + half) * k.side + static_cast<std::size_t>(x + half)] = v;
      sum += v;
    }
  }
  double mean = sum / static_cast<double>(k.values.size());
  for (double& v : k.values) v -= mean;
  return k;
}

std::size_t featureLength(FeatureKind kind, GridDims grid) {
  std::size_t cells = static_cast<std::size_t>(grid.w) * static_cast<std::size_t>(grid.h);
  return kind.family == FeatureKind::Family::Color ? cells : GaborBank::kScaleCount * cells;
}

namespace {

void putU32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t getU32le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("feature vector truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void writeFeatureVector(const FeatureVector& fv, std::ostream& os) {
  os.write("FFV1", 4);
  os.put(fv.kind.family == FeatureKind::Family::Color ? '\0' : '\1');
  os.put(static_cast<char>(fv.kind.index));
  putU32le(os, static_cast<std::uint32_t>(fv.grid.w));
  putU32le(os, static_cast<std::uint32_t>(fv.grid.h));
  putU32le(os, static_cast<std::uint32_t>(fv.values.size()));
  for (double v : fv.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

FeatureVector readFeatureVector(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FFV1", 4) != 0)
    throw FormatError("bad feature-vector magic at offset 0 (want FFV1)");
  FeatureVector fv;
  int family = is.get();
  int index = is.get();
  if (family != 0 && family != 1) throw FormatError("bad feature family tag");
  fv.kind.family = family == 0 ? FeatureKind::Family::Color : FeatureKind::Family::Texture;
  fv.kind.index = index;
  int limit = family == 0 ? kColorBinCount : static_cast<int>(kOrientationsDeg.size());
  if (index < 0 || index >= limit) throw FormatError("feature kind index out of range");
  fv.grid.w = static_cast<int>(getU32le(is));
  fv.grid.h = static_cast<int>(getU32le(is));
  std::uint32_t count = getU32le(is);
  if (count != featureLength(fv.kind, fv.grid))
    throw FormatError("feature length does not match kind and grid");
  fv.values.resize(count);
  for (double& v : fv.values) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("feature vector truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return fv;
}

namespace {

void checkGrid(GridDims grid) {
  if (grid.w < 1 || grid.h < 1) throw ArgumentError("pooling grid must be >= 1x1");
}

// Average of map[] over each grid cell; cell edges at floor(i * dim / grid).
void poolInto(const std::vector<double>& map, int w, int h, GridDims grid,
              std::vector<double>& out) {
  for (int gy = 0; gy < grid.h; ++gy) {
    int y0 = static_cast<int>(static_cast<std::int64_t>(gy) * h / grid.h);
    int y1 = static_cast<int>(static_cast<std::int64_t>(gy + 1) * h / grid.h);
    for (int gx = 0; gx < grid.w; ++gx) {
      int x0 = static_cast<int>(static_cast<std::int64_t>(gx) * w / grid.w);
      int x1 = static_cast<int>(static_cast<std::int64_t>(gx + 1) * w / grid.w);
      double acc = 0.0;
      int count = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          acc += map[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
          ++count;
        }
      out.push_back(count > 0 ? acc / count : 0.0);
    }
  }
}

// Same-size convolution with clamp-to-edge padding.
std::vector<double> convolveReplicate(const std::vector<double>& img, int w, int h,
                                      const Kernel& k) {
  std::vector<double> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  int half = k.side / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = -half; ky <= half; ++ky) {
        int sy = std::clamp(y + ky, 0, h - 1);
        const double* row = img.data() + static_cast<std::size_t>(sy) * w;
        const double* krow = k.values.data() +
                             static_cast<std::size_t>(ky + half) * k.side;
        for (int kx = -half; kx <= half; ++kx) {
          int sx = std::clamp(x + kx, 0, w - 1);
          acc += row[sx] * krow[kx + half];
        }
      }
      out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = acc;
    }
  }
  return out;
}

}  // namespace

FeatureVector colorFeature(const ImageRGB& image, ColorBin bin, GridDims grid) {
  image.validate();
  checkGrid(grid);
  std::vector<double> membership;
  membership.reserve(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
    HsvPixel p = rgbToHsv(image.pixels[i], image.pixels[i + 1], image.pixels[i + 2]);
    membership.push_back(colorBinOf(p) == bin ? 1.0 : 0.0);
  }
  FeatureVector fv;
  fv.kind = {FeatureKind::Family::Color, static_cast<int>(bin)};
  fv.grid = grid;
  fv.values.reserve(featureLength(fv.kind, grid));
  poolInto(membership, image.width, image.height, grid, fv.values);
  return fv;
}

FeatureVector textureFeature(const ImageRGB& image, int orientationDeg, GridDims grid,
                             const GaborBank& bank) {
  image.validate();
  checkGrid(grid);
  int slot = -1;
  for (int i = 0; i < static_cast<int>(kOrientationsDeg.size()); ++i)
    if (kOrientationsDeg[static_cast<std::size_t>(i)] == orientationDeg) slot = i;
  if (slot < 0)
    throw ArgumentError("textureFeature: orientation must be one of 0/45/90/135");
  int largest = bank.largestKernelSide();
  if (image.width < largest || image.height < largest)
    throw ArgumentError("textureFeature: image " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " smaller than largest kernel " +
                        std::to_string(largest) + "x" + std::to_string(largest));

  // Rec.601 luma, scaled to [0, 1].
  std::vector<double> luma;
  luma.reserve(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3)
    luma.push_back((0.299 * image.pixels[i] + 0.587 * image.pixels[i + 1] +
                    0.114 * image.pixels[i + 2]) / 255.0);

  FeatureVector fv;
  fv.kind = {FeatureKind::Family::Texture, slot};
  fv.grid = grid;
  fv.values.reserve(featureLength(fv.kind, grid));
  for (int s = 0; s < GaborBank::kScaleCount; ++s) {
    Kernel k = gaborKernel(bank.wavelength(s), orientationDeg, bank);
    std::vector<double> resp = convolveReplicate(luma, image.width, image.height, k);
    for (double& v : resp) v = std::abs(v);
    poolInto(resp, image.width, image.height, grid, fv.values);
  }
  return fv;
}

FeatureVector extractFeature(const ImageRGB& image, FeatureKind kind, GridDims grid,
                             const GaborBank& bank) {
  if (kind.family == FeatureKind::Family::Color)
    return colorFeature(image, kind.bin(), grid);
  return textureFeature(image, kind.orientationDeg(), grid, bank);
}

std::uint64_t featureExtractionOps(FeatureKind kind, int imageW, int imageH, GridDims grid,
                                   const GaborBank& bank, const FeatureCostModel& cost) {
  if (imageW < 1 || imageH < 1) throw ArgumentError("featureExtractionOps: bad image dims");
  checkGrid(grid);
  std::uint64_t pixels = static_cast<std::uint64_t>(imageW) * static_cast<std::uint64_t>(imageH);
  if (kind.family == FeatureKind::Family::Color)
    return pixels * static_cast<std::uint64_t>(cost.hsvOpsPerPixel + cost.binOpsPerPixel) + pixels;
  std::uint64_t total = 0;
  for (int s = 0; s < GaborBank::kScaleCount; ++s) {
    std::uint64_t side = static_cast<std::uint64_t>(bank.kernelSide(s));
    total += pixels * side * side;
  }
  return total + pixels * GaborBank::kScaleCount;
}

}  // namespace falcon
