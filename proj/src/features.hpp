#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"

namespace falcon {

// The eight color components. Bin regions partition HSV space:
//   black   v < 0.2
//   white   s < 0.2 and v >= 0.2
//   else one of six 60-degree hue sectors centred on 0/60/120/180/240/300.
enum class ColorBin { Black, White, Red, Yellow, Green, Cyan, Blue, Magenta };

constexpr int kColorBinCount = 8;
constexpr std::array<int, 4> kOrientationsDeg = {0, 45, 90, 135};

ColorBin colorBinOf(const HsvPixel& p);
const char* colorBinName(ColorBin bin);
ColorBin colorBinFromName(const std::string& name);
// Representative RGB of a bin's region centre (used by the synthetic generator).
void colorBinCanonicalRgb(ColorBin bin, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b);

// One of the 12 feature families: 8 color bins + 4 texture orientations.
// The enumeration order (color bins first, then orientations ascending) is
// also the documented tie-break order for feature selection.
struct FeatureKind {
  enum class Family { Color, Texture };
  Family family = Family::Color;
  int index = 0;  // ColorBin value, or slot into kOrientationsDeg

  bool operator==(const FeatureKind& o) const = default;
  ColorBin bin() const { return static_cast<ColorBin>(index); }
  int orientationDeg() const { return kOrientationsDeg[static_cast<std::size_t>(index)]; }
};

std::vector<FeatureKind> allFeatureKinds();
std::string kindToString(FeatureKind kind);               // "color:red", "texture:45"
FeatureKind parseFeatureKind(const std::string& text);

struct GridDims {
  int w = 8;
  int h = 8;
};

// 4 scales x 4 orientations. Wavelengths are baseWavelength * {1,2,4,8};
// sigma = sigmaRatio * wavelength, truncated at halfWidth = ceil(truncation *
// sigma), so kernels always have odd side length.
struct GaborBank {
  double baseWavelength = 4.0 * std::sqrt(2.0);
  double sigmaRatio = 0.56;
  double aspect = 0.5;  // gamma
  double truncation = 2.5;

  static constexpr std::array<int, 4> kScaleMultipliers = {1, 2, 4, 8};
  static constexpr int kScaleCount = 4;

  double wavelength(int scaleIdx) const {
    return baseWavelength * kScaleMultipliers[static_cast<std::size_t>(scaleIdx)];
  }
  double sigma(int scaleIdx) const { return sigmaRatio * wavelength(scaleIdx); }
  int kernelHalfWidth(int scaleIdx) const {
    return static_cast<int>(std::ceil(truncation * sigma(scaleIdx)));
  }
  int kernelSide(int scaleIdx) const { return 2 * kernelHalfWidth(scaleIdx) + 1; }
  int largestKernelSide() const { return kernelSide(kScaleCount - 1); }
};

struct Kernel {
  int side = 0;
  std::vector<double> values;  // side x side, row-major

  double at(int kx, int ky) const {
    return values[static_cast<std::size_t>(ky) * static_cast<std::size_t>(side) +
                  static_cast<std::size_t>(kx)];
  }
};

// Even-symmetric Gabor, zero-mean adjusted so constant inputs respond 0:
//   g(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda)
// with (x', y') the coordinates rotated by the orientation.
Kernel gaborKernel(double wavelength, double orientationDeg, const GaborBank& bank);

struct FeatureVector {
  FeatureKind kind;
  GridDims grid;
  std::vector<double> values;
};

// Binary record: magic "FFV1", kind tag (family, index), grid dims, then a
// length-prefixed array of f64 values, all little-endian.
void writeFeatureVector(const FeatureVector& fv, std::ostream& os);
FeatureVector readFeatureVector(std::istream& is);

std::size_t featureLength(FeatureKind kind, GridDims grid);

// Per-pixel bin membership, average-pooled over the grid; values in [0, 1].
FeatureVector colorFeature(const ImageRGB& image, ColorBin bin, GridDims grid);

// Luma conversion, then per scale: convolve (same size, clamp-to-edge
// padding), absolute response, average-pool; scales concatenated ascending.
FeatureVector textureFeature(const ImageRGB& image, int orientationDeg, GridDims grid,
                             const GaborBank& bank);

FeatureVector extractFeature(const ImageRGB& image, FeatureKind kind, GridDims grid,
                             const GaborBank& bank);

// Per-pixel cost constants for the OPS accounting closed forms.
struct FeatureCostModel {
  int hsvOpsPerPixel = 8;
  int binOpsPerPixel = 4;
};

// MAC-equivalent cost of extracting one feature vector:
//   color:   W*H*(hsvOps + binOps) + W*H pooling adds
//   texture: sum over scales of W*H*side^2 + 4*W*H pooling adds
std::uint64_t featureExtractionOps(FeatureKind kind, int imageW, int imageH, GridDims grid,
                                   const GaborBank& bank, const FeatureCostModel& cost);

}  // namespace falcon
