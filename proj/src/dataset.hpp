#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "features.hpp"
#include "image.hpp"

namespace falcon {

enum class Split { Train, Validation, Test };

const char* splitName(Split s);
Split splitFromName(const std::string& name);

struct DatasetItem {
  ImageRGB image;
  int classId = 0;
  Split split = Split::Train;
};

struct Dataset {
  std::vector<std::string> classNames;
  std::vector<DatasetItem> items;

  int classCount() const { return static_cast<int>(classNames.size()); }
  std::vector<std::size_t> indicesOf(Split split) const;
  std::vector<std::size_t> indicesOf(Split split, int classId) const;
  void validate() const;
};

// One synthetic class: a colored disk/bar on a noisy gray background, or a
// full-frame sinusoidal grating.
struct SyntheticClassSpec {
  enum class Type { Color, Texture };
  enum class Shape { Disk, Bar, Grating };

  std::string name;
  Type type = Type::Color;
  ColorBin bin = ColorBin::Red;       // color classes
  int orientationDeg = 0;             // texture classes
  Shape shape = Shape::Disk;
  double wavelength = 4.0 * 1.41421356237309515;  // texture grating period, px
};

struct SyntheticSpec {
  int width = 32;
  int height = 32;
  std::vector<SyntheticClassSpec> classes;
  double noiseLevel = 0.1;  // [0, 1]
  int perClassCount = 200;
  std::uint64_t seed = 1;
};

// The 4-class red/yellow disk/bar problem.
SyntheticSpec defaultSyntheticSpec();

// Deterministic for a fixed seed: shapes get per-image position/size/phase
// jitter, background gets per-pixel luminance noise. Splits 70/15/15.
Dataset genSynthetic(const SyntheticSpec& spec);

// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-planar
// bytes. File length must be a multiple of 3073 and labels in 0..9.
Dataset loadCifarBin(const std::vector<std::string>& paths);

// PPM files plus a manifest.json naming classes, files and splits.
void writeDataset(const Dataset& ds, const std::string& dir);
Dataset openDataset(const std::string& manifestPath);

// Subset by class name. Ids are re-densified in the order given; class
// names are preserved so trees built on subsets stay mergeable.
Dataset filterClasses(const Dataset& ds, const std::vector<std::string>& classNames);

Dataset resizeAll(const Dataset& ds, int width, int height);

}  // namespace falcon
