#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace falcon {

namespace fs = std::filesystem;
using nlohmann::json;

const char* splitName(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Split splitFromName(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw FormatError("unknown split name: " + name);
}

std::vector<std::size_t> Dataset::indicesOf(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::indicesOf(Split split, int classId) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split && items[i].classId == classId) out.push_back(i);
  return out;
}

void Dataset::validate() const {
  if (classNames.empty()) throw StructuralError("dataset has no classes");
  for (const DatasetItem& it : items) {
    it.image.validate();
    if (it.classId < 0 || it.classId >= classCount())
      throw StructuralError("dataset item class id out of range");
  }
}

SyntheticSpec defaultSyntheticSpec() {
  SyntheticSpec spec;
  spec.classes = {
      {"red-disk", SyntheticClassSpec::Type::Color, ColorBin::Red, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"red-bar", SyntheticClassSpec::Type::Color, ColorBin::Red, 0,
       SyntheticClassSpec::Shape::Bar, 0.0},
      {"yellow-disk", SyntheticClassSpec::Type::Color, ColorBin::Yellow, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"yellow-bar", SyntheticClassSpec::Type::Color, ColorBin::Yellow, 0,
       SyntheticClassSpec::Shape::Bar, 0.0},
  };
  return spec;
}

namespace {

std::uint8_t clampByte(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

ImageRGB synthImage(const SyntheticSpec& spec, const SyntheticClassSpec& cls, Rng& rng) {
  ImageRGB img;
  img.width = spec.width;
  img.height = spec.height;
  img.pixels.resize(3 * static_cast<std::size_t>(spec.width) * spec.height);

  double w = spec.width, h = spec.height;
  if (cls.type == SyntheticClassSpec::Type::Texture ||
      cls.shape == SyntheticClassSpec::Shape::Grating) {
    double theta = cls.orientationDeg * 3.14159265358979323846 / 180.0;
    double ct = std::cos(theta), st = std::sin(theta);
    double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double amp = 100.0 * rng.uniform(0.8, 1.0);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        double carrier = std::sin(2.0 * 3.14159265358979323846 * (x * ct + y * st) /
                                  cls.wavelength + phase);
        double noise = (rng.uniform() - 0.5) * 2.0 * spec.noiseLevel * 64.0;
        std::uint8_t v = clampByte(128.0 + amp * carrier + noise);
        std::size_t idx = img.index(x, y);
        img.pixels[idx] = img.pixels[idx + 1] = img.pixels[idx + 2] = v;
      }
    }
    return img;
  }

  // Colored shape on a noisy neutral background. Luminance-only noise keeps
  // the background inside the white bin.
  std::uint8_t cr, cg, cb;
  colorBinCanonicalRgb(cls.bin, cr, cg, cb);
  double vscale = rng.uniform(0.85, 1.0);
  double cx = w / 2.0 + rng.uniform(-w / 8.0, w / 8.0);
  double cy = h / 2.0 + rng.uniform(-h / 8.0, h / 8.0);
  double radius = 0.3 * w + rng.uniform(-w / 16.0, w / 16.0);
  double barHalf = w * 0.125 + rng.uniform(-w / 32.0, w / 32.0);

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      bool inside;
      if (cls.shape == SyntheticClassSpec::Shape::Disk) {
        double dx = x - cx, dy = y - cy;
        inside = dx * dx + dy * dy <= radius * radius;
      } else {
        inside = std::abs(x - cx) <= barHalf;
      }
      std::size_t idx = img.index(x, y);
      if (inside) {
        img.pixels[idx] = clampByte(cr * vscale);
        img.pixels[idx + 1] = clampByte(cg * vscale);
        img.pixels[idx + 2] = clampByte(cb * vscale);
      } else {
        double noise = (rng.uniform() - 0.5) * 2.0 * spec.noiseLevel * 64.0;
        std::uint8_t v = clampByte(128.0 + noise);
        img.pixels[idx] = img.pixels[idx + 1] = img.pixels[idx + 2] = v;
      }
    }
  }
  return img;
}

}  // namespace

Dataset genSynthetic(const SyntheticSpec& spec) {
  if (spec.classes.size() < 2) throw ArgumentError("genSynthetic: need >= 2 classes");
  if (spec.width < 1 || spec.height < 1) throw ArgumentError("genSynthetic: bad dimensions");
  if (spec.perClassCount < 1) throw ArgumentError("genSynthetic: perClassCount must be >= 1");
  Dataset ds;
  Rng rng(spec.seed);
  for (const SyntheticClassSpec& cls : spec.classes) ds.classNames.push_back(cls.name);
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    int trainEnd = (spec.perClassCount * 7 + 9) / 10;
    int valEnd = trainEnd + (spec.perClassCount * 15 + 99) / 100;
    for (int i = 0; i < spec.perClassCount; ++i) {
      DatasetItem item;
      item.image = synthImage(spec, spec.classes[c], rng);
      item.classId = static_cast<int>(c);
      item.split = i < trainEnd ? Split::Train : (i < valEnd ? Split::Validation : Split::Test);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

Dataset loadCifarBin(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ArgumentError("loadCifarBin: no files given");
  constexpr std::size_t kRecord = 3073;
  constexpr int kDim = 32;
  Dataset ds;
  ds.classNames = {"airplane", "automobile", "bird", "cat", "deer",
                   "dog", "frog", "horse", "ship", "truck"};
  for (const std::string& path : paths) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    is.seekg(0, std::ios::end);
    std::size_t size = static_cast<std::size_t>(is.tellg());
    is.seekg(0);
    if (size == 0 || size % kRecord != 0)
      throw FormatError(path + ": length " + std::to_string(size) +
                        " is not a multiple of 3073");
    // Batches named like test_batch.bin carry the evaluation split; training
    // batches donate every 20th record to the validation split so scoring
    // has something to work with.
    bool isTest = fs::path(path).filename().string().find("test") != std::string::npos;
    std::vector<unsigned char> record(kRecord);
    std::size_t count = size / kRecord;
    for (std::size_t r = 0; r < count; ++r) {
      if (!is.read(reinterpret_cast<char*>(record.data()), kRecord))
        throw FormatError(path + ": truncated record at offset " + std::to_string(r * kRecord));
      if (record[0] > 9)
        throw FormatError(path + ": label " + std::to_string(record[0]) + " out of range at offset " +
                          std::to_string(r * kRecord));
      DatasetItem item;
      item.classId = record[0];
      item.split = isTest ? Split::Test : (r % 20 == 0 ? Split::Validation : Split::Train);
      item.image.width = kDim;
      item.image.height = kDim;
      item.image.pixels.resize(3 * 1024);
      for (int y = 0; y < kDim; ++y) {
        for (int x = 0; x < kDim; ++x) {
          std::size_t plane = static_cast<std::size_t>(y) * kDim + static_cast<std::size_t>(x);
          std::size_t idx = item.image.index(x, y);
          item.image.pixels[idx] = record[1 + plane];
          item.image.pixels[idx + 1] = record[1 + 1024 + plane];
          item.image.pixels[idx + 2] = record[1 + 2048 + plane];
        }
      }
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

void writeDataset(const Dataset& ds, const std::string& dir) {
  ds.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["classNames"] = ds.classNames;
  json items = json::array();
  char name[32];
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    std::snprintf(name, sizeof name, "img_%06zu.ppm", i);
    savePpm(ds.items[i].image, (fs::path(dir) / name).string());
    items.push_back({{"file", name},
                     {"class", ds.items[i].classId},
                     {"split", splitName(ds.items[i].split)}});
  }
  manifest["items"] = std::move(items);
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Dataset openDataset(const std::string& manifestPath) {
  fs::path mpath(manifestPath);
  if (fs::is_directory(mpath)) mpath /= "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw IoError("cannot open " + mpath.string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  Dataset ds;
  if (!manifest.contains("classNames") || !manifest.contains("items"))
    throw FormatError(mpath.string() + ": missing classNames/items");
  ds.classNames = manifest["classNames"].get<std::vector<std::string>>();
  fs::path dir = mpath.parent_path();
  for (const json& j : manifest["items"]) {
    DatasetItem item;
    item.image = loadPpm((dir / j.at("file").get<std::string>()).string());
    item.classId = j.at("class").get<int>();
    item.split = splitFromName(j.at("split").get<std::string>());
    ds.items.push_back(std::move(item));
  }
  ds.validate();
  return ds;
}

Dataset filterClasses(const Dataset& ds, const std::vector<std::string>& classNames) {
  Dataset out;
  std::vector<int> oldIds;
  for (const std::string& name : classNames) {
    auto it = std::find(ds.classNames.begin(), ds.classNames.end(), name);
    if (it == ds.classNames.end()) throw ArgumentError("filterClasses: unknown class " + name);
    oldIds.push_back(static_cast<int>(it - ds.classNames.begin()));
    out.classNames.push_back(name);
  }
  for (const DatasetItem& item : ds.items) {
    auto it = std::find(oldIds.begin(), oldIds.end(), item.classId);
    if (it == oldIds.end()) continue;
    DatasetItem copy = item;
    copy.classId = static_cast<int>(it - oldIds.begin());
    out.items.push_back(std::move(copy));
  }
  if (out.items.empty()) throw ArgumentError("filterClasses: no items left");
  return out;
}

Dataset resizeAll(const Dataset& ds, int width, int height) {
  Dataset out;
  out.classNames = ds.classNames;
  for (const DatasetItem& item : ds.items) {
    DatasetItem copy;
    copy.image = resizeNearest(item.image, width, height);
    copy.classId = item.classId;
    copy.split = item.split;
    out.items.push_back(std::move(copy));
  }
  return out;
}

}  // namespace falcon
