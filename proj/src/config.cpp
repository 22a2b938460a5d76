#include "config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace falcon {

using nlohmann::json;

namespace {

json trainToJson(const TrainConfig& t) {
  return {{"learningRate", t.learningRate},
          {"epochs", t.epochs},
          {"minibatchSize", t.minibatchSize},
          {"seed", t.seed},
          {"balancedSampling", t.balancedSampling}};
}

TrainConfig trainFromJson(const json& j) {
  TrainConfig t;
  t.learningRate = j.at("learningRate").get<double>();
  t.epochs = j.at("epochs").get<int>();
  t.minibatchSize = j.at("minibatchSize").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.balancedSampling = j.at("balancedSampling").get<bool>();
  return t;
}

json classToJson(const SyntheticClassSpec& c) {
  json j;
  j["name"] = c.name;
  j["type"] = c.type == SyntheticClassSpec::Type::Color ? "color" : "texture";
  if (c.type == SyntheticClassSpec::Type::Color) {
    j["bin"] = colorBinName(c.bin);
  } else {
    j["orientation"] = c.orientationDeg;
    j["wavelength"] = c.wavelength;
  }
  switch (c.shape) {
    case SyntheticClassSpec::Shape::Disk: j["shape"] = "disk"; break;
    case SyntheticClassSpec::Shape::Bar: j["shape"] = "bar"; break;
    case SyntheticClassSpec::Shape::Grating: j["shape"] = "grating"; break;
  }
  return j;
}

SyntheticClassSpec classFromJson(const json& j) {
  SyntheticClassSpec c;
  c.name = j.at("name").get<std::string>();
  std::string type = j.at("type").get<std::string>();
  if (type == "color") {
    c.type = SyntheticClassSpec::Type::Color;
    c.bin = colorBinFromName(j.at("bin").get<std::string>());
  } else if (type == "texture") {
    c.type = SyntheticClassSpec::Type::Texture;
    c.orientationDeg = j.at("orientation").get<int>();
    if (j.contains("wavelength")) c.wavelength = j.at("wavelength").get<double>();
  } else {
    throw FormatError("config: unknown class type " + type);
  }
  std::string shape = j.value("shape", c.type == SyntheticClassSpec::Type::Color
                                           ? "disk"
                                           : "grating");
  if (shape == "disk")
    c.shape = SyntheticClassSpec::Shape::Disk;
  else if (shape == "bar")
    c.shape = SyntheticClassSpec::Shape::Bar;
  else if (shape == "grating")
    c.shape = SyntheticClassSpec::Shape::Grating;
  else
    throw FormatError("config: unknown shape " + shape);
  return c;
}

json toJsonTree(const RunConfig& cfg) {
  json j;
  j["data"] = {{"width", cfg.data.width},
               {"height", cfg.data.height},
               {"perClassCount", cfg.data.perClassCount},
               {"noiseLevel", cfg.data.noiseLevel},
               {"seed", cfg.data.seed}};
  json classes = json::array();
  for (const auto& c : cfg.data.classes) classes.push_back(classToJson(c));
  j["data"]["classes"] = std::move(classes);

  j["features"] = {{"gridW", cfg.grid.w},
                   {"gridH", cfg.grid.h},
                   {"gaborBaseWavelength", cfg.bank.baseWavelength},
                   {"gaborSigmaRatio", cfg.bank.sigmaRatio},
                   {"gaborAspect", cfg.bank.aspect},
                   {"gaborTruncation", cfg.bank.truncation},
                   {"hsvOpsPerPixel", cfg.featureCost.hsvOpsPerPixel},
                   {"binOpsPerPixel", cfg.featureCost.binOpsPerPixel}};

  json kinds = json::array();
  for (const FeatureKind& k : cfg.select.kinds) kinds.push_back(kindToString(k));
  j["select"] = {{"delta", cfg.select.delta},
                 {"probeHidden", cfg.select.probeHidden},
                 {"scoringImagesPerClass", cfg.select.scoringImagesPerClass},
                 {"kinds", std::move(kinds)},
                 {"train", trainToJson(cfg.select.probeTrain)}};

  j["tree"] = {{"delta", cfg.tree.delta},
               {"strictNotFound", cfg.tree.strictNotFound},
               {"withBaseline", cfg.tree.withBaseline},
               {"initialHidden", cfg.tree.initialHidden},
               {"finalHidden", cfg.tree.finalHidden},
               {"baselineHidden", cfg.tree.baselineHidden},
               {"widthPerClass", cfg.tree.widthPerClass},
               {"widthBase", cfg.tree.widthBase},
               {"initialTrain", trainToJson(cfg.tree.initialTrain)},
               {"finalTrain", trainToJson(cfg.tree.finalTrain)},
               {"baselineTrain", trainToJson(cfg.tree.baselineTrain)}};

  j["neue"] = {{"numNUs", cfg.neue.numNUs},
               {"inputFifoDepth", cfg.neue.inputFifoDepth},
               {"tBufferCapacity", cfg.neue.tBufferCapacity},
               {"clockGHz", cfg.neue.clockGHz},
               {"costs",
                {{"mac", cfg.neue.costs.mac},
                 {"auEval", cfg.neue.costs.auEval},
                 {"fifoAccess", cfg.neue.costs.fifoAccess},
                 {"tbufAccess", cfg.neue.costs.tbufAccess},
                 {"sramRead", cfg.neue.costs.sramRead},
                 {"sramWrite", cfg.neue.costs.sramWrite}}}};

  j["resize"] = {{"width", cfg.resizeWidth}, {"height", cfg.resizeHeight}};
  return j;
}

RunConfig fromJsonTree(const json& j) {
  RunConfig cfg = {};
  cfg.data = SyntheticSpec{};
  cfg.data.classes.clear();
  try {
    const json& data = j.at("data");
    cfg.data.width = data.at("width").get<int>();
    cfg.data.height = data.at("height").get<int>();
    cfg.data.perClassCount = data.at("perClassCount").get<int>();
    cfg.data.noiseLevel = data.at("noiseLevel").get<double>();
    cfg.data.seed = data.at("seed").get<std::uint64_t>();
    for (const json& c : data.at("classes")) cfg.data.classes.push_back(classFromJson(c));

    const json& feat = j.at("features");
    cfg.grid.w = feat.at("gridW").get<int>();
    cfg.grid.h = feat.at("gridH").get<int>();
    cfg.bank.baseWavelength = feat.at("gaborBaseWavelength").get<double>();
    cfg.bank.sigmaRatio = feat.at("gaborSigmaRatio").get<double>();
    cfg.bank.aspect = feat.at("gaborAspect").get<double>();
    cfg.bank.truncation = feat.at("gaborTruncation").get<double>();
    cfg.featureCost.hsvOpsPerPixel = feat.at("hsvOpsPerPixel").get<int>();
    cfg.featureCost.binOpsPerPixel = feat.at("binOpsPerPixel").get<int>();

    const json& select = j.at("select");
    cfg.select.delta = select.at("delta").get<double>();
    cfg.select.probeHidden = select.at("probeHidden").get<std::vector<int>>();
    cfg.select.scoringImagesPerClass = select.at("scoringImagesPerClass").get<int>();
    cfg.select.kinds.clear();
    for (const json& k : select.at("kinds"))
      cfg.select.kinds.push_back(parseFeatureKind(k.get<std::string>()));
    cfg.select.probeTrain = trainFromJson(select.at("train"));

    const json& tree = j.at("tree");
    cfg.tree.delta = tree.at("delta").get<double>();
    cfg.tree.strictNotFound = tree.at("strictNotFound").get<bool>();
    cfg.tree.withBaseline = tree.at("withBaseline").get<bool>();
    cfg.tree.initialHidden = tree.at("initialHidden").get<std::vector<int>>();
    cfg.tree.finalHidden = tree.at("finalHidden").get<std::vector<int>>();
    cfg.tree.baselineHidden = tree.at("baselineHidden").get<std::vector<int>>();
    cfg.tree.widthPerClass = tree.at("widthPerClass").get<int>();
    cfg.tree.widthBase = tree.at("widthBase").get<int>();
    cfg.tree.initialTrain = trainFromJson(tree.at("initialTrain"));
    cfg.tree.finalTrain = trainFromJson(tree.at("finalTrain"));
    cfg.tree.baselineTrain = trainFromJson(tree.at("baselineTrain"));

    const json& neue = j.at("neue");
    cfg.neue.numNUs = neue.at("numNUs").get<int>();
    cfg.neue.inputFifoDepth = neue.at("inputFifoDepth").get<int>();
    cfg.neue.tBufferCapacity = neue.at("tBufferCapacity").get<int>();
    cfg.neue.clockGHz = neue.at("clockGHz").get<double>();
    const json& costs = neue.at("costs");
    cfg.neue.costs.mac = costs.at("mac").get<double>();
    cfg.neue.costs.auEval = costs.at("auEval").get<double>();
    cfg.neue.costs.fifoAccess = costs.at("fifoAccess").get<double>();
    cfg.neue.costs.tbufAccess = costs.at("tbufAccess").get<double>();
    cfg.neue.costs.sramRead = costs.at("sramRead").get<double>();
    cfg.neue.costs.sramWrite = costs.at("sramWrite").get<double>();

    cfg.resizeWidth = j.at("resize").at("width").get<int>();
    cfg.resizeHeight = j.at("resize").at("height").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  // Keep the shared geometry consistent in the per-module configs.
  cfg.select.grid = cfg.grid;
  cfg.select.bank = cfg.bank;
  cfg.tree.grid = cfg.grid;
  cfg.tree.bank = cfg.bank;
  cfg.tree.featureCost = cfg.featureCost;
  return cfg;
}

}  // namespace

RunConfig defaultRunConfig() {
  RunConfig cfg;
  cfg.data = defaultSyntheticSpec();
  cfg.select.grid = cfg.grid;
  cfg.select.bank = cfg.bank;
  cfg.tree.grid = cfg.grid;
  cfg.tree.bank = cfg.bank;
  cfg.tree.featureCost = cfg.featureCost;
  return cfg;
}

RunConfig runConfigFromJson(const std::string& text) {
  json defaults = toJsonTree(defaultRunConfig());
  json supplied;
  try {
    supplied = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  defaults.merge_patch(supplied);  // missing keys fall back to defaults
  return fromJsonTree(defaults);
}

RunConfig loadRunConfig(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return runConfigFromJson(buf.str());
}

std::string runConfigToJson(const RunConfig& cfg) {
  return toJsonTree(cfg).dump(2) + "\n";
}

void setRunConfigKey(RunConfig& cfg, const std::string& dottedKey, const std::string& value) {
  json tree = toJsonTree(cfg);
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = dottedKey.find('.', start);
    std::string part = dottedKey.substr(start, dot - start);
    if (part.empty()) throw ArgumentError("bad config key: " + dottedKey);
    if (dot == std::string::npos) {
      if (!node->contains(part)) throw ArgumentError("unknown config key: " + dottedKey);
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      break;
    }
    if (!node->contains(part)) throw ArgumentError("unknown config key: " + dottedKey);
    node = &(*node)[part];
    start = dot + 1;
  }
  cfg = fromJsonTree(tree);
}

}  // namespace falcon
