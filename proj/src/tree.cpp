#include "tree.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "errors.hpp"

namespace falcon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<double> rawInput(const ImageRGB& image) {
  std::vector<double> v;
  v.reserve(image.pixels.size());
  for (std::uint8_t p : image.pixels) v.push_back(p / 255.0);
  return v;
}

Topology makeTopology(int input, const std::vector<int>& hidden, int output) {
  Topology t;
  t.layerSizes.push_back(input);
  for (int h : hidden) t.layerSizes.push_back(h);
  t.layerSizes.push_back(output);
  return t;
}

std::vector<Sample> rawSamples(const Dataset& ds, const std::vector<std::size_t>& indices,
                               const std::map<int, int>& classToOutput, int outputs) {
  std::vector<Sample> samples;
  samples.reserve(indices.size());
  for (std::size_t idx : indices) {
    auto it = classToOutput.find(ds.items[idx].classId);
    if (it == classToOutput.end()) continue;
    Sample s;
    s.input = rawInput(ds.items[idx].image);
    s.target.assign(static_cast<std::size_t>(outputs), 0.0);
    s.target[static_cast<std::size_t>(it->second)] = 1.0;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

const FalconNode* FalconTree::findNode(const std::string& id) const {
  for (const FalconNode& n : initialNodes)
    if (n.id == id) return &n;
  for (const FalconNode& n : finalNodes)
    if (n.id == id) return &n;
  if (baseline && baseline->id == id) return &*baseline;
  return nullptr;
}

std::vector<std::string> FalconTree::classNames() const {
  std::vector<std::string> names;
  for (const FalconNode& n : finalNodes)
    for (const std::string& label : n.outputLabels)
      if (std::find(names.begin(), names.end(), label) == names.end()) names.push_back(label);
  return names;
}

void FalconTree::validate() const {
  if (initialNodes.empty()) throw StructuralError("tree has no initial node");
  if (imageWidth < 1 || imageHeight < 1) throw StructuralError("tree image dims unset");
  if (delta < 0.0) throw StructuralError("tree delta must be >= 0");
  std::set<std::string> ids;
  auto checkNode = [&](const FalconNode& n) {
    n.model.validate();
    if (!ids.insert(n.id).second) throw StructuralError("duplicate node id " + n.id);
    if (n.model.outputWidth() != static_cast<int>(n.outputLabels.size()))
      throw StructuralError("node " + n.id + ": output width != label count");
  };
  int rawWidth = 3 * imageWidth * imageHeight;
  for (const FalconNode& n : initialNodes) {
    checkNode(n);
    if (n.role != FalconNode::Role::Initial || n.inputKind != FalconNode::InputKind::RawPixels)
      throw StructuralError("initial node " + n.id + " must consume raw pixels");
    if (n.model.inputWidth() != rawWidth)
      throw StructuralError("initial node " + n.id + " input width != 3*W*H");
  }
  for (const FalconNode& n : finalNodes) {
    checkNode(n);
    if (n.role != FalconNode::Role::Final || n.inputKind != FalconNode::InputKind::Feature)
      throw StructuralError("final node " + n.id + " must consume a feature vector");
    if (n.model.inputWidth() != static_cast<int>(featureLength(n.featureKind, grid)))
      throw StructuralError("final node " + n.id + " input width != feature length");
  }
  if (baseline) {
    checkNode(*baseline);
    if (baseline->role != FalconNode::Role::Baseline ||
        baseline->inputKind != FalconNode::InputKind::RawPixels)
      throw StructuralError("baseline node malformed");
    if (baseline->model.inputWidth() != rawWidth)
      throw StructuralError("baseline input width != 3*W*H");
  }
  std::set<std::string> routed;
  for (const auto& [key, targets] : routes) {
    const FalconNode* initial = nullptr;
    for (const FalconNode& n : initialNodes)
      if (n.id == key.first) initial = &n;
    if (!initial) throw StructuralError("route from unknown initial node " + key.first);
    if (key.second < 0 || key.second >= initial->model.outputWidth())
      throw StructuralError("route output index out of range on " + key.first);
    if (targets.empty()) throw StructuralError("empty route target list");
    const FeatureKind* kind = nullptr;
    for (const std::string& id : targets) {
      auto it = std::find_if(finalNodes.begin(), finalNodes.end(),
                             [&](const FalconNode& n) { return n.id == id; });
      if (it == finalNodes.end()) throw StructuralError("route to unknown final node " + id);
      if (kind && !(*kind == it->featureKind))
        throw StructuralError("route mixes feature kinds at " + id);
      kind = &it->featureKind;
      routed.insert(id);
    }
  }
  for (const FalconNode& n : finalNodes)
    if (!routed.count(n.id)) throw StructuralError("final node " + n.id + " unreachable");
  for (const FalconNode& n : initialNodes)
    for (int j = 0; j < n.model.outputWidth(); ++j)
      if (!routes.count({n.id, j}))
        throw StructuralError("initial node " + n.id + " output " + std::to_string(j) +
                              " has no route");
}

ClassifyResult classify(const FalconTree& tree, const ImageRGB& image) {
  image.validate();
  if (image.width != tree.imageWidth || image.height != tree.imageHeight)
    throw StructuralError("classify: image dims do not match tree input");

  std::vector<double> raw = rawInput(image);
  ClassifyResult result;
  InferenceTrace& trace = result.trace;

  double omax = -1.0, omin = 2.0;
  std::size_t bestNode = 0;
  int bestOut = 0;
  for (std::size_t n = 0; n < tree.initialNodes.size(); ++n) {
    const FalconNode& node = tree.initialNodes[n];
    std::vector<double> conf = forward(node.model, raw);
    for (std::size_t j = 0; j < conf.size(); ++j) {
      if (conf[j] > omax) {
        omax = conf[j];
        bestNode = n;
        bestOut = static_cast<int>(j);
      }
      omin = std::min(omin, conf[j]);
    }
    trace.activatedNodeIds.push_back(node.id);
    trace.nodeMacs[node.id] = countMac(node.model.topology);
    trace.totalMacs += countMac(node.model.topology);
    trace.initialConfidences.push_back(std::move(conf));
  }

  double divergence = omax - omin;
  if (tree.baseline && divergence < tree.delta) {
    std::vector<double> out = forward(tree.baseline->model, raw);
    std::size_t arg = static_cast<std::size_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
    result.label = tree.baseline->outputLabels[arg];
    trace.activatedNodeIds.push_back(tree.baseline->id);
    trace.nodeMacs[tree.baseline->id] = countMac(tree.baseline->model.topology);
    trace.totalMacs += countMac(tree.baseline->model.topology);
    trace.routedVia.kind = RoutedVia::Kind::Baseline;
    return result;
  }
  if (!tree.baseline && tree.strictNotFound && divergence < tree.delta) {
    trace.routedVia.kind = RoutedVia::Kind::NotFound;
    return result;  // label stays empty: NOT FOUND, no further nodes activated
  }

  const FalconNode& chosen = tree.initialNodes[bestNode];
  const auto& targets = tree.routes.at({chosen.id, bestOut});
  const FalconNode* first = tree.findNode(targets.front());
  FeatureVector fv = extractFeature(image, first->featureKind, tree.grid, tree.bank);
  trace.featureOps = featureExtractionOps(first->featureKind, image.width, image.height,
                                          tree.grid, tree.bank, tree.featureCost);
  double best = -1.0;
  for (const std::string& id : targets) {
    const FalconNode* node = tree.findNode(id);
    std::vector<double> out = forward(node->model, fv.values);
    trace.activatedNodeIds.push_back(node->id);
    trace.nodeMacs[node->id] = countMac(node->model.topology);
    trace.totalMacs += countMac(node->model.topology);
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (out[j] > best) {
        best = out[j];
        result.label = node->outputLabels[j];
      }
    }
  }
  trace.routedVia.kind = RoutedVia::Kind::Final;
  trace.routedVia.initialId = chosen.id;
  trace.routedVia.outputIndex = bestOut;
  return result;
}

int finalHiddenWidth(const TreeBuildConfig& cfg, int classCount) {
  return cfg.widthPerClass * classCount + cfg.widthBase;
}

namespace {

std::vector<int> finalHidden(const TreeBuildConfig& cfg, int classCount) {
  if (!cfg.finalHidden.empty()) return cfg.finalHidden;
  return {finalHiddenWidth(cfg, classCount)};
}

}  // namespace

BuildResult buildTree(const Dataset& ds, const Grouping& grouping, const TreeBuildConfig& cfg,
                      const std::optional<MlpModel>& baseline) {
  ds.validate();
  if (grouping.groups.empty()) throw ArgumentError("buildTree: empty grouping");
  if (!grouping.fallbackClasses.empty() && !baseline)
    throw ArgumentError(
        "buildTree: grouping leaves classes unassigned; provide a baseline node to route them");

  std::map<std::string, int> classIdOf;
  for (int c = 0; c < ds.classCount(); ++c)
    classIdOf[ds.classNames[static_cast<std::size_t>(c)]] = c;

  BuildResult result;
  FalconTree& tree = result.tree;
  tree.imageWidth = ds.items.front().image.width;
  tree.imageHeight = ds.items.front().image.height;
  tree.grid = cfg.grid;
  tree.bank = cfg.bank;
  tree.featureCost = cfg.featureCost;
  tree.delta = cfg.delta;
  tree.strictNotFound = cfg.strictNotFound;

  // Group index per class id, for the initial node's targets.
  std::map<int, int> groupOf;
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
    for (const std::string& name : grouping.groups[g].classes) {
      auto it = classIdOf.find(name);
      if (it == classIdOf.end()) throw ArgumentError("buildTree: unknown class " + name);
      if (!groupOf.emplace(it->second, static_cast<int>(g)).second)
        throw ArgumentError("buildTree: class " + name + " in two groups");
    }
    if (grouping.groups[g].classes.size() == 1)
      result.record.warnings.push_back("group " + kindToString(grouping.groups[g].kind) +
                                       " has a single class; its final node degenerates to a "
                                       "confidence check");
  }

  int rawWidth = 3 * tree.imageWidth * tree.imageHeight;
  std::vector<std::size_t> train = ds.indicesOf(Split::Train);
  if (train.empty()) throw ArgumentError("buildTree: empty training split");

  // Initial node over the feature labels.
  {
    FalconNode node;
    node.id = "initial-0";
    node.role = FalconNode::Role::Initial;
    node.inputKind = FalconNode::InputKind::RawPixels;
    for (const auto& group : grouping.groups) node.outputLabels.push_back(kindToString(group.kind));
    std::vector<Sample> samples =
        rawSamples(ds, train, groupOf, static_cast<int>(grouping.groups.size()));
    if (samples.empty()) throw ArgumentError("buildTree: no training data for grouped classes");
    node.model = initMlp(makeTopology(rawWidth, cfg.initialHidden,
                                      static_cast<int>(grouping.groups.size())),
                         cfg.initialTrain.seed);
    TrainStats stats = trainSgd(node.model, samples, cfg.initialTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
    tree.initialNodes.push_back(std::move(node));
  }

  // One final node per group, trained on that group's feature vectors.
  for (std::size_t g = 0; g < grouping.groups.size(); ++g) {
    const Grouping::Group& group = grouping.groups[g];
    FalconNode node;
    node.id = "final-" + kindToString(group.kind);
    std::replace(node.id.begin(), node.id.end(), ':', '-');
    node.role = FalconNode::Role::Final;
    node.inputKind = FalconNode::InputKind::Feature;
    node.featureKind = group.kind;
    node.outputLabels = group.classes;

    std::vector<Sample> samples;
    for (std::size_t idx : train) {
      const DatasetItem& item = ds.items[idx];
      auto pos = std::find(group.classes.begin(), group.classes.end(),
                           ds.classNames[static_cast<std::size_t>(item.classId)]);
      if (pos == group.classes.end()) continue;
      Sample s;
      s.input = extractFeature(item.image, group.kind, cfg.grid, cfg.bank).values;
      s.target.assign(group.classes.size(), 0.0);
      s.target[static_cast<std::size_t>(pos - group.classes.begin())] = 1.0;
      samples.push_back(std::move(s));
    }
    if (samples.empty())
      throw ArgumentError("buildTree: no training data for group " + kindToString(group.kind));
    node.model = initMlp(makeTopology(static_cast<int>(samples.front().input.size()),
                                      finalHidden(cfg, static_cast<int>(group.classes.size())),
                                      static_cast<int>(group.classes.size())),
                         cfg.finalTrain.seed + g);
    TrainStats stats = trainSgd(node.model, samples, cfg.finalTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
    tree.routes[{"initial-0", static_cast<int>(g)}] = {node.id};
    tree.finalNodes.push_back(std::move(node));
  }

  if (baseline) {
    FalconNode node;
    node.id = "baseline";
    node.role = FalconNode::Role::Baseline;
    node.inputKind = FalconNode::InputKind::RawPixels;
    node.model = *baseline;
    node.outputLabels = ds.classNames;
    if (node.model.outputWidth() != ds.classCount() || node.model.inputWidth() != rawWidth)
      throw ArgumentError("buildTree: baseline model shape does not match the dataset");
    // Pre-trained input: appending it costs nothing.
    result.record.nodes.push_back({node.id, 0, true});
    tree.baseline = std::move(node);
  }

  tree.validate();
  return result;
}

BaselineResult trainBaseline(const Dataset& ds, const TreeBuildConfig& cfg) {
  ds.validate();
  std::vector<std::size_t> train = ds.indicesOf(Split::Train);
  if (train.empty()) throw ArgumentError("trainBaseline: empty training split");
  int rawWidth = 3 * ds.items.front().image.width * ds.items.front().image.height;
  std::map<int, int> identity;
  for (int c = 0; c < ds.classCount(); ++c) identity[c] = c;
  std::vector<Sample> samples = rawSamples(ds, train, identity, ds.classCount());
  BaselineResult result;
  result.model = initMlp(makeTopology(rawWidth, cfg.baselineHidden, ds.classCount()),
                         cfg.baselineTrain.seed);
  result.stats = trainSgd(result.model, samples, cfg.baselineTrain);
  return result;
}

BuildResult mergeTrees(const std::vector<const FalconTree*>& trees, const MergeConfig& cfg,
                       const std::optional<BaselineSpec>& baseline) {
  if (trees.empty()) throw ArgumentError("mergeTrees: no trees");
  for (const FalconTree* t : trees) t->validate();

  std::set<std::string> seen;
  for (const FalconTree* t : trees)
    for (const std::string& name : t->classNames())
      if (!seen.insert(name).second)
        throw ArgumentError("mergeTrees: class " + name + " appears in more than one tree");

  const FalconTree& first = *trees.front();
  for (const FalconTree* t : trees) {
    if (t->imageWidth != first.imageWidth || t->imageHeight != first.imageHeight)
      throw ArgumentError("mergeTrees: trees expect different image sizes");
    if (t->grid.w != first.grid.w || t->grid.h != first.grid.h)
      throw ArgumentError("mergeTrees: trees use different pooling grids");
    if (t->bank.baseWavelength != first.bank.baseWavelength)
      throw ArgumentError("mergeTrees: trees use different gabor banks");
  }

  BuildResult result;
  FalconTree& merged = result.tree;
  merged.imageWidth = first.imageWidth;
  merged.imageHeight = first.imageHeight;
  merged.grid = first.grid;
  merged.bank = first.bank;
  merged.featureCost = first.featureCost;
  merged.delta = cfg.delta;
  merged.strictNotFound = cfg.strictNotFound;

  for (std::size_t t = 0; t < trees.size(); ++t) {
    std::string prefix = "t" + std::to_string(t) + ".";
    for (const FalconNode& n : trees[t]->initialNodes) {
      FalconNode copy = n;
      copy.id = prefix + n.id;
      result.record.nodes.push_back({copy.id, 0, true});
      merged.initialNodes.push_back(std::move(copy));
    }
    for (const FalconNode& n : trees[t]->finalNodes) {
      FalconNode copy = n;  // parameters carried over untouched
      copy.id = prefix + n.id;
      result.record.nodes.push_back({copy.id, 0, true});
      merged.finalNodes.push_back(std::move(copy));
    }
    for (const auto& [key, targets] : trees[t]->routes) {
      std::vector<std::string> renamed;
      for (const std::string& id : targets) renamed.push_back(prefix + id);
      merged.routes[{prefix + key.first, key.second}] = std::move(renamed);
    }
  }

  if (baseline) {
    std::set<std::string> labels(baseline->classLabels.begin(), baseline->classLabels.end());
    if (labels != seen)
      throw ArgumentError("mergeTrees: baseline labels do not cover the merged class set");
    FalconNode node;
    node.id = "baseline";
    node.role = FalconNode::Role::Baseline;
    node.inputKind = FalconNode::InputKind::RawPixels;
    node.model = baseline->model;
    node.outputLabels = baseline->classLabels;
    result.record.nodes.push_back({node.id, 0, true});
    merged.baseline = std::move(node);
  }

  merged.validate();
  return result;
}

const char* extensionStrategyName(ExtensionStrategy s) {
  return s == ExtensionStrategy::RetrainFinal ? "retrain-final" : "add-new-node";
}

namespace {

// Route owning a feature kind: (initial node index, output index).
std::pair<std::size_t, int> routeOfKind(const FalconTree& tree, FeatureKind kind) {
  std::string label = kindToString(kind);
  for (std::size_t n = 0; n < tree.initialNodes.size(); ++n) {
    const auto& labels = tree.initialNodes[n].outputLabels;
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[j] == label) return {n, static_cast<int>(j)};
  }
  throw ArgumentError("feature kind " + label + " is not present in the tree");
}

}  // namespace

BuildResult extendTree(const FalconTree& tree, const Dataset& ds,
                       const std::vector<std::string>& newClasses, FeatureKind kind,
                       ExtensionStrategy strategy, const TreeBuildConfig& cfg) {
  tree.validate();
  ds.validate();
  if (newClasses.empty()) throw ArgumentError("extendTree: no new classes given");
  std::vector<std::string> existing = tree.classNames();
  for (const std::string& name : newClasses) {
    if (std::find(ds.classNames.begin(), ds.classNames.end(), name) == ds.classNames.end())
      throw ArgumentError("extendTree: class " + name + " missing from the dataset");
    if (std::find(existing.begin(), existing.end(), name) != existing.end())
      throw ArgumentError("extendTree: class " + name + " already in the tree");
  }

  auto [initialIdx, outputIdx] = routeOfKind(tree, kind);
  const FalconNode& owner = tree.initialNodes[initialIdx];
  auto routeKey = std::make_pair(owner.id, outputIdx);
  std::vector<std::string> oldTargets = tree.routes.at(routeKey);
  std::vector<std::string> oldClasses;
  for (const std::string& id : oldTargets)
    for (const std::string& label : tree.findNode(id)->outputLabels)
      oldClasses.push_back(label);

  std::map<std::string, int> classIdOf;
  for (int c = 0; c < ds.classCount(); ++c)
    classIdOf[ds.classNames[static_cast<std::size_t>(c)]] = c;
  auto classId = [&](const std::string& name) {
    auto it = classIdOf.find(name);
    if (it == classIdOf.end())
      throw ArgumentError("extendTree: class " + name +
                          " is in the tree but missing from the dataset; retraining needs "
                          "data for old classes too");
    return it->second;
  };

  BuildResult result;
  FalconTree& out = result.tree;
  out = tree;

  auto featureSamples = [&](const std::vector<std::string>& classes) {
    std::vector<Sample> samples;
    for (std::size_t idx : ds.indicesOf(Split::Train)) {
      const DatasetItem& item = ds.items[idx];
      auto pos = std::find(classes.begin(), classes.end(),
                           ds.classNames[static_cast<std::size_t>(item.classId)]);
      if (pos == classes.end()) continue;
      Sample s;
      s.input = extractFeature(item.image, kind, tree.grid, tree.bank).values;
      s.target.assign(classes.size(), 0.0);
      s.target[static_cast<std::size_t>(pos - classes.begin())] = 1.0;
      samples.push_back(std::move(s));
    }
    if (samples.empty()) throw ArgumentError("extendTree: no training data for the new node");
    return samples;
  };

  if (strategy == ExtensionStrategy::RetrainFinal) {
    std::vector<std::string> allClasses = oldClasses;
    allClasses.insert(allClasses.end(), newClasses.begin(), newClasses.end());
    FalconNode node;
    node.id = oldTargets.front() + "-retrained";
    node.role = FalconNode::Role::Final;
    node.inputKind = FalconNode::InputKind::Feature;
    node.featureKind = kind;
    node.outputLabels = allClasses;
    std::vector<Sample> samples = featureSamples(allClasses);
    node.model = initMlp(makeTopology(static_cast<int>(samples.front().input.size()),
                                      finalHidden(cfg, static_cast<int>(allClasses.size())),
                                      static_cast<int>(allClasses.size())),
                         cfg.finalTrain.seed);
    TrainStats stats = trainSgd(node.model, samples, cfg.finalTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
    out.finalNodes.erase(
        std::remove_if(out.finalNodes.begin(), out.finalNodes.end(),
                       [&](const FalconNode& n) {
                         return std::find(oldTargets.begin(), oldTargets.end(), n.id) !=
                                oldTargets.end();
                       }),
        out.finalNodes.end());
    out.routes[routeKey] = {node.id};
    out.finalNodes.push_back(std::move(node));
  } else {
    FalconNode node;
    node.id = oldTargets.front() + "-new" + std::to_string(oldTargets.size());
    node.role = FalconNode::Role::Final;
    node.inputKind = FalconNode::InputKind::Feature;
    node.featureKind = kind;
    node.outputLabels = newClasses;
    std::vector<Sample> samples = featureSamples(newClasses);
    node.model = initMlp(makeTopology(static_cast<int>(samples.front().input.size()),
                                      finalHidden(cfg, static_cast<int>(newClasses.size())),
                                      static_cast<int>(newClasses.size())),
                         cfg.finalTrain.seed);
    TrainStats stats = trainSgd(node.model, samples, cfg.finalTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
    out.routes[routeKey].push_back(node.id);
    out.finalNodes.push_back(std::move(node));
    for (const std::string& id : oldTargets) result.record.nodes.push_back({id, 0, true});
  }

  // Retrain the owning initial node with the enlarged class set; its feature
  // labels stay as they are, the new classes simply join this route's group.
  {
    std::map<int, int> groupOf;
    for (const auto& [key, targets] : tree.routes) {
      if (key.first != owner.id) continue;
      for (const std::string& id : targets)
        for (const std::string& label : tree.findNode(id)->outputLabels)
          groupOf[classId(label)] = key.second;
    }
    for (const std::string& name : newClasses) groupOf[classId(name)] = outputIdx;
    std::vector<Sample> samples = rawSamples(ds, ds.indicesOf(Split::Train), groupOf,
                                             owner.model.outputWidth());
    FalconNode& node = out.initialNodes[initialIdx];
    node.model = initMlp(node.model.topology, cfg.initialTrain.seed);
    TrainStats stats = trainSgd(node.model, samples, cfg.initialTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
  }
  for (std::size_t n = 0; n < out.initialNodes.size(); ++n)
    if (n != initialIdx) result.record.nodes.push_back({out.initialNodes[n].id, 0, true});

  if (tree.baseline) {
    std::vector<std::string> allLabels = tree.baseline->outputLabels;
    allLabels.insert(allLabels.end(), newClasses.begin(), newClasses.end());
    std::map<int, int> labelOf;
    for (std::size_t i = 0; i < allLabels.size(); ++i)
      labelOf[classId(allLabels[i])] = static_cast<int>(i);
    std::vector<Sample> samples = rawSamples(ds, ds.indicesOf(Split::Train), labelOf,
                                             static_cast<int>(allLabels.size()));
    FalconNode& node = *out.baseline;
    node.outputLabels = allLabels;
    node.model = initMlp(makeTopology(node.model.inputWidth(), cfg.baselineHidden,
                                      static_cast<int>(allLabels.size())),
                         cfg.baselineTrain.seed);
    TrainStats stats = trainSgd(node.model, samples, cfg.baselineTrain);
    result.record.nodes.push_back({node.id, stats.weightUpdateMacs, false});
  }

  out.validate();
  return result;
}

ExtensionPlan planExtension(const FalconTree& tree, int newClassCount, FeatureKind kind,
                            const TreeBuildConfig& cfg) {
  tree.validate();
  if (newClassCount < 0) throw ArgumentError("planExtension: newClassCount must be >= 0");
  auto [initialIdx, outputIdx] = routeOfKind(tree, kind);
  const auto& targets = tree.routes.at({tree.initialNodes[initialIdx].id, outputIdx});

  std::uint64_t initialMacs = 0;
  for (const FalconNode& n : tree.initialNodes) initialMacs += countMac(n.model.topology);
  std::uint64_t featOps = featureExtractionOps(kind, tree.imageWidth, tree.imageHeight,
                                               tree.grid, tree.bank, tree.featureCost);

  int oldClasses = 0;
  std::uint64_t oldMacs = 0;
  for (const std::string& id : targets) {
    const FalconNode* n = tree.findNode(id);
    oldClasses += static_cast<int>(n->outputLabels.size());
    oldMacs += countMac(n->model.topology);
  }
  int featLen = static_cast<int>(featureLength(kind, tree.grid));

  auto nodeMacs = [&](int classes) {
    return countMac(makeTopology(featLen, finalHidden(cfg, classes), classes));
  };

  ExtensionPlan plan;
  plan.opsRetrain = static_cast<double>(initialMacs + featOps +
                                        nodeMacs(oldClasses + newClassCount));
  std::uint64_t addNew = initialMacs + featOps + oldMacs;
  if (newClassCount > 0) addNew += nodeMacs(newClassCount);
  plan.opsAddNewNode = static_cast<double>(addNew);
  plan.recommendation = plan.opsAddNewNode < plan.opsRetrain ? ExtensionStrategy::AddNewNode
                                                             : ExtensionStrategy::RetrainFinal;
  return plan;
}

EvalReport evaluate(const FalconTree& tree, const Dataset& ds, Split split) {
  tree.validate();
  std::vector<std::size_t> indices = ds.indicesOf(split);
  if (indices.empty()) throw ArgumentError("evaluate: empty test set");

  EvalReport report;
  report.instances = indices.size();
  std::map<std::string, std::size_t> hits;
  std::size_t correct = 0, viaBaseline = 0, notFound = 0;
  double opsSum = 0.0;
  for (std::size_t idx : indices) {
    const DatasetItem& item = ds.items[idx];
    ClassifyResult r = classify(tree, item.image);
    opsSum += static_cast<double>(r.trace.totalMacs + r.trace.featureOps);
    switch (r.trace.routedVia.kind) {
      case RoutedVia::Kind::Baseline: ++viaBaseline; break;
      case RoutedVia::Kind::NotFound: ++notFound; break;
      case RoutedVia::Kind::Final:
        for (const std::string& id : r.trace.activatedNodeIds)
          if (tree.findNode(id)->role == FalconNode::Role::Final) ++hits[id];
        break;
    }
    if (r.label && *r.label == ds.classNames[static_cast<std::size_t>(item.classId)]) ++correct;
    report.traces.push_back(std::move(r.trace));
  }
  double n = static_cast<double>(indices.size());
  report.accuracy = static_cast<double>(correct) / n;
  report.avgOpsPerInput = opsSum / n;
  report.baselineRate = static_cast<double>(viaBaseline) / n;
  report.notFoundRate = static_cast<double>(notFound) / n;
  for (const auto& [id, count] : hits)
    report.nodeActivationRate[id] = static_cast<double>(count) / n;
  return report;
}

std::vector<DeltaSweepRow> sweepDelta(const FalconTree& tree, const Dataset& ds, Split split,
                                      const std::vector<double>& deltas) {
  tree.validate();
  if (!tree.baseline) throw ArgumentError("sweepDelta: tree has no baseline node");
  std::vector<std::size_t> indices = ds.indicesOf(split);
  if (indices.empty()) throw ArgumentError("sweepDelta: empty test set");

  // Single pass: cache per-instance divergence and both outcomes, then each
  // delta row is a threshold over the cache.
  FalconTree routed = tree;
  routed.delta = 0.0;  // |omax - omin| < 0 never holds, so routing always runs
  struct Cached {
    double divergence;
    bool finalCorrect;
    double finalOps;
    bool baselineCorrect;
    double baselineOps;
  };
  std::vector<Cached> cache;
  cache.reserve(indices.size());
  for (std::size_t idx : indices) {
    const DatasetItem& item = ds.items[idx];
    ClassifyResult r = classify(routed, item.image);
    Cached c;
    double omax = -1.0, omin = 2.0;
    for (const auto& conf : r.trace.initialConfidences)
      for (double v : conf) {
        omax = std::max(omax, v);
        omin = std::min(omin, v);
      }
    c.divergence = omax - omin;
    const std::string& truth = ds.classNames[static_cast<std::size_t>(item.classId)];
    c.finalCorrect = r.label && *r.label == truth;
    c.finalOps = static_cast<double>(r.trace.totalMacs + r.trace.featureOps);

    std::vector<double> out = forward(tree.baseline->model, rawInput(item.image));
    std::size_t arg = static_cast<std::size_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
    c.baselineCorrect = tree.baseline->outputLabels[arg] == truth;
    double initialMacs = 0.0;
    for (const FalconNode& n : tree.initialNodes)
      initialMacs += static_cast<double>(countMac(n.model.topology));
    c.baselineOps = initialMacs + static_cast<double>(countMac(tree.baseline->model.topology));
    cache.push_back(c);
  }

  std::vector<DeltaSweepRow> rows;
  for (double delta : deltas) {
    DeltaSweepRow row;
    row.delta = delta;
    std::size_t correct = 0, viaBaseline = 0;
    double ops = 0.0;
    for (const Cached& c : cache) {
      if (c.divergence < delta) {
        ++viaBaseline;
        ops += c.baselineOps;
        correct += c.baselineCorrect ? 1 : 0;
      } else {
        ops += c.finalOps;
        correct += c.finalCorrect ? 1 : 0;
      }
    }
    double n = static_cast<double>(cache.size());
    row.accuracy = static_cast<double>(correct) / n;
    row.avgOps = ops / n;
    row.baselineRate = static_cast<double>(viaBaseline) / n;
    rows.push_back(row);
  }
  return rows;
}

namespace {

json nodeToJson(const FalconNode& n) {
  json j;
  j["id"] = n.id;
  j["role"] = n.role == FalconNode::Role::Initial
                  ? "initial"
                  : (n.role == FalconNode::Role::Final ? "final" : "baseline");
  j["input"] = n.inputKind == FalconNode::InputKind::RawPixels ? "raw-pixels"
                                                               : kindToString(n.featureKind);
  j["outputLabels"] = n.outputLabels;
  j["model"] = n.id + ".mlp";
  return j;
}

FalconNode nodeFromJson(const json& j, const fs::path& dir) {
  FalconNode n;
  n.id = j.at("id").get<std::string>();
  std::string role = j.at("role").get<std::string>();
  if (role == "initial")
    n.role = FalconNode::Role::Initial;
  else if (role == "final")
    n.role = FalconNode::Role::Final;
  else if (role == "baseline")
    n.role = FalconNode::Role::Baseline;
  else
    throw FormatError("tree manifest: unknown role " + role);
  std::string input = j.at("input").get<std::string>();
  if (input == "raw-pixels") {
    n.inputKind = FalconNode::InputKind::RawPixels;
  } else {
    n.inputKind = FalconNode::InputKind::Feature;
    n.featureKind = parseFeatureKind(input);
  }
  n.outputLabels = j.at("outputLabels").get<std::vector<std::string>>();
  n.model = loadModel((dir / j.at("model").get<std::string>()).string());
  return n;
}

}  // namespace

void writeTree(const FalconTree& tree, const std::string& dir) {
  tree.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["imageWidth"] = tree.imageWidth;
  manifest["imageHeight"] = tree.imageHeight;
  manifest["grid"] = {{"w", tree.grid.w}, {"h", tree.grid.h}};
  manifest["gabor"] = {{"baseWavelength", tree.bank.baseWavelength},
                       {"sigmaRatio", tree.bank.sigmaRatio},
                       {"aspect", tree.bank.aspect},
                       {"truncation", tree.bank.truncation}};
  manifest["featureCost"] = {{"hsvOpsPerPixel", tree.featureCost.hsvOpsPerPixel},
                             {"binOpsPerPixel", tree.featureCost.binOpsPerPixel}};
  manifest["delta"] = tree.delta;
  manifest["strictNotFound"] = tree.strictNotFound;
  json nodes = json::array();
  auto dump = [&](const FalconNode& n) {
    nodes.push_back(nodeToJson(n));
    saveModel(n.model, (fs::path(dir) / (n.id + ".mlp")).string());
  };
  for (const FalconNode& n : tree.initialNodes) dump(n);
  for (const FalconNode& n : tree.finalNodes) dump(n);
  if (tree.baseline) dump(*tree.baseline);
  manifest["nodes"] = std::move(nodes);
  json routes = json::array();
  for (const auto& [key, targets] : tree.routes)
    routes.push_back({{"initial", key.first}, {"output", key.second}, {"targets", targets}});
  manifest["routes"] = std::move(routes);
  std::ofstream os(fs::path(dir) / "tree.json");
  if (!os) throw IoError("cannot write tree manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

FalconTree openTree(const std::string& manifestPath) {
  fs::path mpath(manifestPath);
  if (fs::is_directory(mpath)) mpath /= "tree.json";
  std::ifstream is(mpath);
  if (!is) throw IoError("cannot open " + mpath.string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  FalconTree tree;
  fs::path dir = mpath.parent_path();
  try {
    tree.imageWidth = manifest.at("imageWidth").get<int>();
    tree.imageHeight = manifest.at("imageHeight").get<int>();
    tree.grid.w = manifest.at("grid").at("w").get<int>();
    tree.grid.h = manifest.at("grid").at("h").get<int>();
    const json& gabor = manifest.at("gabor");
    tree.bank.baseWavelength = gabor.at("baseWavelength").get<double>();
    tree.bank.sigmaRatio = gabor.at("sigmaRatio").get<double>();
    tree.bank.aspect = gabor.at("aspect").get<double>();
    tree.bank.truncation = gabor.at("truncation").get<double>();
    tree.featureCost.hsvOpsPerPixel = manifest.at("featureCost").at("hsvOpsPerPixel").get<int>();
    tree.featureCost.binOpsPerPixel = manifest.at("featureCost").at("binOpsPerPixel").get<int>();
    tree.delta = manifest.at("delta").get<double>();
    tree.strictNotFound = manifest.at("strictNotFound").get<bool>();
    for (const json& j : manifest.at("nodes")) {
      FalconNode n = nodeFromJson(j, dir);
      if (n.role == FalconNode::Role::Initial)
        tree.initialNodes.push_back(std::move(n));
      else if (n.role == FalconNode::Role::Final)
        tree.finalNodes.push_back(std::move(n));
      else
        tree.baseline = std::move(n);
    }
    for (const json& j : manifest.at("routes"))
      tree.routes[{j.at("initial").get<std::string>(), j.at("output").get<int>()}] =
          j.at("targets").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  tree.validate();
  return tree;
}

}  // namespace falcon
