#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "features.hpp"
#include "mlp.hpp"
#include "select.hpp"

namespace falcon {

// One classifier in the tree. Initial nodes consume raw pixels and emit
// feature-category confidences; final nodes consume one feature vector and
// emit class confidences; the baseline consumes raw pixels and covers every
// class.
struct FalconNode {
  enum class Role { Initial, Final, Baseline };
  enum class InputKind { RawPixels, Feature };

  std::string id;
  Role role = Role::Final;
  MlpModel model;
  InputKind inputKind = InputKind::Feature;
  FeatureKind featureKind;  // meaningful when inputKind == Feature
  // Feature-kind strings for initial nodes, class names otherwise.
  std::vector<std::string> outputLabels;
};

// Two-level classifier tree with selective path activation. routes maps an
// initial-node output to the final node(s) on that path; a route normally
// has a single target, tree extension in add-new-node mode appends siblings
// that are activated together.
struct FalconTree {
  std::vector<FalconNode> initialNodes;
  std::vector<FalconNode> finalNodes;
  std::optional<FalconNode> baseline;
  std::map<std::pair<std::string, int>, std::vector<std::string>> routes;
  double delta = 0.0;
  bool strictNotFound = false;

  int imageWidth = 0;
  int imageHeight = 0;
  GridDims grid;
  GaborBank bank;
  FeatureCostModel featureCost;

  const FalconNode* findNode(const std::string& id) const;
  // Class names covered by final nodes, in route order.
  std::vector<std::string> classNames() const;
  void validate() const;
};

struct RoutedVia {
  enum class Kind { Final, Baseline, NotFound };
  Kind kind = Kind::Final;
  std::string initialId;  // set for Kind::Final
  int outputIndex = -1;
};

struct InferenceTrace {
  std::vector<std::string> activatedNodeIds;
  std::vector<std::vector<double>> initialConfidences;  // per initial node
  RoutedVia routedVia;
  std::map<std::string, std::uint64_t> nodeMacs;  // countMac per activated node
  std::uint64_t totalMacs = 0;   // sum of countMac over activated nodes
  std::uint64_t featureOps = 0;  // cost of exactly the features computed
};

struct ClassifyResult {
  std::optional<std::string> label;  // nullopt = NOT FOUND
  InferenceTrace trace;
};

// Routing rule: run every initial node on raw pixels, take the global max
// and min over all their outputs; if a baseline exists and max-min < delta
// the baseline classifies, otherwise the max-confidence output's route is
// activated and exactly that route's feature vector is computed. Without a
// baseline, strictNotFound turns sub-delta inputs into NOT FOUND instead of
// routing to the argmax.
ClassifyResult classify(const FalconTree& tree, const ImageRGB& image);

struct TreeBuildConfig {
  TrainConfig initialTrain{0.5, 40, 16, 21, true};
  TrainConfig finalTrain{0.5, 60, 16, 22, false};
  TrainConfig baselineTrain{0.5, 40, 16, 23, false};
  std::vector<int> initialHidden = {8};
  // Empty = size hidden layers by the width rule below.
  std::vector<int> finalHidden;
  std::vector<int> baselineHidden = {24};
  // Hidden width of a final node handling k classes: widthPerClass*k + widthBase.
  int widthPerClass = 16;
  int widthBase = 4;
  GridDims grid;
  GaborBank bank;
  FeatureCostModel featureCost;
  double delta = 0.0;
  bool strictNotFound = false;
  bool withBaseline = false;  // pipeline flag: train and append a baseline
};

int finalHiddenWidth(const TreeBuildConfig& cfg, int classCount);

struct NodeBuildRecord {
  std::string nodeId;
  std::uint64_t weightUpdateMacs = 0;
  bool reused = false;
};

struct BuildRecord {
  std::vector<NodeBuildRecord> nodes;
  std::uint64_t probeTrainMacs = 0;  // feature-selection overhead, when known
  std::vector<std::string> warnings;
};

struct BuildResult {
  FalconTree tree;
  BuildRecord record;
};

// Trains one initial node over the grouping's feature labels and one final
// node per group; appends the provided pre-trained baseline as the last
// node. Fallback classes require a baseline (they are only reachable through
// the divergence module). Single-class groups are allowed but warned about.
BuildResult buildTree(const Dataset& ds, const Grouping& grouping, const TreeBuildConfig& cfg,
                      const std::optional<MlpModel>& baseline);

// Trains a plain single-network classifier over all classes of the dataset
// (the traditional model the tree is compared against and appended from).
struct BaselineResult {
  MlpModel model;
  TrainStats stats;
};
BaselineResult trainBaseline(const Dataset& ds, const TreeBuildConfig& cfg);

struct BaselineSpec {
  MlpModel model;
  std::vector<std::string> classLabels;
};

struct MergeConfig {
  double delta = 0.0;
  bool strictNotFound = false;
};

// Carries every node over with bit-identical parameters; the input trees'
// initial nodes become the merged tree's initial nodes and their baselines
// are dropped in favour of the optional fresh combined one. Trees must have
// disjoint class labels and identical input/feature geometry.
BuildResult mergeTrees(const std::vector<const FalconTree*>& trees, const MergeConfig& cfg,
                       const std::optional<BaselineSpec>& baseline);

enum class ExtensionStrategy { RetrainFinal, AddNewNode };

const char* extensionStrategyName(ExtensionStrategy s);

// Adds classes that share an already-present feature kind. Both strategies
// retrain the initial node owning that kind (labels unchanged); retrain-final
// replaces the route's node with one trained on old+new classes, add-new-node
// trains a sibling on the new classes only and activates both at test time.
// A baseline, when present, is retrained over the enlarged class set.
BuildResult extendTree(const FalconTree& tree, const Dataset& ds,
                       const std::vector<std::string>& newClasses, FeatureKind kind,
                       ExtensionStrategy strategy, const TreeBuildConfig& cfg);

struct ExtensionPlan {
  double opsRetrain = 0.0;     // per-input OPS on the affected path
  double opsAddNewNode = 0.0;
  ExtensionStrategy recommendation = ExtensionStrategy::RetrainFinal;
};

// Closed-form estimate from countMac with cfg's width rule; no training.
ExtensionPlan planExtension(const FalconTree& tree, int newClassCount, FeatureKind kind,
                            const TreeBuildConfig& cfg);

struct EvalReport {
  double accuracy = 0.0;
  double avgOpsPerInput = 0.0;
  std::map<std::string, double> nodeActivationRate;  // final nodes
  double baselineRate = 0.0;
  double notFoundRate = 0.0;
  std::size_t instances = 0;
  std::vector<InferenceTrace> traces;
};

EvalReport evaluate(const FalconTree& tree, const Dataset& ds, Split split);

struct DeltaSweepRow {
  double delta = 0.0;
  double accuracy = 0.0;
  double avgOps = 0.0;
  double baselineRate = 0.0;
};

// One evaluation per delta over a single pass of cached per-instance
// confidences. Requires a baseline node.
std::vector<DeltaSweepRow> sweepDelta(const FalconTree& tree, const Dataset& ds, Split split,
                                      const std::vector<double>& deltas);

// tree.json manifest plus one FALCMLP1 file per node.
void writeTree(const FalconTree& tree, const std::string& dir);
FalconTree openTree(const std::string& manifestPath);

}  // namespace falcon
