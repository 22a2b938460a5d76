#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "errors.hpp"
#include "metrics.hpp"
#include "tree.hpp"

using namespace falcon;

namespace {

FeatureKind colorKind(ColorBin bin) {
  return {FeatureKind::Family::Color, static_cast<int>(bin)};
}

SyntheticClassSpec colorClass(const std::string& name, ColorBin bin,
                              SyntheticClassSpec::Shape shape) {
  return {name, SyntheticClassSpec::Type::Color, bin, 0, shape, 0.0};
}

// Small images keep the raw-input nodes cheap in unit tests.
Dataset fourClassSet(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.width = 16;
  spec.height = 16;
  spec.perClassCount = 30;
  spec.seed = seed;
  spec.classes = {
      colorClass("red-disk", ColorBin::Red, SyntheticClassSpec::Shape::Disk),
      colorClass("red-bar", ColorBin::Red, SyntheticClassSpec::Shape::Bar),
      colorClass("yellow-disk", ColorBin::Yellow, SyntheticClassSpec::Shape::Disk),
      colorClass("yellow-bar", ColorBin::Yellow, SyntheticClassSpec::Shape::Bar),
  };
  return genSynthetic(spec);
}

Grouping redYellowGrouping() {
  Grouping g;
  g.groups = {{colorKind(ColorBin::Red), {"red-disk", "red-bar"}},
              {colorKind(ColorBin::Yellow), {"yellow-disk", "yellow-bar"}}};
  return g;
}

TreeBuildConfig testConfig() {
  TreeBuildConfig cfg;
  cfg.initialTrain.epochs = 60;
  cfg.finalTrain.epochs = 80;
  cfg.baselineTrain.epochs = 60;
  return cfg;
}

struct Fixture {
  Dataset ds;
  BuildResult noBaseline;
  BuildResult withBaseline;
  MlpModel baselineModel;
  std::uint64_t baselineMacs = 0;
};

const Fixture& fixture() {
  static Fixture f = [] {
    Fixture fx;
    fx.ds = fourClassSet();
    TreeBuildConfig cfg = testConfig();
    fx.noBaseline = buildTree(fx.ds, redYellowGrouping(), cfg, std::nullopt);
    BaselineResult base = trainBaseline(fx.ds, cfg);
    fx.baselineModel = base.model;
    fx.baselineMacs = base.stats.weightUpdateMacs;
    fx.withBaseline = buildTree(fx.ds, redYellowGrouping(), cfg, base.model);
    return fx;
  }();
  return f;
}

ImageRGB solidRed(int w, int h) {
  ImageRGB img;
  img.width = w;
  img.height = h;
  img.pixels.resize(3 * static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) img.pixels[i] = 255;
  return img;
}

}  // namespace

TEST_CASE("build: four-class grouping gives the 1+2 node shape") {
  const FalconTree& tree = fixture().noBaseline.tree;
  REQUIRE(tree.initialNodes.size() == 1);
  CHECK(tree.initialNodes[0].model.outputWidth() == 2);
  CHECK(tree.initialNodes[0].outputLabels ==
        std::vector<std::string>{"color:red", "color:yellow"});
  REQUIRE(tree.finalNodes.size() == 2);
  for (const FalconNode& n : tree.finalNodes) CHECK(n.model.outputWidth() == 2);
  CHECK(!tree.baseline.has_value());
  CHECK(tree.routes.size() == 2);
  // Final nodes consume the pooled feature, not raw pixels.
  CHECK(tree.finalNodes[0].model.inputWidth() == 64);
}

TEST_CASE("build: determinism across runs") {
  const Fixture& fx = fixture();
  BuildResult again = buildTree(fx.ds, redYellowGrouping(), testConfig(), std::nullopt);
  CHECK(again.tree.initialNodes[0].model.weights ==
        fx.noBaseline.tree.initialNodes[0].model.weights);
  CHECK(again.tree.finalNodes[0].model.weights ==
        fx.noBaseline.tree.finalNodes[0].model.weights);
}

TEST_CASE("build: fallback classes demand a baseline") {
  const Fixture& fx = fixture();
  Grouping g = redYellowGrouping();
  g.groups[1].classes = {"yellow-disk"};
  g.fallbackClasses = {"yellow-bar"};
  CHECK_THROWS_AS(buildTree(fx.ds, g, testConfig(), std::nullopt), ArgumentError);
  // With a baseline the same grouping is buildable.
  BuildResult ok = buildTree(fx.ds, g, testConfig(), fx.baselineModel);
  CHECK(ok.tree.baseline.has_value());
}

TEST_CASE("build: empty grouping rejected, single-class group warned") {
  const Fixture& fx = fixture();
  CHECK_THROWS_AS(buildTree(fx.ds, Grouping{}, testConfig(), std::nullopt), ArgumentError);
  Grouping g;
  g.groups = {{colorKind(ColorBin::Red), {"red-disk", "red-bar"}},
              {colorKind(ColorBin::Yellow), {"yellow-disk"}}};
  g.fallbackClasses = {"yellow-bar"};
  BuildResult r = buildTree(fx.ds, g, testConfig(), fx.baselineModel);
  REQUIRE(!r.record.warnings.empty());
  CHECK(r.record.warnings[0].find("single class") != std::string::npos);
}

TEST_CASE("classify: saturated red input activates exactly initial + red final") {
  const FalconTree& tree = fixture().noBaseline.tree;
  ClassifyResult r = classify(tree, solidRed(16, 16));
  REQUIRE(r.trace.activatedNodeIds.size() == 2);
  CHECK(r.trace.activatedNodeIds[0] == "initial-0");
  CHECK(r.trace.activatedNodeIds[1] == "final-color-red");
  CHECK(r.trace.totalMacs == countMac(tree.initialNodes[0].model.topology) +
                                 countMac(tree.finalNodes[0].model.topology));
  CHECK(r.trace.featureOps ==
        featureExtractionOps(colorKind(ColorBin::Red), 16, 16, tree.grid, tree.bank,
                             tree.featureCost));
  CHECK(r.trace.routedVia.kind == RoutedVia::Kind::Final);
}

TEST_CASE("classify: delta=0 never activates the baseline") {
  FalconTree tree = fixture().withBaseline.tree;
  tree.delta = 0.0;
  EvalReport report = evaluate(tree, fixture().ds, Split::Test);
  CHECK(report.baselineRate == 0.0);
  CHECK(report.notFoundRate == 0.0);
}

TEST_CASE("classify: delta=1.01 routes everything to the baseline") {
  const Fixture& fx = fixture();
  FalconTree tree = fx.withBaseline.tree;
  tree.delta = 1.01;
  for (std::size_t idx : fx.ds.indicesOf(Split::Test)) {
    ClassifyResult r = classify(tree, fx.ds.items[idx].image);
    CHECK(r.trace.routedVia.kind == RoutedVia::Kind::Baseline);
    // The label equals the baseline's own argmax prediction.
    std::vector<double> raw;
    for (std::uint8_t p : fx.ds.items[idx].image.pixels) raw.push_back(p / 255.0);
    std::vector<double> out = forward(fx.baselineModel, raw);
    std::size_t arg = static_cast<std::size_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
    CHECK(*r.label == tree.baseline->outputLabels[arg]);
    CHECK(r.trace.featureOps == 0);
  }
}

TEST_CASE("classify: strict NOT FOUND terminates at the initial node") {
  FalconTree tree = fixture().noBaseline.tree;
  tree.strictNotFound = true;
  tree.delta = 1.01;  // every input diverges
  ClassifyResult r = classify(tree, solidRed(16, 16));
  CHECK(!r.label.has_value());
  CHECK(r.trace.routedVia.kind == RoutedVia::Kind::NotFound);
  CHECK(r.trace.activatedNodeIds == std::vector<std::string>{"initial-0"});
  CHECK(r.trace.featureOps == 0);
}

TEST_CASE("classify: exclusive routing property over the test split") {
  const Fixture& fx = fixture();
  const FalconTree& tree = fx.withBaseline.tree;  // delta 0
  for (std::size_t idx : fx.ds.indicesOf(Split::Test)) {
    ClassifyResult r = classify(tree, fx.ds.items[idx].image);
    // Initial nodes plus exactly one resolved stage.
    CHECK(r.trace.activatedNodeIds.size() == tree.initialNodes.size() + 1);
    std::uint64_t sum = 0;
    for (const auto& [id, macs] : r.trace.nodeMacs) sum += macs;
    CHECK(sum == r.trace.totalMacs);
    // Replay recount: each per-node figure equals the node's own countMac.
    for (const auto& [id, macs] : r.trace.nodeMacs)
      CHECK(macs == countMac(tree.findNode(id)->model.topology));
  }
}

TEST_CASE("evaluate: accuracy, rates and ops add up") {
  const Fixture& fx = fixture();
  EvalReport report = evaluate(fx.noBaseline.tree, fx.ds, Split::Test);
  CHECK(report.accuracy > 0.9);
  double rateSum = report.baselineRate + report.notFoundRate;
  for (const auto& [id, rate] : report.nodeActivationRate) rateSum += rate;
  CHECK(rateSum == doctest::Approx(1.0));
  double mean = 0.0;
  for (const InferenceTrace& t : report.traces)
    mean += static_cast<double>(t.totalMacs + t.featureOps);
  mean /= static_cast<double>(report.traces.size());
  CHECK(report.avgOpsPerInput == doctest::Approx(mean));
  CHECK_THROWS_AS(evaluate(fx.noBaseline.tree, Dataset{fx.ds.classNames, {}}, Split::Test),
                  ArgumentError);
}

TEST_CASE("sweep: rate identities and baseline accuracy at the top") {
  const Fixture& fx = fixture();
  std::vector<double> deltas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.01};
  std::vector<DeltaSweepRow> rows = sweepDelta(fx.withBaseline.tree, fx.ds, Split::Test, deltas);
  REQUIRE(rows.size() == deltas.size());
  CHECK(rows[0].baselineRate == 0.0);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].baselineRate >= rows[i - 1].baselineRate);
  CHECK(rows.back().baselineRate == 1.0);

  // delta just above 1 equals the standalone baseline exactly.
  std::vector<std::size_t> test = fx.ds.indicesOf(Split::Test);
  std::size_t correct = 0;
  for (std::size_t idx : test) {
    std::vector<double> raw;
    for (std::uint8_t p : fx.ds.items[idx].image.pixels) raw.push_back(p / 255.0);
    std::vector<double> out = forward(fx.baselineModel, raw);
    int arg = static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
    if (arg == fx.ds.items[idx].classId) ++correct;
  }
  double baselineAccuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  CHECK(rows.back().accuracy == baselineAccuracy);

  // delta = 0 equals the divergence-free tree.
  EvalReport noDiv = evaluate(fx.noBaseline.tree, fx.ds, Split::Test);
  CHECK(rows[0].accuracy == doctest::Approx(noDiv.accuracy));

  CHECK_THROWS_AS(sweepDelta(fx.noBaseline.tree, fx.ds, Split::Test, deltas), ArgumentError);
}

TEST_CASE("merge: node reuse is byte exact and label preserving") {
  const Fixture& fx = fixture();
  Dataset other = [] {
    SyntheticSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.perClassCount = 30;
    spec.seed = 5;
    spec.classes = {
        colorClass("green-disk", ColorBin::Green, SyntheticClassSpec::Shape::Disk),
        colorClass("green-bar", ColorBin::Green, SyntheticClassSpec::Shape::Bar),
        colorClass("blue-disk", ColorBin::Blue, SyntheticClassSpec::Shape::Disk),
        colorClass("blue-bar", ColorBin::Blue, SyntheticClassSpec::Shape::Bar),
    };
    return genSynthetic(spec);
  }();
  Grouping g;
  g.groups = {{colorKind(ColorBin::Green), {"green-disk", "green-bar"}},
              {colorKind(ColorBin::Blue), {"blue-disk", "blue-bar"}}};
  BuildResult second = buildTree(other, g, testConfig(), std::nullopt);

  std::vector<const FalconTree*> trees = {&fx.noBaseline.tree, &second.tree};
  BuildResult merged = mergeTrees(trees, MergeConfig{}, std::nullopt);
  REQUIRE(merged.tree.initialNodes.size() == 2);
  REQUIRE(merged.tree.finalNodes.size() == 4);
  CHECK(merged.tree.classNames().size() == 8);

  // Weights byte-equal the originals.
  CHECK(merged.tree.finalNodes[0].model.weights ==
        fx.noBaseline.tree.finalNodes[0].model.weights);
  CHECK(merged.tree.finalNodes[2].model.weights == second.tree.finalNodes[0].model.weights);
  for (const NodeBuildRecord& n : merged.record.nodes) {
    CHECK(n.reused);
    CHECK(n.weightUpdateMacs == 0);
  }

  // Inputs routed into a reused final node get that node's own prediction
  // for the same feature vector.
  for (std::size_t idx : fx.ds.indicesOf(Split::Test)) {
    ClassifyResult r = classify(merged.tree, fx.ds.items[idx].image);
    if (r.trace.routedVia.kind != RoutedVia::Kind::Final) continue;
    const FalconNode* node = merged.tree.findNode(r.trace.activatedNodeIds.back());
    FeatureVector fv = extractFeature(fx.ds.items[idx].image, node->featureKind,
                                      merged.tree.grid, merged.tree.bank);
    std::vector<double> out = forward(node->model, fv.values);
    std::size_t arg = static_cast<std::size_t>(
        std::max_element(out.begin(), out.end()) - out.begin());
    CHECK(*r.label == node->outputLabels[arg]);
  }

  // Overlapping class names refuse to merge.
  std::vector<const FalconTree*> overlap = {&fx.noBaseline.tree, &fx.noBaseline.tree};
  CHECK_THROWS_AS(mergeTrees(overlap, MergeConfig{}, std::nullopt), ArgumentError);

  // A fresh combined baseline joins the merged tree, and the divergence test
  // works across the outputs of both initial nodes.
  Dataset combined;
  combined.classNames = fx.ds.classNames;
  combined.classNames.insert(combined.classNames.end(), other.classNames.begin(),
                             other.classNames.end());
  for (const DatasetItem& item : fx.ds.items) combined.items.push_back(item);
  for (const DatasetItem& item : other.items) {
    DatasetItem copy = item;
    copy.classId += fx.ds.classCount();
    combined.items.push_back(copy);
  }
  BaselineResult combinedBase = trainBaseline(combined, testConfig());
  BaselineSpec spec{combinedBase.model, combined.classNames};
  BuildResult withBase = mergeTrees(trees, MergeConfig{1.01, false}, spec);
  REQUIRE(withBase.tree.baseline.has_value());
  ClassifyResult diverted = classify(withBase.tree, fx.ds.items[0].image);
  CHECK(diverted.trace.routedVia.kind == RoutedVia::Kind::Baseline);
  // Both initial nodes still run before the fallback.
  CHECK(diverted.trace.activatedNodeIds.size() == 3);

  // Mismatched baseline labels are rejected.
  BaselineSpec wrong{combinedBase.model, fx.ds.classNames};
  CHECK_THROWS_AS(mergeTrees(trees, MergeConfig{}, wrong), ArgumentError);
}

TEST_CASE("extend: retrain-final grows the node, add-new-node keeps it") {
  const Fixture& fx = fixture();
  Dataset ds6 = [] {
    SyntheticSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.perClassCount = 30;
    spec.seed = 1;
    spec.classes = {
        colorClass("red-disk", ColorBin::Red, SyntheticClassSpec::Shape::Disk),
        colorClass("red-bar", ColorBin::Red, SyntheticClassSpec::Shape::Bar),
        colorClass("yellow-disk", ColorBin::Yellow, SyntheticClassSpec::Shape::Disk),
        colorClass("yellow-bar", ColorBin::Yellow, SyntheticClassSpec::Shape::Bar),
        colorClass("red-disk-2", ColorBin::Red, SyntheticClassSpec::Shape::Disk),
        colorClass("red-bar-2", ColorBin::Red, SyntheticClassSpec::Shape::Bar),
    };
    return genSynthetic(spec);
  }();
  std::vector<std::string> newClasses = {"red-disk-2", "red-bar-2"};

  BuildResult retrain = extendTree(fx.noBaseline.tree, ds6, newClasses,
                                   colorKind(ColorBin::Red), ExtensionStrategy::RetrainFinal,
                                   testConfig());
  const auto& retrainTargets = retrain.tree.routes.at({"initial-0", 0});
  REQUIRE(retrainTargets.size() == 1);
  CHECK(retrain.tree.findNode(retrainTargets[0])->model.outputWidth() == 4);

  BuildResult added = extendTree(fx.noBaseline.tree, ds6, newClasses,
                                 colorKind(ColorBin::Red), ExtensionStrategy::AddNewNode,
                                 testConfig());
  const auto& addedTargets = added.tree.routes.at({"initial-0", 0});
  REQUIRE(addedTargets.size() == 2);
  const FalconNode* oldNode = added.tree.findNode(addedTargets[0]);
  CHECK(oldNode->model.weights == fx.noBaseline.tree.finalNodes[0].model.weights);
  CHECK(added.tree.findNode(addedTargets[1])->model.outputWidth() == 2);

  // OPS on the extended path = initial + old node + new node.
  ClassifyResult r = classify(added.tree, solidRed(16, 16));
  if (r.trace.routedVia.kind == RoutedVia::Kind::Final &&
      r.trace.routedVia.outputIndex == 0) {
    CHECK(r.trace.totalMacs ==
          countMac(added.tree.initialNodes[0].model.topology) +
              countMac(oldNode->model.topology) +
              countMac(added.tree.findNode(addedTargets[1])->model.topology));
  }

  CHECK_THROWS_AS(extendTree(fx.noBaseline.tree, ds6, {}, colorKind(ColorBin::Red),
                             ExtensionStrategy::AddNewNode, testConfig()),
                  ArgumentError);
  CHECK_THROWS_AS(extendTree(fx.noBaseline.tree, ds6, newClasses, colorKind(ColorBin::Cyan),
                             ExtensionStrategy::AddNewNode, testConfig()),
                  ArgumentError);

  // Multi-target routes survive the manifest round trip.
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "falcon_extended_roundtrip";
  fs::remove_all(dir);
  writeTree(added.tree, dir.string());
  FalconTree back = openTree(dir.string());
  CHECK(back.routes.at({"initial-0", 0}).size() == 2);
  for (std::size_t idx : ds6.indicesOf(Split::Test)) {
    ClassifyResult a = classify(added.tree, ds6.items[idx].image);
    ClassifyResult b = classify(back, ds6.items[idx].image);
    CHECK(a.label == b.label);
  }
  fs::remove_all(dir);
}

TEST_CASE("plan: closed forms, zero-class identity, crossover in 1..6") {
  const Fixture& fx = fixture();
  const FalconTree& tree = fx.noBaseline.tree;
  TreeBuildConfig cfg = testConfig();

  ExtensionPlan zero = planExtension(tree, 0, colorKind(ColorBin::Red), cfg);
  std::uint64_t current = countMac(tree.initialNodes[0].model.topology) +
                          featureExtractionOps(colorKind(ColorBin::Red), 16, 16, tree.grid,
                                               tree.bank, tree.featureCost) +
                          countMac(tree.finalNodes[0].model.topology);
  CHECK(zero.opsRetrain == doctest::Approx(static_cast<double>(current)));

  bool sawRetrain = false, sawAddNew = false;
  double prevRetrain = 0.0;
  for (int n = 1; n <= 6; ++n) {
    ExtensionPlan plan = planExtension(tree, n, colorKind(ColorBin::Red), cfg);
    if (plan.recommendation == ExtensionStrategy::RetrainFinal) sawRetrain = true;
    if (plan.recommendation == ExtensionStrategy::AddNewNode) sawAddNew = true;
    CHECK(plan.opsRetrain > prevRetrain);  // superlinear growth in class count
    prevRetrain = plan.opsRetrain;
    // Determinism.
    ExtensionPlan again = planExtension(tree, n, colorKind(ColorBin::Red), cfg);
    CHECK(again.opsRetrain == plan.opsRetrain);
    CHECK(again.opsAddNewNode == plan.opsAddNewNode);
  }
  CHECK(sawRetrain);
  CHECK(sawAddNew);
}

TEST_CASE("tree io: manifest + models round trip") {
  namespace fs = std::filesystem;
  const Fixture& fx = fixture();
  fs::path dir = fs::temp_directory_path() / "falcon_tree_roundtrip";
  fs::remove_all(dir);
  writeTree(fx.withBaseline.tree, dir.string());
  FalconTree back = openTree(dir.string());
  CHECK(back.initialNodes[0].model.weights ==
        fx.withBaseline.tree.initialNodes[0].model.weights);
  CHECK(back.finalNodes.size() == 2);
  REQUIRE(back.baseline.has_value());
  CHECK(back.baseline->model.weights == fx.withBaseline.tree.baseline->model.weights);
  CHECK(back.delta == fx.withBaseline.tree.delta);
  for (std::size_t idx : fx.ds.indicesOf(Split::Test)) {
    ClassifyResult a = classify(fx.withBaseline.tree, fx.ds.items[idx].image);
    ClassifyResult b = classify(back, fx.ds.items[idx].image);
    CHECK(a.label == b.label);
    CHECK(a.trace.totalMacs == b.trace.totalMacs);
  }
  fs::remove_all(dir);
}
