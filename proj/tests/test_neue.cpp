#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "errors.hpp"
#include "neue.hpp"
#include "rng.hpp"

using namespace falcon;

namespace {

MlpModel pwlModel(const std::vector<int>& sizes, std::uint64_t seed) {
  return withPwlActivation(initMlp(Topology{sizes}, seed), defaultPwlTable());
}

std::vector<double> randomInput(std::size_t n, Rng& rng, double zeroFraction = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(0.05, 1.0);
  std::size_t zeros = static_cast<std::size_t>(zeroFraction * static_cast<double>(n));
  for (std::size_t i = 0; i < zeros; ++i) v[i] = 0.0;
  // Spread the zeros around.
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return v;
}

double energyOf(const EventCounters& c, const CostTable& t) {
  return static_cast<double>(c.mac) * t.mac + static_cast<double>(c.auEval) * t.auEval +
         static_cast<double>(c.fifoAccess) * t.fifoAccess +
         static_cast<double>(c.tbufAccess) * t.tbufAccess +
         static_cast<double>(c.featureMacEquivalents) * t.mac +
         static_cast<double>(c.sramRead) * t.sramRead +
         static_cast<double>(c.sramWrite) * t.sramWrite;
}

FeatureKind colorKind(ColorBin bin) {
  return {FeatureKind::Family::Color, static_cast<int>(bin)};
}

struct TreeFixture {
  Dataset ds;
  FalconTree tree;      // with baseline, pwl activation
  FalconTree treeExact; // same weights, exact sigmoid
};

const TreeFixture& treeFixture() {
  static TreeFixture f = [] {
    TreeFixture fx;
    SyntheticSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.perClassCount = 24;
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
    fx.ds = genSynthetic(spec);
    Grouping g;
    g.groups = {{colorKind(ColorBin::Red), {"red-disk", "red-bar"}},
                {colorKind(ColorBin::Yellow), {"yellow-disk", "yellow-bar"}}};
    TreeBuildConfig cfg;
    cfg.initialTrain.epochs = 40;
    cfg.finalTrain.epochs = 60;
    cfg.baselineTrain.epochs = 40;
    BaselineResult base = trainBaseline(fx.ds, cfg);
    fx.treeExact = buildTree(fx.ds, g, cfg, base.model).tree;
    fx.tree = withPwlActivation(fx.treeExact, defaultPwlTable());
    return fx;
  }();
  return f;
}

}  // namespace

TEST_CASE("schedule: chunking, grouping, evictions") {
  NeueConfig cfg;
  MlpModel small = pwlModel({16, 16}, 1);
  Schedule s1 = mapNetwork(small, cfg);
  REQUIRE(s1.layers.size() == 1);
  CHECK(s1.layers[0].chunks == 1);
  CHECK(s1.layers[0].groups == 1);
  CHECK(s1.layers[0].evictions == 0);
  CHECK(s1.layers[0].tbufWritebacks == 0);

  // 32 inputs / 32 neurons with a 16-entry T-Buffer spills.
  NeueConfig tight = cfg;
  tight.tBufferCapacity = 16;
  MlpModel wide = pwlModel({32, 32}, 2);
  Schedule s2 = mapNetwork(wide, tight);
  CHECK(s2.layers[0].chunks == 2);
  CHECK(s2.layers[0].evictions > 0);
  CHECK(s2.layers[0].evictions == 16);      // (32 - 16) per boundary, 1 boundary
  CHECK(s2.layers[0].tbufWritebacks == 16);

  // Deterministic for fixed model + config.
  Schedule s3 = mapNetwork(wide, tight);
  CHECK(s2.totalCycles == s3.totalCycles);
  CHECK(s2.layers[0].cycles == s3.layers[0].cycles);
}

TEST_CASE("schedule: partial-sum conservation across random shapes") {
  Rng rng(9);
  NeueConfig cfg;
  for (int trial = 0; trial < 40; ++trial) {
    cfg.inputFifoDepth = 1 + static_cast<int>(rng.below(24));
    cfg.numNUs = 1 + static_cast<int>(rng.below(24));
    cfg.tBufferCapacity = 1 + static_cast<int>(rng.below(40));
    int in = 1 + static_cast<int>(rng.below(64));
    int out = 1 + static_cast<int>(rng.below(64));
    MlpModel m = pwlModel({in, out}, rng.next());
    Schedule s = mapNetwork(m, cfg);
    const LayerSchedule& layer = s.layers[0];
    // Every partial sum crossing a chunk boundary is either T-Buffer
    // resident or spilled to SRAM.
    CHECK(layer.tbufWritebacks + layer.evictions ==
          static_cast<std::uint64_t>(layer.chunks - 1) * static_cast<std::uint64_t>(out));
  }
}

TEST_CASE("simulate: rejects exact-sigmoid models and bad inputs") {
  NeueConfig cfg;
  MlpModel exact = initMlp(Topology{{4, 2}}, 3);
  CHECK_THROWS_AS(simulateInference(cfg, exact, {0.1, 0.2, 0.3, 0.4}), ArgumentError);
  MlpModel pwl = pwlModel({4, 2}, 3);
  CHECK_THROWS_AS(simulateInference(cfg, pwl, {0.1}), StructuralError);
}

TEST_CASE("simulate: outputs bit-equal the reference forward pass") {
  Rng rng(100);
  NeueConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes;
    int layers = 2 + static_cast<int>(rng.below(3));  // up to 4 layers
    for (int l = 0; l < layers; ++l) sizes.push_back(1 + static_cast<int>(rng.below(64)));
    MlpModel m = pwlModel(sizes, rng.next());
    std::vector<double> input = randomInput(static_cast<std::size_t>(sizes[0]), rng,
                                            trial % 3 == 0 ? 0.3 : 0.0);
    SimResult sim = simulateInference(cfg, m, input);
    std::vector<double> ref = forward(m, input);
    REQUIRE(sim.outputs.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::memcmp(&sim.outputs[i], &ref[i], sizeof(double)) == 0);
    }
  }
}

TEST_CASE("gating: all-zero input shuts the first layer off") {
  NeueConfig cfg;
  MlpModel m = pwlModel({16, 8, 4}, 5);
  std::vector<double> zeros(16, 0.0);
  SimResult r = simulateInference(cfg, m, zeros);
  CHECK(r.layers[0].macs == 0);
  CHECK(r.layers[0].weightReads == 0);
  CHECK(r.layers[0].gatedWeightFetches == 16 * 8);
  CHECK(r.layers[0].gatedMacs == 16 * 8);
  // Hidden activations are nonzero, so the next layer runs fully.
  CHECK(r.layers[1].macs == 8 * 4);
}

TEST_CASE("gating: planted zero fractions count exactly") {
  NeueConfig cfg;
  Rng rng(7);
  MlpModel m = pwlModel({32, 12}, 6);
  for (double z : {0.0, 0.25, 0.5, 1.0}) {
    std::vector<double> input = randomInput(32, rng, z);
    SimResult r = simulateInference(cfg, m, input);
    std::uint64_t zeros = static_cast<std::uint64_t>(z * 32.0);
    CHECK(r.layers[0].weightReads == (32 - zeros) * 12);
    CHECK(r.layers[0].gatedMacs == zeros * 12);
    CHECK(r.layers[0].gatedWeightFetches == zeros * 12);
    CHECK(r.layers[0].macs + r.layers[0].gatedMacs == 32 * 12);
  }
}

TEST_CASE("energy: additivity and cost scaling") {
  NeueConfig cfg;
  Rng rng(11);
  MlpModel m = pwlModel({24, 10, 3}, 8);
  std::vector<double> input = randomInput(24, rng, 0.25);
  SimResult r = simulateInference(cfg, m, input);
  CHECK(r.totalEnergy() == doctest::Approx(energyOf(r.counters, cfg.costs)).epsilon(1e-12));

  NeueConfig doubled = cfg;
  doubled.costs.mac *= 2;
  doubled.costs.auEval *= 2;
  doubled.costs.fifoAccess *= 2;
  doubled.costs.tbufAccess *= 2;
  doubled.costs.sramRead *= 2;
  doubled.costs.sramWrite *= 2;
  SimResult r2 = simulateInference(doubled, m, input);
  CHECK(r2.totalEnergy() == doctest::Approx(2.0 * r.totalEnergy()));
  CHECK(r2.execShare() == doctest::Approx(r.execShare()));
}

TEST_CASE("tree sim: activation list matches classify, energy only on the path") {
  const TreeFixture& fx = treeFixture();
  NeueConfig cfg;
  for (std::size_t idx : fx.ds.indicesOf(Split::Test)) {
    const ImageRGB& image = fx.ds.items[idx].image;
    SimResult sim = simulateTree(cfg, fx.tree, image);
    ClassifyResult ref = classify(fx.tree, image);
    CHECK(sim.activatedNodeIds == ref.trace.activatedNodeIds);
    CHECK(sim.label == ref.label);
    CHECK(sim.counters.featureMacEquivalents == ref.trace.featureOps);
    CHECK(sim.counters.mac + sim.counters.gatedMacs == ref.trace.totalMacs);

    // Selective activation: replaying only the activated nodes reproduces
    // the event totals exactly.
    EventCounters replay;
    std::vector<double> raw;
    for (std::uint8_t p : image.pixels) raw.push_back(p / 255.0);
    for (const std::string& id : sim.activatedNodeIds) {
      const FalconNode* node = fx.tree.findNode(id);
      std::vector<double> in;
      if (node->inputKind == FalconNode::InputKind::RawPixels) {
        in = raw;
      } else {
        in = extractFeature(image, node->featureKind, fx.tree.grid, fx.tree.bank).values;
      }
      replay += simulateInference(cfg, node->model, in).counters;
    }
    CHECK(replay.mac == sim.counters.mac);
    CHECK(replay.sramRead == sim.counters.sramRead);
    CHECK(replay.sramWrite == sim.counters.sramWrite);
    CHECK(replay.fifoAccess == sim.counters.fifoAccess);
  }
}

TEST_CASE("tree sim: large delta leaves only initial + baseline energy") {
  const TreeFixture& fx = treeFixture();
  FalconTree diverted = fx.tree;
  diverted.delta = 1.01;
  NeueConfig cfg;
  const ImageRGB& image = fx.ds.items[0].image;
  SimResult sim = simulateTree(cfg, diverted, image);
  REQUIRE(sim.activatedNodeIds.size() == 2);
  CHECK(sim.activatedNodeIds[1] == "baseline");
  CHECK(sim.counters.featureMacEquivalents == 0);
}

TEST_CASE("tree sim: exact-sigmoid trees run through the default AU table") {
  const TreeFixture& fx = treeFixture();
  NeueConfig cfg;
  const ImageRGB& image = fx.ds.items[3].image;
  SimResult a = simulateTree(cfg, fx.treeExact, image);
  SimResult b = simulateTree(cfg, fx.tree, image);
  CHECK(a.outputs == b.outputs);
  CHECK(a.counters.mac == b.counters.mac);
}

TEST_CASE("calibration: hits the target share, scale invariant, errors") {
  NeueConfig cfg;
  MlpModel rep = pwlModel({64, 24, 8}, 77);
  NeueConfig calibrated = calibrateCostTable(cfg, rep, 0.7892, 0.05);
  std::vector<double> input(64, 0.5);
  SimResult check = simulateInference(calibrated, rep, input);
  CHECK(std::abs(check.execShare() - 0.7892) < 0.05);

  // Doubling every cost leaves the share unchanged.
  NeueConfig doubled = calibrated;
  doubled.costs.mac *= 2;
  doubled.costs.auEval *= 2;
  doubled.costs.fifoAccess *= 2;
  doubled.costs.tbufAccess *= 2;
  doubled.costs.sramRead *= 2;
  doubled.costs.sramWrite *= 2;
  SimResult scaled = simulateInference(doubled, rep, input);
  CHECK(scaled.execShare() == doctest::Approx(check.execShare()));

  CHECK_THROWS_AS(calibrateCostTable(cfg, rep, 1.0, 0.05), CalibrationError);
  NeueConfig zeroExec = cfg;
  zeroExec.costs.mac = 0.0;
  zeroExec.costs.auEval = 0.0;
  zeroExec.costs.fifoAccess = 0.0;
  zeroExec.costs.tbufAccess = 0.0;
  CHECK_THROWS_AS(calibrateCostTable(zeroExec, rep, 0.7892, 0.05), CalibrationError);
}

TEST_CASE("sweep energy: non-decreasing in delta on the fixture") {
  const TreeFixture& fx = treeFixture();
  NeueConfig cfg;
  std::vector<double> deltas = {0.0, 0.25, 0.5, 0.75, 1.01};
  std::vector<double> energies = sweepEnergy(cfg, fx.tree, fx.ds, Split::Test, deltas);
  REQUIRE(energies.size() == deltas.size());
  for (std::size_t i = 1; i < energies.size(); ++i) CHECK(energies[i] >= energies[i - 1]);
}

TEST_CASE("trace dump: line format cycle,event,node,detail") {
  namespace fs = std::filesystem;
  NeueConfig cfg;
  MlpModel m = pwlModel({8, 4}, 2);
  fs::path path = fs::temp_directory_path() / "falcon_trace_test.log";
  {
    FileTraceSink sink(path.string());
    simulateInference(cfg, m, std::vector<double>(8, 0.5), &sink, "node-x");
  }
  std::ifstream is(path);
  std::string line;
  REQUIRE(std::getline(is, line));
  // <cycle>,<event>,<nodeId>,<detail>
  CHECK(std::count(line.begin(), line.end(), ',') >= 3);
  CHECK(line.find("node-x") != std::string::npos);
  fs::remove(path);
}
