#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "errors.hpp"
#include "select.hpp"

using namespace falcon;

namespace {

FeatureKind colorKind(ColorBin bin) {
  return {FeatureKind::Family::Color, static_cast<int>(bin)};
}

// Red confidences for the strawberry-like and stop-sign-like classes clear
// the threshold, the other two do not.
ConfidenceTable workedExample() {
  ConfidenceTable table;
  table.classes = {"strawberry", "stop-sign", "tennis", "sunflower"};
  table.kinds = {colorKind(ColorBin::Red), colorKind(ColorBin::Yellow)};
  table.values = {
      {0.9, 0.1},
      {0.8, 0.2},
      {0.3, 0.75},
      {0.2, 0.85},
  };
  return table;
}

// Four single-color classes: with several classes around, a bin's absence
// no longer separates anything, so each class's own bin probe must win.
Dataset smallColorDataset(int perClass = 24) {
  SyntheticSpec spec = defaultSyntheticSpec();
  spec.perClassCount = perClass;
  spec.classes = {
      {"red-disk", SyntheticClassSpec::Type::Color, ColorBin::Red, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"blue-disk", SyntheticClassSpec::Type::Color, ColorBin::Blue, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"green-disk", SyntheticClassSpec::Type::Color, ColorBin::Green, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"yellow-disk", SyntheticClassSpec::Type::Color, ColorBin::Yellow, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
  };
  return genSynthetic(spec);
}

FeatureSelectConfig colorOnlyConfig() {
  FeatureSelectConfig cfg;
  for (int b = 0; b < kColorBinCount; ++b) cfg.kinds.push_back(colorKind(static_cast<ColorBin>(b)));
  return cfg;
}

}  // namespace

TEST_CASE("worked example: the two high-confidence classes group under red") {
  FeatureAssignment a = assignFromConfidences(workedExample(), 0.7);
  CHECK(a.entries[0].kind == colorKind(ColorBin::Red));
  CHECK(a.entries[1].kind == colorKind(ColorBin::Red));
  CHECK(a.entries[2].kind == colorKind(ColorBin::Yellow));
  CHECK(a.entries[3].kind == colorKind(ColorBin::Yellow));

  Grouping g = groupClasses(a);
  REQUIRE(g.groups.size() == 2);
  CHECK(g.groups[0].kind == colorKind(ColorBin::Red));
  CHECK(g.groups[0].classes == std::vector<std::string>{"strawberry", "stop-sign"});
  CHECK(g.groups[1].classes == std::vector<std::string>{"tennis", "sunflower"});
  CHECK(g.fallbackClasses.empty());
}

TEST_CASE("assignment: threshold behaviour") {
  ConfidenceTable table = workedExample();
  FeatureAssignment none = assignFromConfidences(table, 0.95);
  for (const auto& e : none.entries) CHECK(!e.kind.has_value());

  FeatureAssignment all = assignFromConfidences(table, 0.0);
  for (const auto& e : all.entries) CHECK(e.kind.has_value());
  CHECK(groupClasses(all).fallbackClasses.empty());

  // Raising delta never assigns a previously unassigned class.
  for (double lo = 0.0; lo <= 1.0; lo += 0.1) {
    FeatureAssignment a = assignFromConfidences(table, lo);
    FeatureAssignment b = assignFromConfidences(table, std::min(1.0, lo + 0.1));
    for (std::size_t c = 0; c < a.entries.size(); ++c)
      if (!a.entries[c].kind.has_value()) CHECK(!b.entries[c].kind.has_value());
  }
  CHECK_THROWS_AS(assignFromConfidences(table, 1.5), ArgumentError);
}

TEST_CASE("assignment: ties break toward the earlier kind") {
  ConfidenceTable table;
  table.classes = {"a"};
  table.kinds = {colorKind(ColorBin::Red), colorKind(ColorBin::Yellow)};
  table.values = {{0.8, 0.8}};
  FeatureAssignment a = assignFromConfidences(table, 0.5);
  CHECK(a.entries[0].kind == colorKind(ColorBin::Red));
}

TEST_CASE("grouping: fallback and degenerate cases") {
  ConfidenceTable table = workedExample();
  table.values[1][0] = 0.5;  // stop-sign drops below delta
  FeatureAssignment a = assignFromConfidences(table, 0.7);
  Grouping g = groupClasses(a);
  REQUIRE(g.groups.size() == 2);
  CHECK(g.groups[0].classes == std::vector<std::string>{"strawberry"});
  CHECK(g.fallbackClasses == std::vector<std::string>{"stop-sign"});

  FeatureAssignment empty;
  CHECK_THROWS_AS(groupClasses(empty), ArgumentError);
}

TEST_CASE("assignment csv round trip") {
  FeatureAssignment a = assignFromConfidences(workedExample(), 0.7);
  a.entries[2].kind.reset();  // exercise the unassigned row format
  std::string csv = assignmentToCsv(a);
  FeatureAssignment back = assignmentFromCsv(csv);
  REQUIRE(back.classes == a.classes);
  for (std::size_t c = 0; c < a.entries.size(); ++c) {
    CHECK(back.entries[c].kind == a.entries[c].kind);
    CHECK(back.entries[c].confidence == doctest::Approx(a.entries[c].confidence));
  }
  CHECK_THROWS_AS(assignmentFromCsv("nonsense"), FormatError);
}

TEST_CASE("probes: fixed shapes, reproducible, color probe wins on a color task") {
  Dataset ds = smallColorDataset();
  FeatureSelectConfig cfg = colorOnlyConfig();
  ProbeSet probes = trainProbeModels(ds, cfg);
  REQUIRE(probes.models.size() == 8);
  for (const MlpModel& m : probes.models) {
    CHECK(m.topology.layerSizes.size() == 3);
    CHECK(m.topology.layerSizes[1] == cfg.probeHidden[0]);
    CHECK(m.outputWidth() == 4);
  }
  ProbeSet again = trainProbeModels(ds, cfg);
  CHECK(probes.models[0].weights[0] == again.models[0].weights[0]);

  // The red probe separates this set (red present vs absent plus the other
  // bins' shapes leak nothing); a never-present bin's probe cannot.
  double redLoss = probes.trainStats[static_cast<int>(ColorBin::Red)].finalLoss;
  double magentaLoss = probes.trainStats[static_cast<int>(ColorBin::Magenta)].finalLoss;
  CHECK(redLoss < magentaLoss);
}

TEST_CASE("scoring + selection on the synthetic color task") {
  Dataset ds = smallColorDataset();
  FeatureSelectConfig cfg = colorOnlyConfig();
  ProbeSet probes = trainProbeModels(ds, cfg);
  ConfidenceTable table = scoreClasses(probes, ds, cfg);
  FeatureAssignment a = assignFromConfidences(table, 0.7);
  REQUIRE(a.entries.size() == 4);
  const ColorBin want[] = {ColorBin::Red, ColorBin::Blue, ColorBin::Green, ColorBin::Yellow};
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(a.entries[c].kind.has_value());
    CHECK(*a.entries[c].kind == colorKind(want[c]));
  }

  // Determinism of the full selection path.
  ConfidenceTable table2 = scoreClasses(probes, ds, cfg);
  CHECK(table.values == table2.values);
}

TEST_CASE("probes: all 12 kinds get one model each with matching hidden shapes") {
  // Texture probes need images at least as large as the biggest kernel, so
  // this runs on 48x48 images with a wavelength-2 bank.
  SyntheticSpec spec;
  spec.width = 48;
  spec.height = 48;
  spec.perClassCount = 8;
  spec.classes = {
      {"red-disk", SyntheticClassSpec::Type::Color, ColorBin::Red, 0,
       SyntheticClassSpec::Shape::Disk, 0.0},
      {"t0", SyntheticClassSpec::Type::Texture, ColorBin::Red, 0,
       SyntheticClassSpec::Shape::Grating, 8.0},
  };
  Dataset ds = genSynthetic(spec);
  FeatureSelectConfig cfg;  // kinds empty = all 12
  cfg.bank.baseWavelength = 2.0;
  cfg.probeTrain.epochs = 2;
  ProbeSet probes = trainProbeModels(ds, cfg);
  REQUIRE(probes.models.size() == 12);
  for (std::size_t k = 0; k < probes.models.size(); ++k) {
    const MlpModel& m = probes.models[k];
    CHECK(m.topology.layerSizes[1] == cfg.probeHidden[0]);
    CHECK(m.outputWidth() == 2);
    CHECK(m.inputWidth() ==
          static_cast<int>(featureLength(probes.kinds[k], cfg.grid)));
  }
}

TEST_CASE("scoring: missing class in the scoring split errors") {
  Dataset ds = smallColorDataset(4);
  for (DatasetItem& item : ds.items)
    if (item.classId == 1 && item.split == Split::Validation) item.split = Split::Train;
  FeatureSelectConfig cfg = colorOnlyConfig();
  ProbeSet probes = trainProbeModels(ds, cfg);
  CHECK_THROWS_AS(scoreClasses(probes, ds, cfg), ArgumentError);
}
