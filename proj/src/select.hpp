#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "features.hpp"
#include "mlp.hpp"

namespace falcon {

struct FeatureSelectConfig {
  double delta = 0.7;  // assignment threshold
  // Hidden-layer template shared by all probes; input width follows the
  // feature length of each kind, output width the class count.
  std::vector<int> probeHidden = {8};
  TrainConfig probeTrain{0.5, 120, 4, 11, false};
  // Confidences are averaged over this many validation images per class;
  // 1 gives the single-image scoring variant.
  int scoringImagesPerClass = 8;
  std::vector<FeatureKind> kinds;  // empty = all 12
  GridDims grid;
  GaborBank bank;
};

struct ProbeSet {
  std::vector<FeatureKind> kinds;
  std::vector<MlpModel> models;        // one per kind
  std::vector<TrainStats> trainStats;  // parallel to models
  std::uint64_t totalTrainMacs = 0;
};

// One probe per feature kind, trained on that kind's feature vectors of the
// training split with one-hot class targets. Hidden architecture and epoch
// count are identical across probes.
ProbeSet trainProbeModels(const Dataset& ds, const FeatureSelectConfig& cfg);

// confidence[classId][kindIdx] = mean probe output at the class's neuron
// over the class's scoring images (validation split).
struct ConfidenceTable {
  std::vector<std::string> classes;
  std::vector<FeatureKind> kinds;
  std::vector<std::vector<double>> values;
};

ConfidenceTable scoreClasses(const ProbeSet& probes, const Dataset& ds,
                             const FeatureSelectConfig& cfg);

struct FeatureAssignment {
  struct Entry {
    std::optional<FeatureKind> kind;  // nullopt = unassigned
    double confidence = 0.0;
  };
  std::vector<std::string> classes;
  std::vector<Entry> entries;
};

// Argmax kind per class, kept only when its confidence reaches delta.
// Ties break toward the earlier kind in the fixed enumeration order.
FeatureAssignment assignFromConfidences(const ConfidenceTable& table, double delta);

struct Grouping {
  struct Group {
    FeatureKind kind;
    std::vector<std::string> classes;
  };
  std::vector<Group> groups;               // ordered by kind enumeration
  std::vector<std::string> fallbackClasses;  // unassigned
};

Grouping groupClasses(const FeatureAssignment& assignment);

// CSV rows "class,kind,confidence"; unassigned classes carry an empty kind.
std::string assignmentToCsv(const FeatureAssignment& assignment);
FeatureAssignment assignmentFromCsv(const std::string& csv);

}  // namespace falcon
