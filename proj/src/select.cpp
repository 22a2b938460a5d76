#include "select.hpp"

#include <algorithm>
#include <sstream>

#include "errors.hpp"

namespace falcon {

namespace {

std::vector<FeatureKind> effectiveKinds(const FeatureSelectConfig& cfg) {
  return cfg.kinds.empty() ? allFeatureKinds() : cfg.kinds;
}

Topology probeTopology(std::size_t featureLen, int classCount,
                       const std::vector<int>& hidden) {
  Topology t;
  t.layerSizes.push_back(static_cast<int>(featureLen));
  for (int h : hidden) t.layerSizes.push_back(h);
  t.layerSizes.push_back(classCount);
  return t;
}

}  // namespace

ProbeSet trainProbeModels(const Dataset& ds, const FeatureSelectConfig& cfg) {
  ds.validate();
  if (ds.classCount() < 2) throw ArgumentError("trainProbeModels: need >= 2 classes");
  std::vector<std::size_t> train = ds.indicesOf(Split::Train);
  if (train.empty()) throw ArgumentError("trainProbeModels: empty training split");

  ProbeSet probes;
  probes.kinds = effectiveKinds(cfg);
  int classes = ds.classCount();
  for (const FeatureKind& kind : probes.kinds) {
    std::vector<Sample> samples;
    samples.reserve(train.size());
    for (std::size_t idx : train) {
      const DatasetItem& item = ds.items[idx];
      Sample s;
      s.input = extractFeature(item.image, kind, cfg.grid, cfg.bank).values;
      s.target.assign(static_cast<std::size_t>(classes), 0.0);
      s.target[static_cast<std::size_t>(item.classId)] = 1.0;
      samples.push_back(std::move(s));
    }
    MlpModel model = initMlp(probeTopology(samples.front().input.size(), classes,
                                           cfg.probeHidden),
                             cfg.probeTrain.seed);
    TrainStats stats = trainSgd(model, samples, cfg.probeTrain);
    probes.totalTrainMacs += stats.weightUpdateMacs;
    probes.models.push_back(std::move(model));
    probes.trainStats.push_back(std::move(stats));
  }
  return probes;
}

ConfidenceTable scoreClasses(const ProbeSet& probes, const Dataset& ds,
                             const FeatureSelectConfig& cfg) {
  if (probes.models.empty()) throw ArgumentError("scoreClasses: no probes");
  if (cfg.scoringImagesPerClass < 1)
    throw ArgumentError("scoreClasses: scoringImagesPerClass must be >= 1");
  ConfidenceTable table;
  table.classes = ds.classNames;
  table.kinds = probes.kinds;
  table.values.assign(ds.classNames.size(),
                      std::vector<double>(probes.kinds.size(), 0.0));

  for (int c = 0; c < ds.classCount(); ++c) {
    std::vector<std::size_t> scoring = ds.indicesOf(Split::Validation, c);
    if (scoring.empty())
      throw ArgumentError("scoreClasses: class " + ds.classNames[static_cast<std::size_t>(c)] +
                          " missing from scoring set");
    if (scoring.size() > static_cast<std::size_t>(cfg.scoringImagesPerClass))
      scoring.resize(static_cast<std::size_t>(cfg.scoringImagesPerClass));
    for (std::size_t k = 0; k < probes.kinds.size(); ++k) {
      double acc = 0.0;
      for (std::size_t idx : scoring) {
        FeatureVector fv = extractFeature(ds.items[idx].image, probes.kinds[k], cfg.grid,
                                          cfg.bank);
        acc += forward(probes.models[k], fv.values)[static_cast<std::size_t>(c)];
      }
      table.values[static_cast<std::size_t>(c)][k] = acc / static_cast<double>(scoring.size());
    }
  }
  return table;
}

FeatureAssignment assignFromConfidences(const ConfidenceTable& table, double delta) {
  if (delta < 0.0 || delta > 1.0)
    throw ArgumentError("assignFromConfidences: delta must be in [0, 1]");
  if (table.classes.empty() || table.kinds.empty())
    throw ArgumentError("assignFromConfidences: empty table");
  FeatureAssignment out;
  out.classes = table.classes;
  for (std::size_t c = 0; c < table.classes.size(); ++c) {
    const std::vector<double>& row = table.values[c];
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;  // strict ">" keeps the earlier kind on ties
    FeatureAssignment::Entry entry;
    entry.confidence = row[best];
    if (row[best] >= delta) entry.kind = table.kinds[best];
    out.entries.push_back(entry);
  }
  return out;
}

Grouping groupClasses(const FeatureAssignment& assignment) {
  if (assignment.classes.empty()) throw ArgumentError("groupClasses: empty assignment");
  Grouping g;
  for (const FeatureKind& kind : allFeatureKinds()) {
    Grouping::Group group;
    group.kind = kind;
    for (std::size_t c = 0; c < assignment.classes.size(); ++c)
      if (assignment.entries[c].kind && *assignment.entries[c].kind == kind)
        group.classes.push_back(assignment.classes[c]);
    if (!group.classes.empty()) g.groups.push_back(std::move(group));
  }
  for (std::size_t c = 0; c < assignment.classes.size(); ++c)
    if (!assignment.entries[c].kind) g.fallbackClasses.push_back(assignment.classes[c]);
  if (g.groups.empty() && g.fallbackClasses.empty())
    throw ArgumentError("groupClasses: nothing to group");
  return g;
}

std::string assignmentToCsv(const FeatureAssignment& assignment) {
  std::ostringstream os;
  os << "class,kind,confidence\n";
  for (std::size_t c = 0; c < assignment.classes.size(); ++c) {
    const auto& e = assignment.entries[c];
    os << assignment.classes[c] << "," << (e.kind ? kindToString(*e.kind) : "") << ","
       << e.confidence << "\n";
  }
  return os.str();
}

FeatureAssignment assignmentFromCsv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("class,kind,confidence", 0) != 0)
    throw FormatError("assignment csv: bad header");
  FeatureAssignment out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw FormatError("assignment csv: bad row: " + line);
    out.classes.push_back(line.substr(0, c1));
    FeatureAssignment::Entry entry;
    std::string kind = line.substr(c1 + 1, c2 - c1 - 1);
    if (!kind.empty()) entry.kind = parseFeatureKind(kind);
    entry.confidence = std::stod(line.substr(c2 + 1));
    out.entries.push_back(entry);
  }
  if (out.classes.empty()) throw FormatError("assignment csv: no rows");
  return out;
}

}  // namespace falcon
