#include "neue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace falcon {

using nlohmann::json;

void NeueConfig::validate() const {
  if (numNUs < 1 || inputFifoDepth < 1 || tBufferCapacity < 1)
    throw StructuralError("neue config: capacities must be >= 1");
  const double costs_[] = {costs.mac, costs.auEval, costs.fifoAccess,
                           costs.tbufAccess, costs.sramRead, costs.sramWrite};
  for (double c : costs_)
    if (!(c >= 0.0)) throw StructuralError("neue config: costs must be >= 0");
  if (!(clockGHz > 0.0)) throw StructuralError("neue config: clock must be > 0");
}

EventCounters& EventCounters::operator+=(const EventCounters& o) {
  sramRead += o.sramRead;
  sramWrite += o.sramWrite;
  fifoAccess += o.fifoAccess;
  tbufAccess += o.tbufAccess;
  mac += o.mac;
  auEval += o.auEval;
  gatedWeightFetches += o.gatedWeightFetches;
  gatedMacs += o.gatedMacs;
  tBufEvictions += o.tBufEvictions;
  featureMacEquivalents += o.featureMacEquivalents;
  return *this;
}

double SimResult::execShare() const {
  double total = totalEnergy();
  return total > 0.0 ? energyExec / total : 0.0;
}

namespace {

LayerSchedule scheduleLayer(int inputs, int neurons, const NeueConfig& cfg) {
  LayerSchedule s;
  s.inputs = inputs;
  s.neurons = neurons;
  s.chunks = (inputs + cfg.inputFifoDepth - 1) / cfg.inputFifoDepth;
  s.groups = (neurons + cfg.numNUs - 1) / cfg.numNUs;
  int boundaries = s.chunks - 1;
  if (boundaries > 0) {
    std::uint64_t evictedPerBoundary =
        static_cast<std::uint64_t>(std::max(0, neurons - cfg.tBufferCapacity));
    s.evictions = evictedPerBoundary * static_cast<std::uint64_t>(boundaries);
    s.tbufWritebacks = (static_cast<std::uint64_t>(neurons) - evictedPerBoundary) *
                       static_cast<std::uint64_t>(boundaries);
  }
  for (int c = 0; c < s.chunks; ++c) {
    int chunkLen = std::min(cfg.inputFifoDepth, inputs - c * cfg.inputFifoDepth);
    for (int g = 0; g < s.groups; ++g) {
      int groupLen = std::min(cfg.numNUs, neurons - g * cfg.numNUs);
      s.cycles += static_cast<std::uint64_t>(std::max(chunkLen, groupLen));
    }
  }
  s.cycles += static_cast<std::uint64_t>(neurons);  // AU streams outputs cyclically
  return s;
}

void emitLayerTrace(TraceSink* trace, std::uint64_t cycle, const std::string& nodeId, int layer,
                    const LayerSchedule& sched, const LayerCounters& lc) {
  if (!trace) return;
  std::ostringstream head;
  head << "layer=" << layer;
  trace->event(cycle, "layer-done", nodeId,
               head.str() + " inputs=" + std::to_string(sched.inputs) +
                   " neurons=" + std::to_string(sched.neurons) +
                   " chunks=" + std::to_string(sched.chunks) +
                   " groups=" + std::to_string(sched.groups));
  trace->event(cycle, "mac", nodeId, head.str() + " count=" + std::to_string(lc.macs));
  trace->event(cycle, "weight-read", nodeId,
               head.str() + " count=" + std::to_string(lc.weightReads));
  if (lc.gatedMacs)
    trace->event(cycle, "gated", nodeId,
                 head.str() + " weightFetches=" + std::to_string(lc.gatedWeightFetches) +
                     " macs=" + std::to_string(lc.gatedMacs));
  if (sched.evictions)
    trace->event(cycle, "tbuf-evict", nodeId,
                 head.str() + " count=" + std::to_string(sched.evictions));
  trace->event(cycle, "au", nodeId, head.str() + " count=" + std::to_string(sched.neurons));
}

}  // namespace

Schedule mapNetwork(const MlpModel& model, const NeueConfig& cfg) {
  model.validate();
  cfg.validate();
  Schedule schedule;
  for (int l = 0; l < model.topology.layerPairs(); ++l) {
    LayerSchedule s = scheduleLayer(model.topology.layerSizes[static_cast<std::size_t>(l)],
                                    model.topology.layerSizes[static_cast<std::size_t>(l) + 1],
                                    cfg);
    schedule.totalCycles += s.cycles;
    schedule.layers.push_back(s);
  }
  return schedule;
}

MlpModel withPwlActivation(const MlpModel& model, const PwlTable& table) {
  table.validate();
  MlpModel out = model;
  out.activation.kind = ActivationKind::PwlSigmoid;
  out.activation.table = table;
  return out;
}

FalconTree withPwlActivation(const FalconTree& tree, const PwlTable& table) {
  FalconTree out = tree;
  for (FalconNode& n : out.initialNodes) n.model = withPwlActivation(n.model, table);
  for (FalconNode& n : out.finalNodes) n.model = withPwlActivation(n.model, table);
  if (out.baseline) out.baseline->model = withPwlActivation(out.baseline->model, table);
  return out;
}

SimResult simulateInference(const NeueConfig& cfg, const MlpModel& model,
                            const std::vector<double>& input, TraceSink* trace,
                            const std::string& nodeId) {
  model.validate();
  cfg.validate();
  if (model.activation.kind != ActivationKind::PwlSigmoid)
    throw ArgumentError("simulateInference: the AU is piecewise linear; convert the model "
                        "with withPwlActivation first");
  if (input.size() != static_cast<std::size_t>(model.inputWidth()))
    throw StructuralError("simulateInference: input width mismatch");

  SimResult result;
  std::vector<double> current = input;
  for (int l = 0; l < model.topology.layerPairs(); ++l) {
    int inWidth = model.topology.layerSizes[static_cast<std::size_t>(l)];
    int outWidth = model.topology.layerSizes[static_cast<std::size_t>(l) + 1];
    LayerSchedule sched = scheduleLayer(inWidth, outWidth, cfg);

    std::uint64_t zeros = 0;
    for (double v : current)
      if (v == 0.0) ++zeros;
    std::uint64_t nonZeros = static_cast<std::uint64_t>(inWidth) - zeros;
    std::uint64_t neurons = static_cast<std::uint64_t>(outWidth);

    LayerCounters lc;
    lc.inputs = inWidth;
    lc.neurons = outWidth;
    lc.weightReads = nonZeros * neurons;
    lc.macs = nonZeros * neurons;
    lc.gatedWeightFetches = zeros * neurons;
    lc.gatedMacs = zeros * neurons;
    lc.tBufEvictions = sched.evictions;

    EventCounters& ec = result.counters;
    ec.sramRead += static_cast<std::uint64_t>(inWidth) + lc.weightReads + sched.evictions;
    ec.sramWrite += neurons + sched.evictions;
    ec.fifoAccess += static_cast<std::uint64_t>(inWidth)                       // FIFO fills
                     + static_cast<std::uint64_t>(inWidth) * sched.groups      // streams
                     + 2 * lc.weightReads;                                     // weight FIFOs
    ec.tbufAccess += 2 * sched.tbufWritebacks;
    ec.mac += lc.macs;
    ec.auEval += neurons;
    ec.gatedWeightFetches += lc.gatedWeightFetches;
    ec.gatedMacs += lc.gatedMacs;
    ec.tBufEvictions += sched.evictions;

    // NU arithmetic in the same order as the reference forward pass: bias
    // first, then inputs ascending. Zero inputs are skipped.
    std::vector<double> next(static_cast<std::size_t>(outWidth));
    const double* w = model.weights[static_cast<std::size_t>(l)].data();
    for (int j = 0; j < outWidth; ++j) {
      double acc = model.biases[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      const double* row = w + static_cast<std::size_t>(j) * static_cast<std::size_t>(inWidth);
      for (int i = 0; i < inWidth; ++i)
        if (current[static_cast<std::size_t>(i)] != 0.0)
          acc += row[i] * current[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(j)] = model.activation.value(acc);
    }
    current = std::move(next);

    result.cycles += sched.cycles;
    emitLayerTrace(trace, result.cycles, nodeId, l, sched, lc);
    result.layers.push_back(lc);
  }

  result.outputs = std::move(current);
  const CostTable& c = cfg.costs;
  result.energyExec = static_cast<double>(result.counters.mac) * c.mac +
                      static_cast<double>(result.counters.auEval) * c.auEval +
                      static_cast<double>(result.counters.fifoAccess) * c.fifoAccess +
                      static_cast<double>(result.counters.tbufAccess) * c.tbufAccess +
                      static_cast<double>(result.counters.featureMacEquivalents) * c.mac;
  result.energyMemory = static_cast<double>(result.counters.sramRead) * c.sramRead +
                        static_cast<double>(result.counters.sramWrite) * c.sramWrite;
  return result;
}

namespace {

std::vector<double> rawPixels(const ImageRGB& image) {
  std::vector<double> v;
  v.reserve(image.pixels.size());
  for (std::uint8_t p : image.pixels) v.push_back(p / 255.0);
  return v;
}

MlpModel engineModel(const MlpModel& model) {
  if (model.activation.kind == ActivationKind::PwlSigmoid) return model;
  return withPwlActivation(model, defaultPwlTable());
}

// Like withPwlActivation but keeps any tables the nodes already carry.
FalconTree engineTree(const FalconTree& tree) {
  FalconTree out = tree;
  for (FalconNode& n : out.initialNodes) n.model = engineModel(n.model);
  for (FalconNode& n : out.finalNodes) n.model = engineModel(n.model);
  if (out.baseline) out.baseline->model = engineModel(out.baseline->model);
  return out;
}

void mergeInto(SimResult& total, const SimResult& part, const std::string& nodeId) {
  total.cycles += part.cycles;
  total.energyExec += part.energyExec;
  total.energyMemory += part.energyMemory;
  total.counters += part.counters;
  total.activatedNodeIds.push_back(nodeId);
}

}  // namespace

SimResult simulateTree(const NeueConfig& cfg, const FalconTree& tree, const ImageRGB& image,
                       TraceSink* trace) {
  tree.validate();
  cfg.validate();
  image.validate();
  if (image.width != tree.imageWidth || image.height != tree.imageHeight)
    throw StructuralError("simulateTree: image dims do not match tree input");

  std::vector<double> raw = rawPixels(image);
  SimResult total;

  double omax = -1.0, omin = 2.0;
  std::size_t bestNode = 0;
  int bestOut = 0;
  std::vector<SimResult> initialRuns;
  for (std::size_t n = 0; n < tree.initialNodes.size(); ++n) {
    const FalconNode& node = tree.initialNodes[n];
    SimResult r = simulateInference(cfg, engineModel(node.model), raw, trace, node.id);
    for (std::size_t j = 0; j < r.outputs.size(); ++j) {
      if (r.outputs[j] > omax) {
        omax = r.outputs[j];
        bestNode = n;
        bestOut = static_cast<int>(j);
      }
      omin = std::min(omin, r.outputs[j]);
    }
    mergeInto(total, r, node.id);
    initialRuns.push_back(std::move(r));
  }

  double divergence = omax - omin;
  if (tree.baseline && divergence < tree.delta) {
    // SAU enables only the appended baseline; the final-node paths stay dark.
    SimResult r = simulateInference(cfg, engineModel(tree.baseline->model), raw, trace,
                                    tree.baseline->id);
    std::size_t arg = static_cast<std::size_t>(
        std::max_element(r.outputs.begin(), r.outputs.end()) - r.outputs.begin());
    total.label = tree.baseline->outputLabels[arg];
    total.outputs = r.outputs;
    mergeInto(total, r, tree.baseline->id);
    return total;
  }
  if (!tree.baseline && tree.strictNotFound && divergence < tree.delta) {
    total.outputs = initialRuns[bestNode].outputs;
    return total;  // NOT FOUND: label stays empty
  }

  const FalconNode& chosen = tree.initialNodes[bestNode];
  const auto& targets = tree.routes.at({chosen.id, bestOut});
  const FalconNode* first = tree.findNode(targets.front());
  FeatureVector fv = extractFeature(image, first->featureKind, tree.grid, tree.bank);
  std::uint64_t featOps = featureExtractionOps(first->featureKind, image.width, image.height,
                                               tree.grid, tree.bank, tree.featureCost);
  total.counters.featureMacEquivalents += featOps;
  total.energyExec += static_cast<double>(featOps) * cfg.costs.mac;
  if (trace)
    trace->event(total.cycles, "feature", kindToString(first->featureKind),
                 "macEquivalents=" + std::to_string(featOps));

  double best = -1.0;
  std::vector<double> stageOutputs;
  for (const std::string& id : targets) {
    const FalconNode* node = tree.findNode(id);
    SimResult r = simulateInference(cfg, engineModel(node->model), fv.values, trace, node->id);
    for (std::size_t j = 0; j < r.outputs.size(); ++j) {
      if (r.outputs[j] > best) {
        best = r.outputs[j];
        total.label = node->outputLabels[j];
      }
      stageOutputs.push_back(r.outputs[j]);
    }
    mergeInto(total, r, node->id);
  }
  total.outputs = std::move(stageOutputs);
  return total;
}

NeueConfig calibrateCostTable(const NeueConfig& cfg, const MlpModel& representative,
                              double targetExecShare, double tolerance) {
  cfg.validate();
  if (!(targetExecShare > 0.0) || !(targetExecShare < 1.0))
    throw CalibrationError("calibrateCostTable: target share must lie in (0, 1)");
  if (!(tolerance > 0.0)) throw ArgumentError("calibrateCostTable: tolerance must be > 0");

  std::vector<double> input(static_cast<std::size_t>(representative.inputWidth()), 0.5);
  SimResult run = simulateInference(cfg, engineModel(representative), input);
  if (!(run.energyExec > 0.0))
    throw CalibrationError("calibrateCostTable: workload has no exec energy");
  if (!(run.energyMemory > 0.0))
    throw CalibrationError("calibrateCostTable: workload has no memory traffic");

  // share = exec / (exec + f * mem)  =>  f = exec (1 - t) / (t * mem)
  double f = run.energyExec * (1.0 - targetExecShare) /
             (targetExecShare * run.energyMemory);
  NeueConfig out = cfg;
  out.costs.sramRead *= f;
  out.costs.sramWrite *= f;

  SimResult check = simulateInference(out, engineModel(representative), input);
  if (std::abs(check.execShare() - targetExecShare) > tolerance)
    throw CalibrationError("calibrateCostTable: share " + std::to_string(check.execShare()) +
                           " missed target " + std::to_string(targetExecShare));
  return out;
}

std::vector<double> sweepEnergy(const NeueConfig& cfg, const FalconTree& tree,
                                const Dataset& ds, Split split,
                                const std::vector<double>& deltas) {
  tree.validate();
  if (!tree.baseline) throw ArgumentError("sweepEnergy: tree has no baseline node");
  std::vector<std::size_t> indices = ds.indicesOf(split);
  if (indices.empty()) throw ArgumentError("sweepEnergy: empty test set");

  FalconTree engine = engineTree(tree);
  FalconTree routed = engine;
  routed.delta = 0.0;

  struct Cached {
    double divergence;
    double finalEnergy;     // initial nodes + routed path + feature cost
    double baselineEnergy;  // initial nodes + baseline node
  };
  std::vector<Cached> cache;
  cache.reserve(indices.size());
  for (std::size_t idx : indices) {
    const ImageRGB& image = ds.items[idx].image;
    SimResult viaFinal = simulateTree(cfg, routed, image);
    double omax = -1.0, omin = 2.0;
    std::vector<double> raw = rawPixels(image);
    double initialEnergy = 0.0;
    for (const FalconNode& n : engine.initialNodes) {
      SimResult r = simulateInference(cfg, n.model, raw);
      for (double v : r.outputs) {
        omax = std::max(omax, v);
        omin = std::min(omin, v);
      }
      initialEnergy += r.totalEnergy();
    }
    SimResult base = simulateInference(cfg, engine.baseline->model, raw);
    cache.push_back({omax - omin, viaFinal.totalEnergy(), initialEnergy + base.totalEnergy()});
  }

  std::vector<double> energies;
  for (double delta : deltas) {
    double sum = 0.0;
    for (const Cached& c : cache)
      sum += c.divergence < delta ? c.baselineEnergy : c.finalEnergy;
    energies.push_back(sum / static_cast<double>(cache.size()));
  }
  return energies;
}

struct FileTraceSink::Impl {
  std::ofstream os;
};

FileTraceSink::FileTraceSink(const std::string& path) : impl_(new Impl) {
  impl_->os.open(path);
  if (!impl_->os) {
    delete impl_;
    throw IoError("cannot open trace file " + path);
  }
}

FileTraceSink::~FileTraceSink() { delete impl_; }

void FileTraceSink::event(std::uint64_t cycle, const std::string& kind,
                          const std::string& nodeId, const std::string& detail) {
  impl_->os << cycle << "," << kind << "," << nodeId << "," << detail << "\n";
}

std::string simResultToJson(const SimResult& result) {
  json j;
  j["cycles"] = result.cycles;
  j["energy"] = {{"exec", result.energyExec},
                 {"memory", result.energyMemory},
                 {"total", result.totalEnergy()},
                 {"execShare", result.execShare()}};
  j["counters"] = {{"sramRead", result.counters.sramRead},
                   {"sramWrite", result.counters.sramWrite},
                   {"fifoAccess", result.counters.fifoAccess},
                   {"tbufAccess", result.counters.tbufAccess},
                   {"mac", result.counters.mac},
                   {"auEval", result.counters.auEval},
                   {"gatedWeightFetches", result.counters.gatedWeightFetches},
                   {"gatedMacs", result.counters.gatedMacs},
                   {"tBufEvictions", result.counters.tBufEvictions},
                   {"featureMacEquivalents", result.counters.featureMacEquivalents}};
  j["outputs"] = result.outputs;
  if (!result.activatedNodeIds.empty()) j["activatedNodeIds"] = result.activatedNodeIds;
  if (result.label) j["label"] = *result.label;
  return j.dump(2) + "\n";
}

}  // namespace falcon
