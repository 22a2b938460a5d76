#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "mlp.hpp"
#include "tree.hpp"

namespace falcon {

// Energy units per event. Absolute values are free parameters; only the
// exec/memory split is meaningful, via calibrateCostTable.
struct CostTable {
  double mac = 1.0;
  double auEval = 0.5;
  double fifoAccess = 0.1;
  double tbufAccess = 0.2;
  double sramRead = 2.5;
  double sramWrite = 2.5;
};

struct NeueConfig {
  int numNUs = 16;
  int inputFifoDepth = 16;
  int tBufferCapacity = 256;  // partial-sum entries
  CostTable costs;
  double clockGHz = 1.0;

  void validate() const;
};

struct EventCounters {
  std::uint64_t sramRead = 0;
  std::uint64_t sramWrite = 0;
  std::uint64_t fifoAccess = 0;
  std::uint64_t tbufAccess = 0;
  std::uint64_t mac = 0;
  std::uint64_t auEval = 0;
  std::uint64_t gatedWeightFetches = 0;
  std::uint64_t gatedMacs = 0;
  std::uint64_t tBufEvictions = 0;
  // Host-side HSV/Gabor work charged as MAC equivalents (tree mode).
  std::uint64_t featureMacEquivalents = 0;

  EventCounters& operator+=(const EventCounters& o);
};

// Per-layer view, enough to check gating exactness from outside.
struct LayerCounters {
  int inputs = 0;
  int neurons = 0;
  std::uint64_t weightReads = 0;
  std::uint64_t macs = 0;
  std::uint64_t gatedWeightFetches = 0;
  std::uint64_t gatedMacs = 0;
  std::uint64_t tBufEvictions = 0;
};

// Static mapping of a network onto the NU array: inputs are consumed in
// input-FIFO-sized chunks (chunk-outer) and neurons in NU-array-sized groups
// (group-inner); partial sums cross chunk boundaries through the T-Buffer
// and spill to SRAM beyond its capacity.
struct LayerSchedule {
  int inputs = 0;
  int neurons = 0;
  int chunks = 0;
  int groups = 0;
  std::uint64_t tbufWritebacks = 0;  // partial sums kept in the T-Buffer
  std::uint64_t evictions = 0;       // partial sums spilled to SRAM
  std::uint64_t cycles = 0;
};

struct Schedule {
  std::vector<LayerSchedule> layers;
  std::uint64_t totalCycles = 0;
};

Schedule mapNetwork(const MlpModel& model, const NeueConfig& cfg);

struct SimResult {
  std::vector<double> outputs;  // of the last simulated stage
  std::uint64_t cycles = 0;
  double energyExec = 0.0;
  double energyMemory = 0.0;
  EventCounters counters;
  std::vector<LayerCounters> layers;
  std::vector<std::string> activatedNodeIds;      // tree mode
  std::optional<std::string> label;               // tree mode

  double totalEnergy() const { return energyExec + energyMemory; }
  double execShare() const;
};

// Optional line-oriented event log: <cycle>,<event>,<nodeId>,<detail>.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void event(std::uint64_t cycle, const std::string& kind, const std::string& nodeId,
                     const std::string& detail) = 0;
};

class FileTraceSink : public TraceSink {
 public:
  explicit FileTraceSink(const std::string& path);
  ~FileTraceSink() override;
  void event(std::uint64_t cycle, const std::string& kind, const std::string& nodeId,
             const std::string& detail) override;

 private:
  struct Impl;
  Impl* impl_;
};

// Replace a model's activation with the engine's piecewise-linear AU table.
MlpModel withPwlActivation(const MlpModel& model, const PwlTable& table);
FalconTree withPwlActivation(const FalconTree& tree, const PwlTable& table);

// Event-level simulation of one inference. Outputs are bit-identical to
// forward() with the same PWL table; inputs that are exactly zero gate the
// weight fetch and MAC of every neuron in the layer. The model must carry a
// PWL activation (the AU has no exact-sigmoid mode).
SimResult simulateInference(const NeueConfig& cfg, const MlpModel& model,
                            const std::vector<double>& input, TraceSink* trace = nullptr,
                            const std::string& nodeId = "model");

// Simulates the initial node(s), applies the SAU routing rule, then
// simulates only the activated final/baseline node(s). Exact-sigmoid node
// models are executed with the default AU table. HSV/Gabor extraction runs
// host-side and is charged as MAC-equivalent energy.
SimResult simulateTree(const NeueConfig& cfg, const FalconTree& tree, const ImageRGB& image,
                       TraceSink* trace = nullptr);

// Scales sramRead/sramWrite uniformly so that the exec share of
// simulateInference on the representative model (driven with an all-0.5
// input) lands on targetExecShare. CalibrationError when the target is
// outside (0, 1) or the workload has no exec or no memory traffic.
NeueConfig calibrateCostTable(const NeueConfig& cfg, const MlpModel& representative,
                              double targetExecShare = 0.7892, double tolerance = 0.05);

// Average simulated energy per input for each delta, caching one pass of
// per-instance results. Uses the engine's PWL semantics for routing.
std::vector<double> sweepEnergy(const NeueConfig& cfg, const FalconTree& tree,
                                const Dataset& ds, Split split,
                                const std::vector<double>& deltas);

std::string simResultToJson(const SimResult& result);

}  // namespace falcon
