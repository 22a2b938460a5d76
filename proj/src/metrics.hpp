#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tree.hpp"

namespace falcon {

struct OpsReport {
  std::map<std::string, std::uint64_t> perNodeMacs;  // summed over traces
  std::uint64_t featureOps = 0;
  std::uint64_t totalPerInput = 0;  // grand total over all traces
  double avgPerInput = 0.0;
};

OpsReport opsFromTraces(const std::vector<InferenceTrace>& traces);

struct EvalSummary {
  double avgOps = 0.0;
  double avgEnergy = 0.0;  // 0 when not simulated
  double accuracy = 0.0;
};

struct BenefitReport {
  double normalizedOps = 0.0;     // baseline avg OPS / falcon avg OPS
  double normalizedEnergy = 0.0;  // 0 when either side lacks energy numbers
  double accuracyDelta = 0.0;     // falcon - baseline, percentage points
};

BenefitReport normalizedBenefit(const EvalSummary& falconRun, const EvalSummary& baselineRun);

struct TrainingCostReport {
  std::map<std::string, std::uint64_t> perNodeUpdateMacs;
  std::vector<std::string> reusedNodeIds;  // contribute zero
  std::uint64_t probeOverheadMacs = 0;
  std::uint64_t totalUpdateMacs = 0;
  // Falcon cost / baseline cost; < 1 means the tree trains cheaper. 0 when
  // no baseline cost was supplied.
  double normalizedVsBaseline = 0.0;
};

TrainingCostReport trainingCost(const BuildRecord& record, std::uint64_t baselineUpdateMacs);

std::string evalReportToJson(const EvalReport& report, const std::string& label);
std::string evalReportToCsv(const EvalReport& report, const std::string& label);
std::string sweepToCsv(const std::vector<DeltaSweepRow>& rows,
                       const std::vector<double>& energies);

}  // namespace falcon
