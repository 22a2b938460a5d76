#include "metrics.hpp"

#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace falcon {

using nlohmann::json;

OpsReport opsFromTraces(const std::vector<InferenceTrace>& traces) {
  if (traces.empty()) throw ArgumentError("opsFromTraces: no traces");
  OpsReport report;
  for (const InferenceTrace& t : traces) {
    for (const auto& [id, macs] : t.nodeMacs) report.perNodeMacs[id] += macs;
    report.featureOps += t.featureOps;
    report.totalPerInput += t.totalMacs + t.featureOps;
  }
  report.avgPerInput = static_cast<double>(report.totalPerInput) /
                       static_cast<double>(traces.size());
  return report;
}

BenefitReport normalizedBenefit(const EvalSummary& falconRun, const EvalSummary& baselineRun) {
  if (!(baselineRun.avgOps > 0.0))
    throw ArgumentError("normalizedBenefit: baseline avg OPS must be > 0");
  if (!(falconRun.avgOps > 0.0))
    throw ArgumentError("normalizedBenefit: falcon avg OPS must be > 0");
  BenefitReport report;
  report.normalizedOps = baselineRun.avgOps / falconRun.avgOps;
  if (falconRun.avgEnergy > 0.0 && baselineRun.avgEnergy > 0.0)
    report.normalizedEnergy = baselineRun.avgEnergy / falconRun.avgEnergy;
  report.accuracyDelta = 100.0 * (falconRun.accuracy - baselineRun.accuracy);
  return report;
}

TrainingCostReport trainingCost(const BuildRecord& record, std::uint64_t baselineUpdateMacs) {
  TrainingCostReport report;
  report.probeOverheadMacs = record.probeTrainMacs;
  report.totalUpdateMacs = record.probeTrainMacs;
  for (const NodeBuildRecord& n : record.nodes) {
    if (n.reused) {
      report.perNodeUpdateMacs[n.nodeId] = 0;
      report.reusedNodeIds.push_back(n.nodeId);
    } else {
      report.perNodeUpdateMacs[n.nodeId] += n.weightUpdateMacs;
      report.totalUpdateMacs += n.weightUpdateMacs;
    }
  }
  if (baselineUpdateMacs > 0)
    report.normalizedVsBaseline = static_cast<double>(report.totalUpdateMacs) /
                                  static_cast<double>(baselineUpdateMacs);
  return report;
}

std::string evalReportToJson(const EvalReport& report, const std::string& label) {
  json j;
  j["label"] = label;
  j["instances"] = report.instances;
  j["accuracy"] = report.accuracy;
  j["avgOpsPerInput"] = report.avgOpsPerInput;
  j["baselineRate"] = report.baselineRate;
  j["notFoundRate"] = report.notFoundRate;
  json rates = json::object();
  for (const auto& [id, rate] : report.nodeActivationRate) rates[id] = rate;
  j["nodeActivationRate"] = std::move(rates);
  return j.dump(2) + "\n";
}

std::string evalReportToCsv(const EvalReport& report, const std::string& label) {
  std::ostringstream os;
  os << "label,instances,accuracy,avgOpsPerInput,baselineRate,notFoundRate\n";
  os << label << "," << report.instances << "," << report.accuracy << ","
     << report.avgOpsPerInput << "," << report.baselineRate << "," << report.notFoundRate
     << "\n";
  return os.str();
}

std::string sweepToCsv(const std::vector<DeltaSweepRow>& rows,
                       const std::vector<double>& energies) {
  std::ostringstream os;
  bool withEnergy = energies.size() == rows.size();
  os << "delta,accuracy,avgOps,baselineRate" << (withEnergy ? ",avgEnergy" : "") << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << rows[i].delta << "," << rows[i].accuracy << "," << rows[i].avgOps << ","
       << rows[i].baselineRate;
    if (withEnergy) os << "," << energies[i];
    os << "\n";
  }
  return os.str();
}

}  // namespace falcon
