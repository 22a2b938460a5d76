#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "errors.hpp"
#include "metrics.hpp"

using namespace falcon;

namespace {

InferenceTrace makeTrace(std::uint64_t a, std::uint64_t b, std::uint64_t featureOps) {
  InferenceTrace t;
  t.activatedNodeIds = {"na", "nb"};
  t.nodeMacs = {{"na", a}, {"nb", b}};
  t.totalMacs = a + b;
  t.featureOps = featureOps;
  return t;
}

}  // namespace

TEST_CASE("ops report: single trace and averages") {
  OpsReport one = opsFromTraces({makeTrace(20, 12, 0)});
  CHECK(one.totalPerInput == 32);
  CHECK(one.avgPerInput == doctest::Approx(32.0));
  CHECK(one.perNodeMacs.at("na") == 20);
  CHECK(one.perNodeMacs.at("nb") == 12);

  OpsReport two = opsFromTraces({makeTrace(20, 12, 0), makeTrace(20, 12, 16)});
  CHECK(two.avgPerInput == doctest::Approx(40.0));
  CHECK(two.featureOps == 16);

  CHECK_THROWS_AS(opsFromTraces({}), ArgumentError);
}

TEST_CASE("ops report: invariant to trace order") {
  std::vector<InferenceTrace> traces = {makeTrace(1, 2, 3), makeTrace(4, 5, 6),
                                        makeTrace(7, 8, 9)};
  OpsReport forward_ = opsFromTraces(traces);
  std::reverse(traces.begin(), traces.end());
  OpsReport backward = opsFromTraces(traces);
  CHECK(forward_.totalPerInput == backward.totalPerInput);
  CHECK(forward_.avgPerInput == backward.avgPerInput);
  CHECK(forward_.perNodeMacs == backward.perNodeMacs);
}

TEST_CASE("benefit: identities and errors") {
  EvalSummary x{100.0, 50.0, 0.9};
  BenefitReport same = normalizedBenefit(x, x);
  CHECK(same.normalizedOps == 1.0);
  CHECK(same.normalizedEnergy == 1.0);
  CHECK(same.accuracyDelta == 0.0);

  EvalSummary falconRun{25.0, 10.0, 0.88};
  EvalSummary baseline{100.0, 50.0, 0.90};
  BenefitReport b = normalizedBenefit(falconRun, baseline);
  CHECK(b.normalizedOps == doctest::Approx(4.0));
  CHECK(b.normalizedEnergy == doctest::Approx(5.0));
  CHECK(b.accuracyDelta == doctest::Approx(-2.0));

  CHECK_THROWS_AS(normalizedBenefit(falconRun, EvalSummary{0.0, 0.0, 0.5}), ArgumentError);
}

TEST_CASE("training cost: reuse zeroes nodes, probe overhead counts") {
  BuildRecord record;
  record.nodes = {{"initial-0", 500, false},
                  {"final-a", 200, false},
                  {"final-b", 0, true}};
  record.probeTrainMacs = 40;
  TrainingCostReport report = trainingCost(record, 2000);
  CHECK(report.totalUpdateMacs == 740);
  CHECK(report.probeOverheadMacs == 40);
  CHECK(report.perNodeUpdateMacs.at("final-b") == 0);
  CHECK(report.reusedNodeIds == std::vector<std::string>{"final-b"});
  CHECK(report.normalizedVsBaseline == doctest::Approx(740.0 / 2000.0));

  // A fully reused tree costs nothing.
  BuildRecord reused;
  reused.nodes = {{"a", 0, true}, {"b", 0, true}};
  TrainingCostReport free_ = trainingCost(reused, 0);
  CHECK(free_.totalUpdateMacs == 0);
  CHECK(free_.normalizedVsBaseline == 0.0);

  // Single node: the report equals that node's own cost.
  BuildRecord single;
  single.nodes = {{"n", 123, false}};
  CHECK(trainingCost(single, 0).totalUpdateMacs == 123);
}

TEST_CASE("csv renderers keep fixed headers") {
  EvalReport report;
  report.accuracy = 0.5;
  report.avgOpsPerInput = 10;
  report.instances = 2;
  std::string csv = evalReportToCsv(report, "tree");
  CHECK(csv.rfind("label,instances,accuracy,avgOpsPerInput,baselineRate,notFoundRate\n", 0) ==
        0);

  std::vector<DeltaSweepRow> rows = {{0.0, 0.9, 100.0, 0.0}, {0.5, 0.95, 150.0, 0.4}};
  std::string plain = sweepToCsv(rows, {});
  CHECK(plain.rfind("delta,accuracy,avgOps,baselineRate\n", 0) == 0);
  std::string energetic = sweepToCsv(rows, {1.0, 2.0});
  CHECK(energetic.rfind("delta,accuracy,avgOps,baselineRate,avgEnergy\n", 0) == 0);
}
