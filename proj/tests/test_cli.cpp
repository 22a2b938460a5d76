// Drives the installed CLI binary end to end: gen-data -> select -> build ->
// eval -> sweep-delta -> simulate -> calibrate, plus the documented exit
// codes for bad invocations.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "[ok]" : "[FAIL]", what.c_str());
  if (!ok) ++failures;
}

int run(const std::string& args) {
  std::string cmd = std::string(FALCON_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool present(const fs::path& p) { return fs::exists(p); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace

int main() {
  fs::path root = fs::temp_directory_path() / "falcon_cli_e2e";
  fs::remove_all(root);
  fs::create_directories(root);
  fs::path data = root / "data";
  fs::path sel = root / "select";
  fs::path tree = root / "tree";
  fs::path eval = root / "eval";
  fs::path sweep = root / "sweep";
  fs::path sim = root / "sim";
  fs::path cal = root / "cal";

  // A small fast configuration.
  fs::path cfgPath = root / "config.json";
  {
    std::ofstream os(cfgPath);
    os << R"({
  "data": {"width": 16, "height": 16, "perClassCount": 24},
  "select": {"kinds": ["color:red", "color:yellow", "color:green", "color:blue"]},
  "tree": {"withBaseline": true,
           "initialTrain": {"learningRate": 0.5, "epochs": 40, "minibatchSize": 16,
                            "seed": 21, "balancedSampling": true},
           "finalTrain": {"learningRate": 0.5, "epochs": 60, "minibatchSize": 16,
                          "seed": 22, "balancedSampling": false},
           "baselineTrain": {"learningRate": 0.5, "epochs": 40, "minibatchSize": 16,
                             "seed": 23, "balancedSampling": false}}
})";
  }
  std::string base = "--config " + cfgPath.string();

  expect(run("gen-data " + base + " --out " + data.string()) == 0, "gen-data exits 0");
  expect(present(data / "manifest.json"), "gen-data writes a manifest");
  expect(present(data / "img_000000.ppm"), "gen-data writes ppm files");

  expect(run("select " + base + " --data " + data.string() + " --out " + sel.string()) == 0,
         "select exits 0");
  expect(present(sel / "assignment.csv"), "select writes the assignment csv");
  expect(slurp(sel / "assignment.csv").rfind("class,kind,confidence", 0) == 0,
         "assignment csv header");

  expect(run("build " + base + " --data " + data.string() + " --assignment " +
             (sel / "assignment.csv").string() + " --out " + tree.string()) == 0,
         "build exits 0");
  expect(present(tree / "tree.json"), "build writes the manifest");
  expect(present(tree / "initial-0.mlp"), "build writes node models");
  expect(present(tree / "baseline.mlp"), "build writes the baseline node");

  expect(run("eval " + base + " --data " + data.string() + " --tree " + tree.string() +
             " --emit-plot --out " + eval.string()) == 0,
         "eval exits 0");
  expect(present(eval / "report.json"), "eval writes report.json");
  expect(present(eval / "report.csv"), "eval writes report.csv");
  expect(slurp(eval / "report.csv").find("label,instances,accuracy") != std::string::npos,
         "report csv has the fixed header");
  expect(present(eval / "label_vs_avgOpsPerInput.xy"), "eval emits plot series");

  expect(run("sweep-delta " + base + " --data " + data.string() + " --tree " + tree.string() +
             " --deltas 0,0.5,1.01 --energy --emit-plot --out " + sweep.string()) == 0,
         "sweep-delta exits 0");
  std::string sweepCsv = slurp(sweep / "sweep.csv");
  expect(sweepCsv.find("delta,accuracy,avgOps,baselineRate,avgEnergy") != std::string::npos,
         "sweep csv header");
  int rows = 0;
  for (char c : sweepCsv)
    if (c == '\n') ++rows;
  expect(rows >= 4, "sweep csv has one row per delta");
  expect(present(sweep / "delta_vs_avgEnergy.xy"), "sweep emits plot series");

  expect(run("simulate " + base + " --tree " + tree.string() + " --data " + data.string() +
             " --index 0 --trace --out " + sim.string()) == 0,
         "simulate exits 0");
  expect(present(sim / "sim.json"), "simulate writes the summary");
  expect(present(sim / "trace.log"), "simulate writes the event log");
  {
    std::string line;
    std::ifstream is(sim / "trace.log");
    std::getline(is, line);
    expect(std::count(line.begin(), line.end(), ',') >= 3, "trace lines are cycle,event,node,detail");
  }

  expect(run("calibrate " + base + " --model " + (tree / "baseline.mlp").string() +
             " --out " + cal.string()) == 0,
         "calibrate exits 0");
  expect(present(cal / "calibrated.json"), "calibrate writes the updated config");

  // Re-running eval reproduces the same report modulo the header timestamp.
  {
    fs::path eval2 = root / "eval2";
    expect(run("eval " + base + " --data " + data.string() + " --tree " + tree.string() +
               " --out " + eval2.string()) == 0,
           "second eval exits 0");
    auto body = [](const fs::path& p) {
      std::string text = slurp(p);
      return text.substr(text.find('\n') + 1);  // drop the timestamp line
    };
    expect(body(eval / "report.csv") == body(eval2 / "report.csv"),
           "eval reports are byte-identical below the timestamp line");
    expect(slurp(eval / "report.json") == slurp(eval2 / "report.json"),
           "eval json is byte-identical");
  }

  // Error paths: unknown flags exit 1, missing data exits 2, bad config key 1.
  expect(run("eval --frobnicate") == 1, "unknown flag exits 1");
  expect(run("gen-data --out " + (root / "z").string()) == 1, "missing --config exits 1");
  expect(run("build " + base + " --data /nonexistent --out " + (root / "x").string()) == 2,
         "missing dataset exits 2");
  expect(run("gen-data " + base + " --set nope=1 --out " + (root / "y").string()) == 1,
         "unknown config key exits 1");
  expect(run("") == 1, "no subcommand exits 1");

  if (failures == 0) fs::remove_all(root);
  std::printf("%s\n", failures == 0 ? "CLI E2E PASSED" : "CLI E2E FAILED");
  return failures == 0 ? 0 : 1;
}
