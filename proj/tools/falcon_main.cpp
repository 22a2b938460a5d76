// falcon - command line front end over the libfalcon C API.
//
// Every subcommand reads a run configuration (--config, overridable with
// repeated --set key=value) and writes its artifacts under --out.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "falcon/falcon.h"

namespace {

namespace fs = std::filesystem;

// Exit codes: 0 ok, 1 argument error, 2 data/format error.
int exitCodeFor(falcon_status status) {
  switch (status) {
    case FALCON_OK: return 0;
    case FALCON_E_ARGUMENT: return 1;
    case FALCON_E_FORMAT:
    case FALCON_E_IO: return 2;
    default: return 2;
  }
}

[[noreturn]] void fail(falcon_status status) {
  std::cerr << "falcon: " << falcon_status_name(status) << ": " << falcon_last_error() << "\n";
  std::exit(exitCodeFor(status));
}

void check(falcon_status status) {
  if (status != FALCON_OK) fail(status);
}

struct StringOut {
  char* value = nullptr;
  ~StringOut() { falcon_string_free(value); }
  std::string str() const { return value ? value : ""; }
};

struct ConfigHandle {
  falcon_config* get = nullptr;
  ~ConfigHandle() { falcon_config_free(get); }
};

struct DatasetHandle {
  falcon_dataset* get = nullptr;
  ~DatasetHandle() { falcon_dataset_free(get); }
};

struct ModelHandle {
  falcon_model* get = nullptr;
  ~ModelHandle() { falcon_model_free(get); }
};

struct TreeHandle {
  falcon_tree* get = nullptr;
  ~TreeHandle() { falcon_tree_free(get); }
};

struct CommonOpts {
  std::string configPath;
  std::vector<std::string> sets;
  std::string outDir;
};

void addCommon(CLI::App* cmd, CommonOpts& opts, bool outRequired = true) {
  cmd->add_option("--config", opts.configPath, "run configuration JSON file")->required();
  cmd->add_option("--set", opts.sets, "override a config key, e.g. --set tree.delta=0.4");
  auto* out = cmd->add_option("--out", opts.outDir, "output directory");
  if (outRequired) out->required();
}

void loadConfig(const CommonOpts& opts, ConfigHandle& cfg) {
  check(falcon_config_load(opts.configPath.c_str(), &cfg.get));
  for (const std::string& kv : opts.sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "falcon: --set wants key=value, got: " << kv << "\n";
      std::exit(1);
    }
    check(falcon_config_set(cfg.get, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
}

void writeFile(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    std::cerr << "falcon: cannot write " << path << "\n";
    std::exit(2);
  }
  os << content;
}

// Reports start with a timestamp comment so the payload below stays
// byte-reproducible.
std::string stamped(const std::string& body) {
  char buf[64];
  std::time_t now = std::time(nullptr);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return std::string("# generated ") + buf + "\n" + body;
}

void dumpResolvedConfig(const ConfigHandle& cfg, const std::string& outDir) {
  StringOut json;
  check(falcon_config_to_json(cfg.get, &json.value));
  writeFile(fs::path(outDir) / "config.json", json.str());
}

DatasetHandle openData(const std::string& dataPath, const ConfigHandle& cfg) {
  DatasetHandle ds;
  if (dataPath.size() > 4 && dataPath.substr(dataPath.size() - 4) == ".bin") {
    const char* files[] = {dataPath.c_str()};
    check(falcon_dataset_open_cifar(files, 1, &ds.get));
  } else {
    check(falcon_dataset_open(dataPath.c_str(), &ds.get));
  }
  // Honour the config's resize section (0 = leave images alone).
  StringOut json;
  check(falcon_config_to_json(cfg.get, &json.value));
  std::string text = json.str();
  auto intAfter = [&](const std::string& key) -> int {
    std::size_t at = text.find("\"resize\"");
    if (at == std::string::npos) return 0;
    at = text.find(key, at);
    if (at == std::string::npos) return 0;
    at = text.find(':', at);
    return at == std::string::npos ? 0 : std::atoi(text.c_str() + at + 1);
  };
  int w = intAfter("\"width\""), h = intAfter("\"height\"");
  if (w > 0 && h > 0) {
    DatasetHandle resized;
    check(falcon_dataset_resize(ds.get, w, h, &resized.get));
    std::swap(ds.get, resized.get);
  }
  return ds;
}

std::vector<double> parseDeltas(const std::string& spec) {
  std::vector<double> deltas;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) deltas.push_back(std::stod(tok));
  if (deltas.empty()) {
    std::cerr << "falcon: --deltas wants a comma-separated list\n";
    std::exit(1);
  }
  return deltas;
}

// "x y" rows for plotting, one series per file.
void emitSeries(const std::string& csv, const fs::path& dir, const std::string& xColumn,
                const std::vector<std::string>& yColumns) {
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  std::vector<std::string> columns;
  std::stringstream hs(header);
  std::string col;
  while (std::getline(hs, col, ',')) columns.push_back(col);
  auto indexOf = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  };
  int xi = indexOf(xColumn);
  for (const std::string& yName : yColumns) {
    int yi = indexOf(yName);
    if (xi < 0 || yi < 0) continue;
    std::ostringstream series;
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (static_cast<int>(cells.size()) > std::max(xi, yi))
        series << cells[static_cast<std::size_t>(xi)] << " "
               << cells[static_cast<std::size_t>(yi)] << "\n";
    }
    writeFile(dir / (xColumn + "_vs_" + yName + ".xy"), series.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FALCON: feature-driven selective classification toolkit"};
  app.require_subcommand(1);

  // gen-data
  CommonOpts genOpts;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  addCommon(gen, genOpts);

  // features
  CommonOpts featOpts;
  std::string featData, featKind;
  auto* features = app.add_subcommand("features", "dump feature vectors of one kind");
  addCommon(features, featOpts);
  features->add_option("--data", featData, "dataset directory or cifar .bin")->required();
  features->add_option("--kind", featKind, "feature kind, e.g. color:red or texture:45")
      ->required();

  // select
  CommonOpts selOpts;
  std::string selData;
  auto* select = app.add_subcommand("select", "train probes and assign features to classes");
  addCommon(select, selOpts);
  select->add_option("--data", selData, "dataset directory or cifar .bin")->required();

  // build
  CommonOpts buildOpts;
  std::string buildData, buildAssignment;
  auto* build = app.add_subcommand("build", "construct and train a falcon tree");
  addCommon(build, buildOpts);
  build->add_option("--data", buildData, "dataset directory or cifar .bin")->required();
  build->add_option("--assignment", buildAssignment,
                    "assignment CSV from `falcon select` (runs selection when omitted)");

  // eval
  CommonOpts evalOpts;
  std::string evalData, evalTree, evalBaseline;
  bool evalPlot = false;
  auto* eval = app.add_subcommand("eval", "evaluate a tree on the test split");
  addCommon(eval, evalOpts);
  eval->add_option("--data", evalData, "dataset directory or cifar .bin")->required();
  eval->add_option("--tree", evalTree, "tree directory from `falcon build`")->required();
  eval->add_option("--baseline", evalBaseline, "baseline model file for benefit reporting");
  eval->add_flag("--emit-plot", evalPlot, "also write (x,y) series files");

  // sweep-delta
  CommonOpts sweepOpts;
  std::string sweepData, sweepTree, sweepDeltas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.01";
  bool sweepPlot = false, sweepEnergyFlag = false;
  auto* sweep = app.add_subcommand("sweep-delta", "evaluate across divergence thresholds");
  addCommon(sweep, sweepOpts);
  sweep->add_option("--data", sweepData, "dataset directory or cifar .bin")->required();
  sweep->add_option("--tree", sweepTree, "tree directory (must carry a baseline node)")
      ->required();
  sweep->add_option("--deltas", sweepDeltas, "comma-separated divergence values");
  sweep->add_flag("--energy", sweepEnergyFlag, "also simulate per-delta NeuE energy");
  sweep->add_flag("--emit-plot", sweepPlot, "also write (x,y) series files");

  // simulate
  CommonOpts simOpts;
  std::string simData, simTree, simModel;
  std::size_t simIndex = 0;
  bool simTrace = false;
  auto* simulate = app.add_subcommand("simulate", "run the NeuE event-level simulator");
  addCommon(simulate, simOpts);
  simulate->add_option("--data", simData, "dataset directory or cifar .bin");
  simulate->add_option("--tree", simTree, "tree directory (tree mode)");
  simulate->add_option("--model", simModel, "model file (single-network mode)");
  simulate->add_option("--index", simIndex, "dataset item to simulate");
  simulate->add_flag("--trace", simTrace, "write the event log next to the summary");

  // extend
  CommonOpts extOpts;
  std::string extData, extTree, extClasses, extKind, extStrategy = "auto";
  auto* extend = app.add_subcommand("extend", "add new classes to an existing tree");
  addCommon(extend, extOpts);
  extend->add_option("--data", extData, "dataset covering old and new classes")->required();
  extend->add_option("--tree", extTree, "tree directory")->required();
  extend->add_option("--classes", extClasses, "comma-separated new class names")->required();
  extend->add_option("--kind", extKind, "feature kind the new classes share")->required();
  extend->add_option("--strategy", extStrategy,
                     "retrain-final | add-new-node | auto (use the plan's recommendation)");

  // calibrate
  CommonOpts calOpts;
  std::string calModel;
  double calTarget = 0.7892, calTolerance = 0.05;
  auto* calibrate = app.add_subcommand("calibrate", "fit the NeuE cost table's exec share");
  addCommon(calibrate, calOpts);
  calibrate->add_option("--model", calModel, "representative model file")->required();
  calibrate->add_option("--target", calTarget, "target exec energy share");
  calibrate->add_option("--tolerance", calTolerance, "acceptable share deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    ConfigHandle cfg;
    loadConfig(genOpts, cfg);
    DatasetHandle ds;
    check(falcon_dataset_generate(cfg.get, &ds.get));
    check(falcon_dataset_write(ds.get, genOpts.outDir.c_str()));
    dumpResolvedConfig(cfg, genOpts.outDir);
    std::cout << "wrote " << falcon_dataset_item_count(ds.get) << " images across "
              << falcon_dataset_class_count(ds.get) << " classes to " << genOpts.outDir << "\n";
    return 0;
  }

  if (features->parsed()) {
    ConfigHandle cfg;
    loadConfig(featOpts, cfg);
    DatasetHandle ds = openData(featData, cfg);
    StringOut csv;
    check(falcon_features_csv(cfg.get, ds.get, featKind.c_str(), &csv.value));
    std::string name = featKind;
    for (char& c : name)
      if (c == ':') c = '-';
    writeFile(fs::path(featOpts.outDir) / ("features_" + name + ".csv"), stamped(csv.str()));
    std::cout << "wrote features_" << name << ".csv\n";
    return 0;
  }

  if (select->parsed()) {
    ConfigHandle cfg;
    loadConfig(selOpts, cfg);
    DatasetHandle ds = openData(selData, cfg);
    StringOut csv;
    check(falcon_select(cfg.get, ds.get, &csv.value));
    writeFile(fs::path(selOpts.outDir) / "assignment.csv", csv.str());
    std::cout << csv.str();
    return 0;
  }

  if (build->parsed()) {
    ConfigHandle cfg;
    loadConfig(buildOpts, cfg);
    DatasetHandle ds = openData(buildData, cfg);
    std::string assignment;
    if (!buildAssignment.empty()) {
      std::ifstream is(buildAssignment);
      if (!is) {
        std::cerr << "falcon: cannot open " << buildAssignment << "\n";
        return 2;
      }
      std::ostringstream buf;
      buf << is.rdbuf();
      assignment = buf.str();
    }
    TreeHandle tree;
    StringOut record;
    check(falcon_tree_build(cfg.get, ds.get, assignment.empty() ? nullptr : assignment.c_str(),
                            &tree.get, &record.value));
    check(falcon_tree_write(tree.get, buildOpts.outDir.c_str()));
    writeFile(fs::path(buildOpts.outDir) / "build_record.json", record.str());
    StringOut cost;
    check(falcon_tree_training_cost(tree.get, 0, &cost.value));
    writeFile(fs::path(buildOpts.outDir) / "training_cost.json", cost.str());
    dumpResolvedConfig(cfg, buildOpts.outDir);
    std::cout << "tree written to " << buildOpts.outDir << "\n";
    return 0;
  }

  if (eval->parsed()) {
    ConfigHandle cfg;
    loadConfig(evalOpts, cfg);
    DatasetHandle ds = openData(evalData, cfg);
    TreeHandle tree;
    check(falcon_tree_open(evalTree.c_str(), &tree.get));
    ModelHandle baseline;
    if (!evalBaseline.empty()) check(falcon_model_load(evalBaseline.c_str(), &baseline.get));
    StringOut json, csv;
    check(falcon_tree_evaluate(cfg.get, tree.get, ds.get, baseline.get, &json.value,
                               &csv.value));
    writeFile(fs::path(evalOpts.outDir) / "report.json", json.str());
    writeFile(fs::path(evalOpts.outDir) / "report.csv", stamped(csv.str()));
    if (evalPlot)
      emitSeries(csv.str(), fs::path(evalOpts.outDir), "label", {"avgOpsPerInput", "accuracy"});
    std::cout << json.str();
    return 0;
  }

  if (sweep->parsed()) {
    ConfigHandle cfg;
    loadConfig(sweepOpts, cfg);
    DatasetHandle ds = openData(sweepData, cfg);
    TreeHandle tree;
    check(falcon_tree_open(sweepTree.c_str(), &tree.get));
    std::vector<double> deltas = parseDeltas(sweepDeltas);
    StringOut csv;
    check(falcon_tree_sweep_delta(cfg.get, tree.get, ds.get, deltas.data(), deltas.size(),
                                  sweepEnergyFlag ? 1 : 0, &csv.value));
    writeFile(fs::path(sweepOpts.outDir) / "sweep.csv", stamped(csv.str()));
    if (sweepPlot)
      emitSeries(csv.str(), fs::path(sweepOpts.outDir), "delta",
                 {"accuracy", "avgOps", "baselineRate", "avgEnergy"});
    std::cout << csv.str();
    return 0;
  }

  if (simulate->parsed()) {
    ConfigHandle cfg;
    loadConfig(simOpts, cfg);
    std::string tracePath =
        simTrace ? (fs::path(simOpts.outDir) / "trace.log").string() : std::string();
    fs::create_directories(simOpts.outDir);
    StringOut json;
    if (!simTree.empty()) {
      if (simData.empty()) {
        std::cerr << "falcon: simulate --tree needs --data\n";
        return 1;
      }
      TreeHandle tree;
      check(falcon_tree_open(simTree.c_str(), &tree.get));
      DatasetHandle ds = openData(simData, cfg);
      check(falcon_simulate_tree_item(cfg.get, tree.get, ds.get, simIndex,
                                      tracePath.empty() ? nullptr : tracePath.c_str(),
                                      &json.value));
    } else if (!simModel.empty()) {
      ModelHandle model;
      check(falcon_model_load(simModel.c_str(), &model.get));
      check(falcon_simulate_model(cfg.get, model.get, nullptr, 0,
                                  tracePath.empty() ? nullptr : tracePath.c_str(),
                                  &json.value));
    } else {
      std::cerr << "falcon: simulate needs --tree or --model\n";
      return 1;
    }
    writeFile(fs::path(simOpts.outDir) / "sim.json", json.str());
    std::cout << json.str();
    return 0;
  }

  if (extend->parsed()) {
    ConfigHandle cfg;
    loadConfig(extOpts, cfg);
    DatasetHandle ds = openData(extData, cfg);
    TreeHandle tree;
    check(falcon_tree_open(extTree.c_str(), &tree.get));
    int newCount = 1 + static_cast<int>(std::count(extClasses.begin(), extClasses.end(), ','));
    StringOut plan;
    check(falcon_tree_plan_extension(cfg.get, tree.get, newCount, extKind.c_str(),
                                     &plan.value));
    writeFile(fs::path(extOpts.outDir) / "plan.json", plan.str());
    std::string strategy = extStrategy;
    if (strategy == "auto") {
      strategy = plan.str().find("\"add-new-node\"") != std::string::npos ? "add-new-node"
                                                                          : "retrain-final";
    }
    TreeHandle extended;
    StringOut record;
    check(falcon_tree_extend(cfg.get, tree.get, ds.get, extClasses.c_str(), extKind.c_str(),
                             strategy.c_str(), &extended.get, &record.value));
    check(falcon_tree_write(extended.get, extOpts.outDir.c_str()));
    writeFile(fs::path(extOpts.outDir) / "build_record.json", record.str());
    std::cout << "extended tree (" << strategy << ") written to " << extOpts.outDir << "\n";
    return 0;
  }

  if (calibrate->parsed()) {
    ConfigHandle cfg;
    loadConfig(calOpts, cfg);
    ModelHandle model;
    check(falcon_model_load(calModel.c_str(), &model.get));
    StringOut json;
    check(falcon_calibrate(cfg.get, model.get, calTarget, calTolerance, &json.value));
    writeFile(fs::path(calOpts.outDir) / "calibrated.json", json.str());
    std::cout << json.str();
    return 0;
  }

  return 1;
}
