#include "falcon/falcon.h"

#include <cstring>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "neue.hpp"
#include "select.hpp"
#include "tree.hpp"

using nlohmann::json;

struct falcon_config_s {
  falcon::RunConfig cfg;
};

struct falcon_dataset_s {
  falcon::Dataset ds;
};

struct falcon_model_s {
  falcon::MlpModel model;
  falcon::TrainStats stats;
};

struct falcon_tree_s {
  falcon::FalconTree tree;
  falcon::BuildRecord record;
};

namespace {

thread_local std::string g_lastError;

char* dupString(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
falcon_status wrap(Fn&& fn) {
  try {
    fn();
    return FALCON_OK;
  } catch (const falcon::ArgumentError& e) {
    g_lastError = e.what();
    return FALCON_E_ARGUMENT;
  } catch (const falcon::FormatError& e) {
    g_lastError = e.what();
    return FALCON_E_FORMAT;
  } catch (const falcon::StructuralError& e) {
    g_lastError = e.what();
    return FALCON_E_STRUCTURE;
  } catch (const falcon::DivergenceError& e) {
    g_lastError = e.what();
    return FALCON_E_DIVERGENCE;
  } catch (const falcon::CalibrationError& e) {
    g_lastError = e.what();
    return FALCON_E_CALIBRATION;
  } catch (const falcon::IoError& e) {
    g_lastError = e.what();
    return FALCON_E_IO;
  } catch (const std::exception& e) {
    g_lastError = e.what();
    return FALCON_E_STRUCTURE;
  }
}

falcon_status requireArgs(bool ok) {
  if (!ok) {
    g_lastError = "null argument";
    return FALCON_E_ARGUMENT;
  }
  return FALCON_OK;
}

std::vector<std::string> splitCsvList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json buildRecordToJson(const falcon::BuildRecord& record) {
  json nodes = json::array();
  for (const auto& n : record.nodes)
    nodes.push_back({{"nodeId", n.nodeId},
                     {"weightUpdateMacs", n.weightUpdateMacs},
                     {"reused", n.reused}});
  return {{"nodes", std::move(nodes)},
          {"probeTrainMacs", record.probeTrainMacs},
          {"warnings", record.warnings}};
}

// Accuracy and constant per-input OPS of the flat baseline on one split.
falcon::EvalSummary baselineSummary(const falcon::MlpModel& model,
                                    const falcon::Dataset& ds, falcon::Split split) {
  std::vector<std::size_t> indices = ds.indicesOf(split);
  if (indices.empty()) throw falcon::ArgumentError("baseline evaluation: empty split");
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    const falcon::DatasetItem& item = ds.items[idx];
    std::vector<double> input;
    input.reserve(item.image.pixels.size());
    for (std::uint8_t p : item.image.pixels) input.push_back(p / 255.0);
    std::vector<double> out = falcon::forward(model, input);
    int arg = static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
    if (arg == item.classId) ++correct;
  }
  falcon::EvalSummary summary;
  summary.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  summary.avgOps = static_cast<double>(falcon::countMac(model.topology));
  return summary;
}

falcon::FeatureAssignment runSelection(const falcon::RunConfig& cfg, const falcon::Dataset& ds,
                                       std::uint64_t* probeMacs) {
  falcon::ProbeSet probes = falcon::trainProbeModels(ds, cfg.select);
  if (probeMacs) *probeMacs = probes.totalTrainMacs;
  falcon::ConfidenceTable table = falcon::scoreClasses(probes, ds, cfg.select);
  return falcon::assignFromConfidences(table, cfg.select.delta);
}

}  // namespace

extern "C" {

const char* falcon_status_name(falcon_status status) {
  switch (status) {
    case FALCON_OK: return "ok";
    case FALCON_E_ARGUMENT: return "argument-error";
    case FALCON_E_FORMAT: return "format-error";
    case FALCON_E_STRUCTURE: return "structural-error";
    case FALCON_E_DIVERGENCE: return "divergence-error";
    case FALCON_E_CALIBRATION: return "calibration-error";
    case FALCON_E_IO: return "io-error";
  }
  return "unknown";
}

const char* falcon_last_error(void) { return g_lastError.c_str(); }

void falcon_string_free(char* s) { delete[] s; }

falcon_status falcon_config_create(falcon_config** out) {
  if (auto s = requireArgs(out != nullptr)) return s;
  return wrap([&] { *out = new falcon_config_s{falcon::defaultRunConfig()}; });
}

falcon_status falcon_config_load(const char* path, falcon_config** out) {
  if (auto s = requireArgs(path && out)) return s;
  return wrap([&] { *out = new falcon_config_s{falcon::loadRunConfig(path)}; });
}

falcon_status falcon_config_set(falcon_config* cfg, const char* key, const char* value) {
  if (auto s = requireArgs(cfg && key && value)) return s;
  return wrap([&] { falcon::setRunConfigKey(cfg->cfg, key, value); });
}

falcon_status falcon_config_to_json(const falcon_config* cfg, char** json_out) {
  if (auto s = requireArgs(cfg && json_out)) return s;
  return wrap([&] { *json_out = dupString(falcon::runConfigToJson(cfg->cfg)); });
}

void falcon_config_free(falcon_config* cfg) { delete cfg; }

falcon_status falcon_dataset_generate(const falcon_config* cfg, falcon_dataset** out) {
  if (auto s = requireArgs(cfg && out)) return s;
  return wrap([&] { *out = new falcon_dataset_s{falcon::genSynthetic(cfg->cfg.data)}; });
}

falcon_status falcon_dataset_open(const char* path, falcon_dataset** out) {
  if (auto s = requireArgs(path && out)) return s;
  return wrap([&] { *out = new falcon_dataset_s{falcon::openDataset(path)}; });
}

falcon_status falcon_dataset_open_cifar(const char* const* files, size_t count,
                                        falcon_dataset** out) {
  if (auto s = requireArgs(files && count > 0 && out)) return s;
  return wrap([&] {
    std::vector<std::string> paths(files, files + count);
    *out = new falcon_dataset_s{falcon::loadCifarBin(paths)};
  });
}

falcon_status falcon_dataset_write(const falcon_dataset* ds, const char* dir) {
  if (auto s = requireArgs(ds && dir)) return s;
  return wrap([&] { falcon::writeDataset(ds->ds, dir); });
}

falcon_status falcon_dataset_resize(const falcon_dataset* ds, int width, int height,
                                    falcon_dataset** out) {
  if (auto s = requireArgs(ds && out)) return s;
  return wrap([&] { *out = new falcon_dataset_s{falcon::resizeAll(ds->ds, width, height)}; });
}

size_t falcon_dataset_item_count(const falcon_dataset* ds) {
  return ds ? ds->ds.items.size() : 0;
}

size_t falcon_dataset_class_count(const falcon_dataset* ds) {
  return ds ? ds->ds.classNames.size() : 0;
}

falcon_status falcon_dataset_class_name(const falcon_dataset* ds, size_t index, char** out) {
  if (auto s = requireArgs(ds && out)) return s;
  return wrap([&] {
    if (index >= ds->ds.classNames.size())
      throw falcon::ArgumentError("class index out of range");
    *out = dupString(ds->ds.classNames[index]);
  });
}

void falcon_dataset_free(falcon_dataset* ds) { delete ds; }

falcon_status falcon_features_csv(const falcon_config* cfg, const falcon_dataset* ds,
                                  const char* kind, char** csv_out) {
  if (auto s = requireArgs(cfg && ds && kind && csv_out)) return s;
  return wrap([&] {
    falcon::FeatureKind k = falcon::parseFeatureKind(kind);
    std::ostringstream os;
    os << "item,class,split,values\n";
    for (std::size_t i = 0; i < ds->ds.items.size(); ++i) {
      const falcon::DatasetItem& item = ds->ds.items[i];
      falcon::FeatureVector fv =
          falcon::extractFeature(item.image, k, cfg->cfg.grid, cfg->cfg.bank);
      os << i << "," << ds->ds.classNames[static_cast<std::size_t>(item.classId)] << ","
         << falcon::splitName(item.split) << ",";
      for (std::size_t v = 0; v < fv.values.size(); ++v)
        os << (v ? ";" : "") << fv.values[v];
      os << "\n";
    }
    *csv_out = dupString(os.str());
  });
}

falcon_status falcon_feature_ops(const falcon_config* cfg, const char* kind, int width,
                                 int height, uint64_t* ops_out) {
  if (auto s = requireArgs(cfg && kind && ops_out)) return s;
  return wrap([&] {
    *ops_out = falcon::featureExtractionOps(falcon::parseFeatureKind(kind), width, height,
                                            cfg->cfg.grid, cfg->cfg.bank,
                                            cfg->cfg.featureCost);
  });
}

falcon_status falcon_select(const falcon_config* cfg, const falcon_dataset* ds,
                            char** assignment_csv_out) {
  if (auto s = requireArgs(cfg && ds && assignment_csv_out)) return s;
  return wrap([&] {
    falcon::FeatureAssignment assignment = runSelection(cfg->cfg, ds->ds, nullptr);
    *assignment_csv_out = dupString(falcon::assignmentToCsv(assignment));
  });
}

falcon_status falcon_model_load(const char* path, falcon_model** out) {
  if (auto s = requireArgs(path && out)) return s;
  return wrap([&] { *out = new falcon_model_s{falcon::loadModel(path), {}}; });
}

falcon_status falcon_model_save(const falcon_model* model, const char* path) {
  if (auto s = requireArgs(model && path)) return s;
  return wrap([&] { falcon::saveModel(model->model, path); });
}

falcon_status falcon_model_train_baseline(const falcon_config* cfg, const falcon_dataset* ds,
                                          falcon_model** out, char** stats_json_out) {
  if (auto s = requireArgs(cfg && ds && out)) return s;
  return wrap([&] {
    falcon::BaselineResult r = falcon::trainBaseline(ds->ds, cfg->cfg.tree);
    if (stats_json_out) {
      json j = {{"finalLoss", r.stats.finalLoss},
                {"weightUpdateMacs", r.stats.weightUpdateMacs},
                {"epochs", r.stats.lossTrace.size()}};
      *stats_json_out = dupString(j.dump(2) + "\n");
    }
    *out = new falcon_model_s{std::move(r.model), std::move(r.stats)};
  });
}

void falcon_model_free(falcon_model* model) { delete model; }

falcon_status falcon_tree_build(const falcon_config* cfg, const falcon_dataset* ds,
                                const char* assignment_csv, falcon_tree** out,
                                char** build_json_out) {
  if (auto s = requireArgs(cfg && ds && out)) return s;
  return wrap([&] {
    std::uint64_t probeMacs = 0;
    falcon::FeatureAssignment assignment =
        assignment_csv ? falcon::assignmentFromCsv(assignment_csv)
                       : runSelection(cfg->cfg, ds->ds, &probeMacs);
    falcon::Grouping grouping = falcon::groupClasses(assignment);
    std::optional<falcon::MlpModel> baseline;
    std::uint64_t baselineMacs = 0;
    if (cfg->cfg.tree.withBaseline) {
      falcon::BaselineResult r = falcon::trainBaseline(ds->ds, cfg->cfg.tree);
      baselineMacs = r.stats.weightUpdateMacs;
      baseline = std::move(r.model);
    }
    falcon::BuildResult result = falcon::buildTree(ds->ds, grouping, cfg->cfg.tree, baseline);
    result.record.probeTrainMacs = probeMacs;
    // The baseline is trained here rather than supplied pre-trained, so its
    // cost belongs to this build.
    for (auto& n : result.record.nodes)
      if (n.nodeId == "baseline" && baselineMacs > 0) {
        n.weightUpdateMacs = baselineMacs;
        n.reused = false;
      }
    if (build_json_out)
      *build_json_out = dupString(buildRecordToJson(result.record).dump(2) + "\n");
    *out = new falcon_tree_s{std::move(result.tree), std::move(result.record)};
  });
}

falcon_status falcon_tree_open(const char* path, falcon_tree** out) {
  if (auto s = requireArgs(path && out)) return s;
  return wrap([&] { *out = new falcon_tree_s{falcon::openTree(path), {}}; });
}

falcon_status falcon_tree_write(const falcon_tree* tree, const char* dir) {
  if (auto s = requireArgs(tree && dir)) return s;
  return wrap([&] { falcon::writeTree(tree->tree, dir); });
}

falcon_status falcon_tree_merge(const falcon_tree* const* trees, size_t count,
                                const falcon_model* baseline, const char* baseline_labels,
                                double delta, int strict_not_found, falcon_tree** out) {
  if (auto s = requireArgs(trees && count > 0 && out)) return s;
  return wrap([&] {
    std::vector<const falcon::FalconTree*> inputs;
    for (size_t i = 0; i < count; ++i) inputs.push_back(&trees[i]->tree);
    std::optional<falcon::BaselineSpec> spec;
    if (baseline) {
      if (!baseline_labels)
        throw falcon::ArgumentError("falcon_tree_merge: baseline needs its label list");
      spec = falcon::BaselineSpec{baseline->model, splitCsvList(baseline_labels)};
    }
    falcon::MergeConfig mcfg{delta, strict_not_found != 0};
    falcon::BuildResult result = falcon::mergeTrees(inputs, mcfg, spec);
    *out = new falcon_tree_s{std::move(result.tree), std::move(result.record)};
  });
}

falcon_status falcon_tree_extend(const falcon_config* cfg, const falcon_tree* tree,
                                 const falcon_dataset* ds, const char* classes,
                                 const char* kind, const char* strategy, falcon_tree** out,
                                 char** build_json_out) {
  if (auto s = requireArgs(cfg && tree && ds && classes && kind && strategy && out)) return s;
  return wrap([&] {
    falcon::ExtensionStrategy strat;
    if (std::string(strategy) == "retrain-final")
      strat = falcon::ExtensionStrategy::RetrainFinal;
    else if (std::string(strategy) == "add-new-node")
      strat = falcon::ExtensionStrategy::AddNewNode;
    else
      throw falcon::ArgumentError("unknown strategy: " + std::string(strategy) +
                                  " (want retrain-final or add-new-node)");
    falcon::BuildResult result =
        falcon::extendTree(tree->tree, ds->ds, splitCsvList(classes),
                           falcon::parseFeatureKind(kind), strat, cfg->cfg.tree);
    if (build_json_out)
      *build_json_out = dupString(buildRecordToJson(result.record).dump(2) + "\n");
    *out = new falcon_tree_s{std::move(result.tree), std::move(result.record)};
  });
}

falcon_status falcon_tree_plan_extension(const falcon_config* cfg, const falcon_tree* tree,
                                         int new_class_count, const char* kind,
                                         char** json_out) {
  if (auto s = requireArgs(cfg && tree && kind && json_out)) return s;
  return wrap([&] {
    falcon::ExtensionPlan plan = falcon::planExtension(
        tree->tree, new_class_count, falcon::parseFeatureKind(kind), cfg->cfg.tree);
    json j = {{"opsRetrain", plan.opsRetrain},
              {"opsAddNewNode", plan.opsAddNewNode},
              {"recommendation", falcon::extensionStrategyName(plan.recommendation)}};
    *json_out = dupString(j.dump(2) + "\n");
  });
}

falcon_status falcon_tree_classify_item(const falcon_tree* tree, const falcon_dataset* ds,
                                        size_t index, char** json_out) {
  if (auto s = requireArgs(tree && ds && json_out)) return s;
  return wrap([&] {
    if (index >= ds->ds.items.size())
      throw falcon::ArgumentError("item index out of range");
    const falcon::DatasetItem& item = ds->ds.items[index];
    falcon::ClassifyResult r = falcon::classify(tree->tree, item.image);
    json j;
    j["label"] = r.label ? json(*r.label) : json(nullptr);
    j["truth"] = ds->ds.classNames[static_cast<std::size_t>(item.classId)];
    j["activatedNodeIds"] = r.trace.activatedNodeIds;
    j["totalMacs"] = r.trace.totalMacs;
    j["featureOps"] = r.trace.featureOps;
    j["initialConfidences"] = r.trace.initialConfidences;
    switch (r.trace.routedVia.kind) {
      case falcon::RoutedVia::Kind::Final:
        j["routedVia"] = {{"kind", "final"},
                          {"initial", r.trace.routedVia.initialId},
                          {"output", r.trace.routedVia.outputIndex}};
        break;
      case falcon::RoutedVia::Kind::Baseline: j["routedVia"] = {{"kind", "baseline"}}; break;
      case falcon::RoutedVia::Kind::NotFound: j["routedVia"] = {{"kind", "not-found"}}; break;
    }
    *json_out = dupString(j.dump(2) + "\n");
  });
}

falcon_status falcon_tree_evaluate(const falcon_config* cfg, const falcon_tree* tree,
                                   const falcon_dataset* ds, const falcon_model* baseline,
                                   char** json_out, char** csv_out) {
  if (auto s = requireArgs(cfg && tree && ds)) return s;
  return wrap([&] {
    falcon::EvalReport report = falcon::evaluate(tree->tree, ds->ds, falcon::Split::Test);
    json j = json::parse(falcon::evalReportToJson(report, "falcon"));
    std::string csv = falcon::evalReportToCsv(report, "falcon");
    if (baseline) {
      falcon::EvalSummary base = baselineSummary(baseline->model, ds->ds, falcon::Split::Test);
      falcon::EvalSummary mine{report.avgOpsPerInput, 0.0, report.accuracy};
      falcon::BenefitReport benefit = falcon::normalizedBenefit(mine, base);
      j["baseline"] = {{"accuracy", base.accuracy}, {"avgOpsPerInput", base.avgOps}};
      j["benefit"] = {{"normalizedOps", benefit.normalizedOps},
                      {"accuracyDeltaPoints", benefit.accuracyDelta}};
      std::ostringstream extra;
      extra << "baseline," << report.instances << "," << base.accuracy << "," << base.avgOps
            << ",0,0\n";
      csv += extra.str();
    }
    if (json_out) *json_out = dupString(j.dump(2) + "\n");
    if (csv_out) *csv_out = dupString(csv);
  });
}

falcon_status falcon_tree_sweep_delta(const falcon_config* cfg, const falcon_tree* tree,
                                      const falcon_dataset* ds, const double* deltas,
                                      size_t count, int with_energy, char** csv_out) {
  if (auto s = requireArgs(cfg && tree && ds && deltas && count > 0 && csv_out)) return s;
  return wrap([&] {
    std::vector<double> ds_deltas(deltas, deltas + count);
    std::vector<falcon::DeltaSweepRow> rows =
        falcon::sweepDelta(tree->tree, ds->ds, falcon::Split::Test, ds_deltas);
    std::vector<double> energies;
    if (with_energy)
      energies = falcon::sweepEnergy(cfg->cfg.neue, tree->tree, ds->ds, falcon::Split::Test,
                                     ds_deltas);
    *csv_out = dupString(falcon::sweepToCsv(rows, energies));
  });
}

falcon_status falcon_tree_training_cost(const falcon_tree* tree,
                                        uint64_t baseline_update_macs, char** json_out) {
  if (auto s = requireArgs(tree && json_out)) return s;
  return wrap([&] {
    falcon::TrainingCostReport report =
        falcon::trainingCost(tree->record, baseline_update_macs);
    json perNode = json::object();
    for (const auto& [id, macs] : report.perNodeUpdateMacs) perNode[id] = macs;
    json j = {{"perNodeUpdateMacs", std::move(perNode)},
              {"reusedNodeIds", report.reusedNodeIds},
              {"probeOverheadMacs", report.probeOverheadMacs},
              {"totalUpdateMacs", report.totalUpdateMacs},
              {"normalizedVsBaseline", report.normalizedVsBaseline}};
    *json_out = dupString(j.dump(2) + "\n");
  });
}

void falcon_tree_free(falcon_tree* tree) { delete tree; }

falcon_status falcon_simulate_model(const falcon_config* cfg, const falcon_model* model,
                                    const double* input, size_t input_len,
                                    const char* trace_path, char** json_out) {
  if (auto s = requireArgs(cfg && model && json_out)) return s;
  return wrap([&] {
    std::vector<double> in;
    if (input) {
      in.assign(input, input + input_len);
    } else {
      in.assign(static_cast<std::size_t>(model->model.inputWidth()), 0.5);
    }
    falcon::MlpModel engine = model->model;
    if (engine.activation.kind != falcon::ActivationKind::PwlSigmoid)
      engine = falcon::withPwlActivation(engine, falcon::defaultPwlTable());
    std::unique_ptr<falcon::FileTraceSink> sink;
    if (trace_path) sink = std::make_unique<falcon::FileTraceSink>(trace_path);
    falcon::SimResult result =
        falcon::simulateInference(cfg->cfg.neue, engine, in, sink.get());
    *json_out = dupString(falcon::simResultToJson(result));
  });
}

falcon_status falcon_simulate_tree_item(const falcon_config* cfg, const falcon_tree* tree,
                                        const falcon_dataset* ds, size_t index,
                                        const char* trace_path, char** json_out) {
  if (auto s = requireArgs(cfg && tree && ds && json_out)) return s;
  return wrap([&] {
    if (index >= ds->ds.items.size())
      throw falcon::ArgumentError("item index out of range");
    std::unique_ptr<falcon::FileTraceSink> sink;
    if (trace_path) sink = std::make_unique<falcon::FileTraceSink>(trace_path);
    falcon::SimResult result = falcon::simulateTree(cfg->cfg.neue, tree->tree,
                                                    ds->ds.items[index].image, sink.get());
    *json_out = dupString(falcon::simResultToJson(result));
  });
}

falcon_status falcon_calibrate(const falcon_config* cfg, const falcon_model* representative,
                               double target_exec_share, double tolerance, char** json_out) {
  if (auto s = requireArgs(cfg && representative && json_out)) return s;
  return wrap([&] {
    falcon::NeueConfig calibrated = falcon::calibrateCostTable(
        cfg->cfg.neue, representative->model, target_exec_share, tolerance);
    falcon::RunConfig updated = cfg->cfg;
    updated.neue = calibrated;
    json j = json::parse(falcon::runConfigToJson(updated));
    *json_out = dupString(j.dump(2) + "\n");
  });
}

}  // extern "C"
