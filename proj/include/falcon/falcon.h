/* falcon.h - C API of the FALCON selective-classification toolkit.
 *
 * All objects are opaque handles created/destroyed through this interface.
 * Functions return FALCON_OK on success; on failure falcon_last_error()
 * describes what went wrong (per thread). Strings returned through char**
 * out-parameters are heap-allocated and must be released with
 * falcon_string_free().
 */
#ifndef FALCON_H
#define FALCON_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum falcon_status {
  FALCON_OK = 0,
  FALCON_E_ARGUMENT = 1,    /* value outside an operation's contract */
  FALCON_E_FORMAT = 2,      /* malformed file or payload */
  FALCON_E_STRUCTURE = 3,   /* object violates its invariants */
  FALCON_E_DIVERGENCE = 4,  /* training reached a non-finite loss */
  FALCON_E_CALIBRATION = 5, /* cost-table calibration cannot hit the target */
  FALCON_E_IO = 6           /* filesystem trouble */
} falcon_status;

typedef struct falcon_config_s falcon_config;
typedef struct falcon_dataset_s falcon_dataset;
typedef struct falcon_model_s falcon_model;
typedef struct falcon_tree_s falcon_tree;

const char* falcon_status_name(falcon_status status);
/* Message of the most recent failure on this thread; empty when none. */
const char* falcon_last_error(void);
void falcon_string_free(char* s);

/* ---- run configuration -------------------------------------------------- */

falcon_status falcon_config_create(falcon_config** out);
falcon_status falcon_config_load(const char* path, falcon_config** out);
/* Dotted key ("tree.delta", "neue.costs.sramRead", ...), JSON-encoded value. */
falcon_status falcon_config_set(falcon_config* cfg, const char* key, const char* value);
falcon_status falcon_config_to_json(const falcon_config* cfg, char** json_out);
void falcon_config_free(falcon_config* cfg);

/* ---- datasets ------------------------------------------------------------ */

/* Deterministic synthetic dataset from the config's data section. */
falcon_status falcon_dataset_generate(const falcon_config* cfg, falcon_dataset** out);
/* Directory with manifest.json + PPM files (path may name either). */
falcon_status falcon_dataset_open(const char* path, falcon_dataset** out);
/* CIFAR-10 binary batches. */
falcon_status falcon_dataset_open_cifar(const char* const* files, size_t count,
                                        falcon_dataset** out);
falcon_status falcon_dataset_write(const falcon_dataset* ds, const char* dir);
/* Nearest-neighbour rescale of every image. */
falcon_status falcon_dataset_resize(const falcon_dataset* ds, int width, int height,
                                    falcon_dataset** out);
size_t falcon_dataset_item_count(const falcon_dataset* ds);
size_t falcon_dataset_class_count(const falcon_dataset* ds);
falcon_status falcon_dataset_class_name(const falcon_dataset* ds, size_t index, char** out);
void falcon_dataset_free(falcon_dataset* ds);

/* ---- features ------------------------------------------------------------ */

/* Per-item feature vectors of one kind ("color:red", "texture:45") as CSV. */
falcon_status falcon_features_csv(const falcon_config* cfg, const falcon_dataset* ds,
                                  const char* kind, char** csv_out);
/* MAC-equivalent extraction cost for one image of the given size. */
falcon_status falcon_feature_ops(const falcon_config* cfg, const char* kind, int width,
                                 int height, uint64_t* ops_out);

/* ---- feature selection ---------------------------------------------------- */

/* Trains the probe networks, scores every class and emits the assignment
 * table as CSV rows "class,kind,confidence" (kind empty when unassigned). */
falcon_status falcon_select(const falcon_config* cfg, const falcon_dataset* ds,
                            char** assignment_csv_out);

/* ---- models --------------------------------------------------------------- */

falcon_status falcon_model_load(const char* path, falcon_model** out);
falcon_status falcon_model_save(const falcon_model* model, const char* path);
/* Single flat classifier over all classes (the comparison baseline).
 * stats_json_out (optional) reports finalLoss and weightUpdateMacs. */
falcon_status falcon_model_train_baseline(const falcon_config* cfg, const falcon_dataset* ds,
                                          falcon_model** out, char** stats_json_out);
void falcon_model_free(falcon_model* model);

/* ---- trees ---------------------------------------------------------------- */

/* Builds a tree from an assignment CSV (runs feature selection first when
 * assignment_csv is NULL). A baseline node is trained and appended when the
 * config sets tree.withBaseline. build_json_out (optional) carries the
 * per-node training record. */
falcon_status falcon_tree_build(const falcon_config* cfg, const falcon_dataset* ds,
                                const char* assignment_csv, falcon_tree** out,
                                char** build_json_out);
falcon_status falcon_tree_open(const char* path, falcon_tree** out);
falcon_status falcon_tree_write(const falcon_tree* tree, const char* dir);
/* Reuses every node of the input trees unchanged; class sets must be
 * disjoint. baseline (optional) becomes the merged tree's baseline node and
 * must cover exactly the union of classes (labels as comma-separated list). */
falcon_status falcon_tree_merge(const falcon_tree* const* trees, size_t count,
                                const falcon_model* baseline, const char* baseline_labels,
                                double delta, int strict_not_found, falcon_tree** out);
/* classes: comma-separated new class names present in the dataset; kind:
 * feature kind already routed by the tree; strategy: "retrain-final" or
 * "add-new-node". */
falcon_status falcon_tree_extend(const falcon_config* cfg, const falcon_tree* tree,
                                 const falcon_dataset* ds, const char* classes,
                                 const char* kind, const char* strategy, falcon_tree** out,
                                 char** build_json_out);
/* Closed-form OPS estimate of both extension strategies. */
falcon_status falcon_tree_plan_extension(const falcon_config* cfg, const falcon_tree* tree,
                                         int new_class_count, const char* kind,
                                         char** json_out);
falcon_status falcon_tree_classify_item(const falcon_tree* tree, const falcon_dataset* ds,
                                        size_t index, char** json_out);
/* Accuracy, avg OPS/input, activation rates; with a baseline model the
 * report includes the normalized benefit. */
falcon_status falcon_tree_evaluate(const falcon_config* cfg, const falcon_tree* tree,
                                   const falcon_dataset* ds, const falcon_model* baseline,
                                   char** json_out, char** csv_out);
/* One CSV row per delta: delta,accuracy,avgOps,baselineRate[,avgEnergy].
 * with_energy also runs the NeuE simulator per instance. */
falcon_status falcon_tree_sweep_delta(const falcon_config* cfg, const falcon_tree* tree,
                                      const falcon_dataset* ds, const double* deltas,
                                      size_t count, int with_energy, char** csv_out);
/* Training-cost report of the handle's build record; baseline_update_macs
 * may be 0 when no comparison is wanted. */
falcon_status falcon_tree_training_cost(const falcon_tree* tree,
                                        uint64_t baseline_update_macs, char** json_out);
void falcon_tree_free(falcon_tree* tree);

/* ---- NeuE simulator -------------------------------------------------------- */

/* Event-level simulation of one inference. input may be NULL for an all-0.5
 * vector; trace_path (optional) receives the line-oriented event log. */
falcon_status falcon_simulate_model(const falcon_config* cfg, const falcon_model* model,
                                    const double* input, size_t input_len,
                                    const char* trace_path, char** json_out);
/* Simulates one dataset item through the tree with selective activation. */
falcon_status falcon_simulate_tree_item(const falcon_config* cfg, const falcon_tree* tree,
                                        const falcon_dataset* ds, size_t index,
                                        const char* trace_path, char** json_out);
/* Scales the SRAM costs so the exec share of the representative workload
 * hits the target; returns the calibrated config as JSON. */
falcon_status falcon_calibrate(const falcon_config* cfg, const falcon_model* representative,
                               double target_exec_share, double tolerance, char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* FALCON_H */
