#ifndef FSM_IRL_H
#define FSM_IRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum FsmStatus {
  FSM_STATUS_OK = 0,
  FSM_STATUS_NULL_POINTER = 1,
  FSM_STATUS_INVALID_ARGUMENT = 2,
  FSM_STATUS_PARSE = 3,
  FSM_STATUS_VALIDATION = 4,
  FSM_STATUS_IO = 5,
  FSM_STATUS_NUMERIC = 6,
  FSM_STATUS_DIVERGED = 7,
  FSM_STATUS_CONFIG = 8,
  FSM_STATUS_PANIC = 9,
} FsmStatus;

// Bias levels for [`fsm_split_biased`].
typedef enum FsmBiasLevel {
  FSM_BIAS_LEVEL_NONE = 0,
  FSM_BIAS_LEVEL_SMALL = 1,
  FSM_BIAS_LEVEL_MEDIUM = 2,
  FSM_BIAS_LEVEL_BIG = 3,
} FsmBiasLevel;

// Split roles, matching the values written by [`fsm_split_roles`].
typedef enum FsmRole {
  FSM_ROLE_UNUSED = 0,
  FSM_ROLE_TRAIN = 1,
  FSM_ROLE_VALIDATION = 2,
  FSM_ROLE_TEST = 3,
} FsmRole;

// Opaque attributed graph.
typedef struct FsmGraph FsmGraph;

// Opaque trained model.
typedef struct FsmModel FsmModel;

// Opaque train/validation/test assignment.
typedef struct FsmSplit FsmSplit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fsm_version(void);

// Message of the last failure on this thread, or NULL if none. Valid until
// the next failing call on the same thread.
const char *fsm_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from a function of this library documented as returning an
// owned string, and must not be freed twice.
void fsm_string_free(char *s);

// Loads a graph from a nodes file and an edges file.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum FsmStatus fsm_graph_load(const char *nodes_path,
                              const char *edges_path,
                              struct FsmGraph **out);

// Builds a graph from row-major features (`num_nodes * num_features`),
// labels (`num_nodes`) and `num_edges` edges given as `2 * num_edges`
// endpoint ids. Edges are symmetrized and deduplicated.
//
// # Safety
// Each array must hold the stated number of elements; `out` must be
// writable.
enum FsmStatus fsm_graph_new(size_t num_nodes,
                             size_t num_features,
                             const double *features,
                             const uint32_t *labels,
                             size_t num_classes,
                             const uint64_t *edges,
                             size_t num_edges,
                             struct FsmGraph **out);

// Frees a graph. NULL is ignored.
//
// # Safety
// `g` must come from this library and not be used afterwards.
void fsm_graph_free(struct FsmGraph *g);

// Number of nodes, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t fsm_graph_num_nodes(const struct FsmGraph *g);

// Number of undirected edges, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live graph handle.
size_t fsm_graph_num_edges(const struct FsmGraph *g);

// Copy of `g` with a seeded fraction of its edges removed.
//
// # Safety
// `g` must be a live graph handle; `out` must be writable.
enum FsmStatus fsm_graph_delete_edges(const struct FsmGraph *g,
                                      double fraction,
                                      uint64_t seed,
                                      struct FsmGraph **out);

// Label homogeneity of node `v`.
//
// # Safety
// `g` must be a live graph handle; `out` must be writable.
enum FsmStatus fsm_graph_homogeneity(const struct FsmGraph *g, size_t v, double *out);

// Homogeneity-biased split with `per_class_train` training nodes per class
// and the default validation and test sizes.
//
// # Safety
// `g` must be a live graph handle; `out` must be writable.
enum FsmStatus fsm_split_biased(const struct FsmGraph *g,
                                enum FsmBiasLevel level,
                                size_t per_class_train,
                                uint64_t seed,
                                struct FsmSplit **out);

// Reads a split file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FsmStatus fsm_split_read(const char *path, struct FsmSplit **out);

// Writes a split file.
//
// # Safety
// `s` must be a live split handle; `path` a NUL-terminated string.
enum FsmStatus fsm_split_write(const struct FsmSplit *s, const char *path);

// Number of nodes covered by the split, or 0 for NULL.
//
// # Safety
// `s` must be NULL or a live split handle.
size_t fsm_split_len(const struct FsmSplit *s);

// Writes the role of every node into `roles`, which holds `len` entries;
// `len` must equal [`fsm_split_len`].
//
// # Safety
// `s` must be a live split handle; `roles` must hold `len` entries.
enum FsmStatus fsm_split_roles(const struct FsmSplit *s, enum FsmRole *roles, size_t len);

// Frees a split. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void fsm_split_free(struct FsmSplit *s);

// Trains a model. `config_json` is a JSON training configuration; NULL or
// missing fields take their defaults.
//
// # Safety
// Handles must be live; `config_json` NULL or NUL-terminated; `out`
// writable.
enum FsmStatus fsm_train(const struct FsmGraph *g,
                         const struct FsmSplit *s,
                         const char *config_json,
                         struct FsmModel **out);

// Predicted class of each of the `len` nodes in `nodes`, written to
// `labels_out`. Prediction uses no label information.
//
// # Safety
// Handles must be live; both arrays must hold `len` entries.
enum FsmStatus fsm_model_predict(const struct FsmModel *m,
                                 const struct FsmGraph *g,
                                 const uint64_t *nodes,
                                 size_t len,
                                 uint32_t *labels_out);

// Accuracy and macro-F1 of the model on the test nodes of `s`.
//
// # Safety
// Handles must be live; `accuracy` and `macro_f1` writable.
enum FsmStatus fsm_model_evaluate(const struct FsmModel *m,
                                  const struct FsmGraph *g,
                                  const struct FsmSplit *s,
                                  double *accuracy,
                                  double *macro_f1);

// Saves a model checkpoint.
//
// # Safety
// `m` must be live; `path` NUL-terminated.
enum FsmStatus fsm_model_save(const struct FsmModel *m, const char *path);

// Loads a model checkpoint.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum FsmStatus fsm_model_load(const char *path, struct FsmModel **out);

// Frees a model. NULL is ignored.
//
// # Safety
// `m` must come from this library and not be used afterwards.
void fsm_model_free(struct FsmModel *m);

// Runs an experiment described by `spec_json` and stores the JSON report
// in `report_out`, to be freed with [`fsm_string_free`]. `g` may be NULL
// for synthetic shifts.
//
// # Safety
// `g` NULL or live; `spec_json` NUL-terminated; `report_out` writable.
enum FsmStatus fsm_bench(const struct FsmGraph *g, const char *spec_json, char **report_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FSM_IRL_H */
