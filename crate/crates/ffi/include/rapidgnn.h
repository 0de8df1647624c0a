#ifndef RAPIDGNN_H
#define RAPIDGNN_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RgnnStatus {
  RGNN_STATUS_OK = 0,
  RGNN_STATUS_NULL_ARGUMENT = 1,
  RGNN_STATUS_INVALID_ARGUMENT = 2,
  RGNN_STATUS_IO = 3,
  RGNN_STATUS_FORMAT = 4,
  RGNN_STATUS_VALIDATION = 5,
  RGNN_STATUS_LOOKUP = 6,
  RGNN_STATUS_NOT_OWNED = 7,
  RGNN_STATUS_TRANSPORT = 8,
  RGNN_STATUS_PROTOCOL = 9,
  RGNN_STATUS_SHAPE = 10,
  RGNN_STATUS_PANIC = 99,
} RgnnStatus;

/**
 * Opaque CSR graph with features, labels and split masks.
 */
typedef struct RgnnGraph RgnnGraph;

/**
 * Opaque node-to-partition map with halo lists.
 */
typedef struct RgnnPartition RgnnPartition;

/**
 * Opaque precomputed batch plan.
 */
typedef struct RgnnPlan RgnnPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *rgnn_last_error(void);

/**
 * NUL-terminated crate version.
 */
const char *rgnn_version(void);

/**
 * Payload bytes of `n` feature rows of width `dim` (4 bytes per value).
 */
uint64_t rgnn_bytes_for(uint64_t n, uint64_t dim);

/**
 * `ceil(num_train / batch_size)`; 0 when `batch_size` is 0.
 */
uint64_t rgnn_num_batches(uint64_t num_train, uint64_t batch_size);

/**
 * Sampling seed of batch `batch` of epoch `epoch`.
 */
enum RgnnStatus rgnn_seed_for(uint64_t s0,
                              uint64_t epochs,
                              uint64_t batches_per_epoch,
                              uint64_t epoch,
                              uint64_t batch,
                              uint64_t *out);

/**
 * Generates the synthetic power-law graph.
 */
enum RgnnStatus rgnn_graph_synth(uint64_t nodes,
                                 uint64_t m,
                                 uint64_t feat_dim,
                                 uint64_t classes,
                                 uint64_t seed,
                                 struct RgnnGraph **out);

/**
 * Reads an RGF1 file.
 */
enum RgnnStatus rgnn_graph_load(const char *path, struct RgnnGraph **out);

/**
 * Writes an RGF1 file.
 */
enum RgnnStatus rgnn_graph_save(const struct RgnnGraph *g, const char *path);

uint64_t rgnn_graph_num_nodes(const struct RgnnGraph *g);

/**
 * Directed adjacency entries (twice the undirected edge count).
 */
uint64_t rgnn_graph_num_edges(const struct RgnnGraph *g);

uint64_t rgnn_graph_feat_dim(const struct RgnnGraph *g);

enum RgnnStatus rgnn_graph_degree(const struct RgnnGraph *g, uint32_t v, uint64_t *out);

/**
 * Copies the feature row of `v` into `buf`, which must hold `feat_dim`
 * floats.
 */
enum RgnnStatus rgnn_graph_feature_row(const struct RgnnGraph *g,
                                       uint32_t v,
                                       float *buf,
                                       size_t len);

void rgnn_graph_free(struct RgnnGraph *g);

/**
 * Hash partitioner.
 */
enum RgnnStatus rgnn_partition_random(const struct RgnnGraph *g,
                                      uint32_t k,
                                      uint64_t seed,
                                      struct RgnnPartition **out);

/**
 * Streaming edge-cut partitioner.
 */
enum RgnnStatus rgnn_partition_edgecut(const struct RgnnGraph *g,
                                       uint32_t k,
                                       struct RgnnPartition **out);

/**
 * Reads an RPB1 file written for `g`.
 */
enum RgnnStatus rgnn_partition_load(const struct RgnnGraph *g,
                                    const char *path,
                                    struct RgnnPartition **out);

enum RgnnStatus rgnn_partition_save(const struct RgnnPartition *book, const char *path);

uint32_t rgnn_partition_num_parts(const struct RgnnPartition *book);

enum RgnnStatus rgnn_partition_owner(const struct RgnnPartition *book, uint32_t v, uint32_t *out);

/**
 * Directed cross-partition adjacency entries of `g` under `book`.
 */
enum RgnnStatus rgnn_partition_edge_cut(const struct RgnnGraph *g,
                                        const struct RgnnPartition *book,
                                        uint64_t *out);

void rgnn_partition_free(struct RgnnPartition *book);

/**
 * Precomputes every epoch's batches over the training nodes of `g`.
 * `fanouts` holds `num_layers` entries, input layer first.
 */
enum RgnnStatus rgnn_plan_generate(const struct RgnnGraph *g,
                                   const uint64_t *fanouts,
                                   size_t num_layers,
                                   uint64_t batch_size,
                                   uint64_t epochs,
                                   uint64_t s0,
                                   struct RgnnPlan **out);

uint64_t rgnn_plan_digest(const struct RgnnPlan *plan);

/**
 * Writes the digest as 16 lowercase hex digits plus NUL; `len` must be at
 * least 17.
 */
enum RgnnStatus rgnn_plan_digest_hex(const struct RgnnPlan *plan, char *buf, size_t len);

uint64_t rgnn_plan_batches_per_epoch(const struct RgnnPlan *plan);

uint64_t rgnn_plan_epochs(const struct RgnnPlan *plan);

/**
 * Copies the input node ids of `(epoch, batch)` into `buf` when it holds
 * at least that many entries; `*count` always receives the required size.
 */
enum RgnnStatus rgnn_plan_input_nodes(const struct RgnnPlan *plan,
                                      const struct RgnnGraph *g,
                                      uint64_t epoch,
                                      uint64_t batch,
                                      uint32_t *buf,
                                      size_t len,
                                      size_t *count);

void rgnn_plan_free(struct RgnnPlan *plan);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAPIDGNN_H */
