#ifndef FUSEDFNO_H
#define FUSEDFNO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Number of entries in [`FnoLedger::arrays`].
#define FNO_NUM_ARRAYS 9

typedef enum FnoDirection {
  FNO_DIRECTION_FORWARD = 0,
  FNO_DIRECTION_INVERSE = 1,
} FnoDirection;

typedef enum FnoMode {
  FNO_MODE_STAGED = 0,
  FNO_MODE_FFT_OPTIMIZED = 1,
  FNO_MODE_FUSED_FFT_GEMM = 2,
  FNO_MODE_FUSED_GEMM_IFFT = 3,
  FNO_MODE_FULLY_FUSED = 4,
} FnoMode;

typedef enum FnoStatus {
  FNO_STATUS_OK = 0,
  FNO_STATUS_NULL_POINTER = 1,
  FNO_STATUS_INVALID_ARGUMENT = 2,
  FNO_STATUS_INVALID_CONFIG = 3,
  FNO_STATUS_SHAPE_MISMATCH = 4,
  FNO_STATUS_SCHEDULE_INVALID = 5,
  FNO_STATUS_STRIDE_OVERLAP = 6,
  FNO_STATUS_PANIC = 99,
} FnoStatus;

// Opaque FFT plan.
typedef struct FnoFftPlan FnoFftPlan;

// Opaque spectral layer: a validated setup plus its weights.
typedef struct FnoLayer FnoLayer;

typedef struct FnoOpCount {
  uint64_t butterflies;
  uint64_t twiddle_muls;
  uint64_t skipped;
} FnoOpCount;

typedef struct FnoComplex {
  float re;
  float im;
} FnoComplex;

typedef struct FnoTileConfig {
  size_t m_tb;
  size_t n_tb;
  size_t k_tb;
  size_t m_w;
  size_t n_w;
  size_t m_t;
  size_t n_t;
} FnoTileConfig;

typedef struct FnoLayerConfig {
  size_t batch;
  size_t hidden_dim;
  size_t output_dim;
  size_t dim_x;
  size_t dim_y;
  size_t keep_x;
  size_t keep_y;
  uint32_t rank;
} FnoLayerConfig;

typedef struct FnoArrayTraffic {
  uint64_t bytes_read;
  uint64_t bytes_written;
} FnoArrayTraffic;

// Traffic of one layer run. `arrays` is indexed like [`fno_array_name`].
typedef struct FnoLedger {
  struct FnoArrayTraffic arrays[FNO_NUM_ARRAYS];
  uint32_t kernel_launches;
  struct FnoOpCount fft_ops;
  uint64_t stage2_modeled_ops;
  uint64_t total_bytes;
} FnoLedger;

typedef struct FnoBankReport {
  uint32_t distinct_banks;
  double utilization;
  uint32_t max_conflict_degree;
  uint32_t phases;
  uint32_t total_touches;
  uint32_t bank_touches[32];
} FnoBankReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *fno_last_error(void);

// Name of ledger array `index` (`input`, `spectrum_stage1`, ...), or null past the end.
const char *fno_array_name(size_t index);

// `n * log2(n)` butterfly outputs of an unpruned transform.
//
// # Safety
// `out` must be valid for one write.
enum FnoStatus fno_full_op_count(size_t n, uint64_t *out);

// Plans an `n`-point transform keeping `keep` outputs from `src_len` nonzero inputs.
//
// # Safety
// `out` must be valid for one write.
enum FnoStatus fno_fft_plan_new(size_t n,
                                enum FnoDirection direction,
                                size_t keep,
                                size_t src_len,
                                struct FnoFftPlan **out);

// # Safety
// `plan` must be null or a handle from [`fno_fft_plan_new`] not yet freed.
void fno_fft_plan_free(struct FnoFftPlan *plan);

// Operations the plan executes per pencil.
//
// # Safety
// `plan` must be a live handle and `out` valid for one write.
enum FnoStatus fno_fft_plan_op_budget(const struct FnoFftPlan *plan, struct FnoOpCount *out);

// Transforms `input[0..src_len]` into `output[0..keep]`. `ops` may be null.
//
// # Safety
// `plan` must be a live handle not used concurrently; buffers must be valid
// for the given lengths.
enum FnoStatus fno_fft_execute(struct FnoFftPlan *plan,
                               const struct FnoComplex *input,
                               size_t input_len,
                               struct FnoComplex *output,
                               size_t output_len,
                               struct FnoOpCount *ops);

// Writes the default tile configuration.
//
// # Safety
// `out` must be valid for one write.
enum FnoStatus fno_default_tiles(struct FnoTileConfig *out);

// Checks a layer against a tile configuration (null for the default) and an
// FFT batch size (0 for `k_tb`). `violations` (nullable) receives the number
// of broken constraints; the message lists them.
//
// # Safety
// `layer` must be valid; `tiles` and `violations` may be null.
enum FnoStatus fno_validate_config(const struct FnoLayerConfig *layer,
                                   const struct FnoTileConfig *tiles,
                                   size_t bs,
                                   size_t *violations);

// Creates a layer. `weights` is the column-major `hidden_dim x output_dim` matrix.
//
// # Safety
// `layer` and `out` must be valid; `tiles` may be null; `weights` must be
// valid for `weights_len` reads.
enum FnoStatus fno_layer_new(const struct FnoLayerConfig *layer,
                             const struct FnoTileConfig *tiles,
                             size_t bs,
                             const struct FnoComplex *weights,
                             size_t weights_len,
                             struct FnoLayer **out);

// # Safety
// `layer` must be null or a handle from [`fno_layer_new`] not yet freed.
void fno_layer_free(struct FnoLayer *layer);

// Runs the layer on `[batch, hidden_dim, dim_x, dim_y]` input, writing
// `[batch, output_dim, dim_x, dim_y]` output. `ledger` may be null.
//
// # Safety
// `layer` must be a live handle; buffers must be valid for the given lengths.
enum FnoStatus fno_layer_run(const struct FnoLayer *layer,
                             enum FnoMode mode,
                             const struct FnoComplex *input,
                             size_t input_len,
                             struct FnoComplex *output,
                             size_t output_len,
                             struct FnoLedger *ledger);

// `c = a * b` for column-major `m x k` and `k x n` matrices. `tiles` may be null.
//
// # Safety
// `a`, `b` and `c` must be valid for `m*k`, `k*n` and `m*n` elements.
enum FnoStatus fno_gemm_tiled(size_t m,
                              size_t n,
                              size_t k,
                              const struct FnoTileConfig *tiles,
                              const struct FnoComplex *a,
                              const struct FnoComplex *b,
                              struct FnoComplex *c);

// Simulates one write phase (`step`) of warp 0 of a named layout. `fft_size`
// of 0 picks the layout's natural size.
//
// # Safety
// `layout` must be a NUL-terminated string and `out` valid for one write.
enum FnoStatus fno_simulate_layout(const char *layout,
                                   size_t fft_size,
                                   size_t step,
                                   struct FnoBankReport *out);

// Serializes the traffic of a layer run as JSON into `buf` (NUL-terminated).
// `needed` (nullable) receives the size including the terminator; a buffer
// that is too small yields `FNO_STATUS_INVALID_ARGUMENT` and is left untouched.
//
// # Safety
// `layer` must be a live handle; `input` valid for `input_len` reads; `buf`
// valid for `buf_len` writes or null when `buf_len` is 0.
enum FnoStatus fno_layer_ledger_json(const struct FnoLayer *layer,
                                     enum FnoMode mode,
                                     const struct FnoComplex *input,
                                     size_t input_len,
                                     char *buf,
                                     size_t buf_len,
                                     size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSEDFNO_H */
