#ifndef MOCH_H
#define MOCH_H

/* Generated by cbindgen from the moch-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes shared by every fallible binding; numerically identical
// to the command-line tool's exit codes for the same failure classes.
typedef enum MochStatus {
  // Success.
  MOCH_STATUS_OK = 0,
  // Malformed configuration or argument combination.
  MOCH_STATUS_CONFIG = 2,
  // Structurally invalid input (grid size, mismatched grids, ranges).
  MOCH_STATUS_INVALID = 3,
  // File-system or snapshot-format failure.
  MOCH_STATUS_IO = 4,
  // Numerical failure: non-finite values, blow-up, lost invertibility.
  MOCH_STATUS_NUMERICAL = 5,
} MochStatus;

// Opaque real field handle.
typedef struct MochField MochField;

// Opaque periodic grid handle.
typedef struct MochGrid MochGrid;

// Opaque dyadic-partition handle; retains its grid internally.
typedef struct MochPartition MochPartition;

// The three datum norms reported by [`moch_datum_new`].
typedef struct MochDatumNorms {
  // Summed block sup norms.
  double sum_norm;
  // `(j + 2)^2`-weighted block sup.
  double weighted_norm;
  // Summed block sup norms of the squared datum.
  double square_norm;
} MochDatumNorms;

// Outcome summary of [`moch_solve_final`].
typedef struct MochSolveInfo {
  // Time actually reached (equals the horizon unless truncated).
  double t_final;
  // 1 when the blow-up guard stopped the run early, else 0.
  int32_t truncated;
  // Summed block norm of the final state.
  double final_sum_norm;
  // Sup norm of the final state.
  double final_linf;
} MochSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` as a
// NUL-terminated string, truncating if needed. Returns the full message
// length in bytes (excluding the NUL), regardless of truncation. `buf`
// may be null when `len` is 0, to query the length alone.
size_t moch_last_error(char *buf, size_t len);

// Build a periodic grid with `num_points` nodes (a power of two, at
// least 8) over `[0, period)`.
enum MochStatus moch_grid_new(size_t num_points, double period, struct MochGrid **out);

// Number of nodes of a grid handle; 0 for a null handle.
size_t moch_grid_points(const struct MochGrid *grid);

// Release a grid handle; accepts null.
void moch_grid_free(struct MochGrid *grid);

// Build the dyadic frequency partition for `grid`.
enum MochStatus moch_partition_new(const struct MochGrid *grid, struct MochPartition **out);

// Number of blocks of a partition handle (the low-frequency block plus
// one per dyadic annulus); 0 for a null handle.
size_t moch_partition_num_blocks(const struct MochPartition *part);

// Release a partition handle; accepts null.
void moch_partition_free(struct MochPartition *part);

// Build a field on `grid` from `len` node samples; `len` must equal the
// grid's point count and every sample must be finite.
enum MochStatus moch_field_from_samples(const struct MochGrid *grid,
                                        const double *samples,
                                        size_t len,
                                        struct MochField **out);

// Number of samples of a field handle; 0 for a null handle.
size_t moch_field_len(const struct MochField *field);

// Copy a field's node samples into `buf` (capacity `len`); fails unless
// `len` is at least the field length.
enum MochStatus moch_field_samples(const struct MochField *field, double *buf, size_t len);

// Sup norm of a field; NaN for a null handle.
double moch_field_linf(const struct MochField *field);

// Release a field handle; accepts null.
void moch_field_free(struct MochField *field);

// Write a field to `path` in the binary snapshot format.
//
// # Safety
// `path` must be a NUL-terminated string.
enum MochStatus moch_snapshot_write(const struct MochField *field, const char *path);

// Read a snapshot file into a fresh field handle.
//
// # Safety
// `path` must be a NUL-terminated string.
enum MochStatus moch_snapshot_read(const char *path, struct MochField **out);

// Summed block sup norm of `field` under `part`; the field must live on
// the partition's grid.
enum MochStatus moch_norm_sum(const struct MochPartition *part,
                              const struct MochField *field,
                              double *out);

// `(j + 2)^2`-weighted block sup norm of `field` under `part`.
enum MochStatus moch_norm_weighted(const struct MochPartition *part,
                                   const struct MochField *field,
                                   double *out);

// Build the rough initial datum at `scale` on its automatically sized
// grid (`corrector_literal` 0 uses the regular smoothing corrector, any
// other value the literal variant), returning the field and its three
// norms. The field carries its own grid; free it with
// [`moch_field_free`].
enum MochStatus moch_datum_new(int32_t scale,
                               int32_t corrector_literal,
                               struct MochField **out,
                               struct MochDatumNorms *norms);

// Integrate `gamma0` to `t_final` and hand back the final field plus a
// summary. `dealias` 0 disables the 2/3-rule product dealiasing. The
// blow-up guard truncates instead of failing; `info.truncated` reports
// it.
enum MochStatus moch_solve_final(const struct MochField *gamma0,
                                 double lambda,
                                 double dt,
                                 double t_final,
                                 int32_t dealias,
                                 struct MochField **out,
                                 struct MochSolveInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOCH_H */
