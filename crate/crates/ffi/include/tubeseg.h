#ifndef TUBESEG_H
#define TUBESEG_H

/* Generated by cbindgen. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum TubesegStatus {
  TUBESEG_STATUS_OK = 0,
  TUBESEG_STATUS_NULL_POINTER = -1,
  TUBESEG_STATUS_INVALID_ARGUMENT = -2,
  TUBESEG_STATUS_CONFIG = -3,
  TUBESEG_STATUS_IO = -4,
  TUBESEG_STATUS_FORMAT = -5,
  TUBESEG_STATUS_GEOMETRY_MISMATCH = -6,
  TUBESEG_STATUS_EMPTY = -7,
  TUBESEG_STATUS_NO_SEED = -8,
  TUBESEG_STATUS_AORTA_NOT_FOUND = -9,
  TUBESEG_STATUS_NON_CONVERGENCE = -10,
  TUBESEG_STATUS_CFL = -11,
  TUBESEG_STATUS_STAGNATION = -12,
  TUBESEG_STATUS_PANIC = -100,
} TubesegStatus;

// Branching centreline.
typedef struct TubesegCentreline TubesegCentreline;

// Pipeline configuration.
typedef struct TubesegConfig TubesegConfig;

// Binary voxel mask.
typedef struct TubesegMask TubesegMask;

// Products and report of a pipeline run.
typedef struct TubesegRun TubesegRun;

// Intensity volume.
typedef struct TubesegVolume TubesegVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tubeseg_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next library call on the same thread.
const char *tubeseg_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void tubeseg_string_free(char *s);

// Volume from `dims[0] * dims[1] * dims[2]` samples in x-fastest order.
// `origin` may be NULL for a zero origin.
//
// # Safety
// `dims`, `spacing` and a non-NULL `origin` point to 3 readable values;
// `data` points to `len` readable doubles.
enum TubesegStatus tubeseg_volume_new(const size_t *dims,
                                      const double *spacing,
                                      const double *origin,
                                      const double *data,
                                      size_t len,
                                      struct TubesegVolume **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_volume_load(const char *path, struct TubesegVolume **out);

// # Safety
// `vol` is a live volume handle; `path` is a NUL-terminated string.
enum TubesegStatus tubeseg_volume_save(const struct TubesegVolume *vol, const char *path);

// # Safety
// `vol` is a live volume handle; `dims` has room for 3 values.
enum TubesegStatus tubeseg_volume_dims(const struct TubesegVolume *vol, size_t *dims);

// # Safety
// `vol` is a live volume handle; `spacing` has room for 3 values.
enum TubesegStatus tubeseg_volume_spacing(const struct TubesegVolume *vol, double *spacing);

// Borrowed view of the samples, valid while `vol` lives. Returns NULL if
// `vol` is NULL.
//
// # Safety
// `vol` is NULL or a live volume handle; `len` is NULL or writable.
const double *tubeseg_volume_data(const struct TubesegVolume *vol, size_t *len);

// # Safety
// `vol` is NULL or a handle not yet freed.
void tubeseg_volume_free(struct TubesegVolume *vol);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_mask_load(const char *path, struct TubesegMask **out);

// # Safety
// `mask` is a live mask handle; `path` is a NUL-terminated string.
enum TubesegStatus tubeseg_mask_save(const struct TubesegMask *mask, const char *path);

// # Safety
// `mask` is a live mask handle; `dims` has room for 3 values.
enum TubesegStatus tubeseg_mask_dims(const struct TubesegMask *mask, size_t *dims);

// Number of foreground voxels, or 0 if `mask` is NULL.
//
// # Safety
// `mask` is NULL or a live mask handle.
size_t tubeseg_mask_count(const struct TubesegMask *mask);

// Copies the mask as 0/1 bytes in x-fastest order. `len` must equal the
// voxel count.
//
// # Safety
// `mask` is a live mask handle; `out` has room for `len` bytes.
enum TubesegStatus tubeseg_mask_copy(const struct TubesegMask *mask, uint8_t *out, size_t len);

// Dice overlap of two masks on the same grid.
//
// # Safety
// `a` and `b` are live mask handles; `out` is writable.
enum TubesegStatus tubeseg_mask_dice(const struct TubesegMask *a,
                                     const struct TubesegMask *b,
                                     double *out);

// # Safety
// `mask` is NULL or a handle not yet freed.
void tubeseg_mask_free(struct TubesegMask *mask);

// Synthetic phantom of the named kind (`tube`, `helix`, `y_bifurcation`,
// `ball`, `plate`, `aorta_plus_coronary`) on an isotropic grid.
// `out_truth` may be NULL.
//
// # Safety
// `kind` is a NUL-terminated string; `dims` points to 3 values; `out_volume`
// is writable; `out_truth` is NULL or writable.
enum TubesegStatus tubeseg_phantom_generate(const char *kind,
                                            const size_t *dims,
                                            double spacing,
                                            bool hard_edges,
                                            uint64_t noise_seed,
                                            struct TubesegVolume **out_volume,
                                            struct TubesegMask **out_truth);

// # Safety
// `out` is writable.
enum TubesegStatus tubeseg_config_default(struct TubesegConfig **out);

// Configuration from TOML text.
//
// # Safety
// `toml` is a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_config_parse(const char *toml, struct TubesegConfig **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_config_load(const char *path, struct TubesegConfig **out);

// Applies one `key=value` override. The configuration is left unchanged if
// the result does not validate.
//
// # Safety
// `cfg` is a live config handle; `assignment` is a NUL-terminated string.
enum TubesegStatus tubeseg_config_set(struct TubesegConfig *cfg, const char *assignment);

// TOML rendering, to be released with [`tubeseg_string_free`]. NULL if
// `cfg` is NULL.
//
// # Safety
// `cfg` is NULL or a live config handle.
char *tubeseg_config_to_toml(const struct TubesegConfig *cfg);

// # Safety
// `cfg` is NULL or a handle not yet freed.
void tubeseg_config_free(struct TubesegConfig *cfg);

// Runs the full pipeline. `cfg` NULL uses defaults; `out_dir` NULL keeps
// everything in memory. The run handle is written whenever the inputs are
// valid, including when a stage fails, so the partial report and products
// can be inspected.
//
// # Safety
// `vol` is a live volume handle; `cfg` is NULL or a live config handle;
// `out_dir` is NULL or a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_pipeline_run(const struct TubesegVolume *vol,
                                        const struct TubesegConfig *cfg,
                                        const char *out_dir,
                                        struct TubesegRun **out);

// Run report as JSON, to be released with [`tubeseg_string_free`]. NULL if
// `run` is NULL.
//
// # Safety
// `run` is NULL or a live run handle.
char *tubeseg_run_report_json(const struct TubesegRun *run);

// Seed voxel used for segmentation.
//
// # Safety
// `run` is a live run handle; `ijk` has room for 3 values.
enum TubesegStatus tubeseg_run_seed(const struct TubesegRun *run, size_t *ijk);

// Copy of the segmentation mask.
//
// # Safety
// `run` is a live run handle; `out` is writable.
enum TubesegStatus tubeseg_run_mask(const struct TubesegRun *run, struct TubesegMask **out);

// Copy of the extracted centreline.
//
// # Safety
// `run` is a live run handle; `out` is writable.
enum TubesegStatus tubeseg_run_centreline(const struct TubesegRun *run,
                                          struct TubesegCentreline **out);

// Copy of the straightened volume.
//
// # Safety
// `run` is a live run handle; `out` is writable.
enum TubesegStatus tubeseg_run_cpr(const struct TubesegRun *run, struct TubesegVolume **out);

// # Safety
// `run` is NULL or a handle not yet freed.
void tubeseg_run_free(struct TubesegRun *run);

// Slice-by-slice segmentation from a seed voxel with the intensity gate
// `[hu_lo, hu_hi]`. `cfg` NULL uses defaults.
//
// # Safety
// `vol` is a live volume handle; `seed` points to 3 values; `cfg` is NULL or
// a live config handle; `out` is writable.
enum TubesegStatus tubeseg_segment(const struct TubesegVolume *vol,
                                   const size_t *seed,
                                   double hu_lo,
                                   double hu_hi,
                                   const struct TubesegConfig *cfg,
                                   struct TubesegMask **out);

// Centreline of a single-component mask. `cfg` NULL uses defaults.
//
// # Safety
// `mask` is a live mask handle; `cfg` is NULL or a live config handle;
// `out` is writable.
enum TubesegStatus tubeseg_centreline_extract(const struct TubesegMask *mask,
                                              const struct TubesegConfig *cfg,
                                              struct TubesegCentreline **out);

// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum TubesegStatus tubeseg_centreline_load(const char *path, struct TubesegCentreline **out);

// # Safety
// `cl` is a live centreline handle; `path` is a NUL-terminated string.
enum TubesegStatus tubeseg_centreline_save(const struct TubesegCentreline *cl, const char *path);

// Number of branches, or 0 if `cl` is NULL.
//
// # Safety
// `cl` is NULL or a live centreline handle.
size_t tubeseg_centreline_branch_count(const struct TubesegCentreline *cl);

// Borrowed view of a branch's points as `3 * len` doubles (x, y, z in mm),
// valid while `cl` lives. NULL if `cl` is NULL or `branch` is out of range.
//
// # Safety
// `cl` is NULL or a live centreline handle; `len` is NULL or writable.
const double *tubeseg_centreline_branch_points(const struct TubesegCentreline *cl,
                                               size_t branch,
                                               size_t *len);

// Parent branch index, or -1 for the root, an out-of-range branch or NULL.
//
// # Safety
// `cl` is NULL or a live centreline handle.
ptrdiff_t tubeseg_centreline_branch_parent(const struct TubesegCentreline *cl, size_t branch);

// Polyline length of a branch in mm.
//
// # Safety
// `cl` is a live centreline handle; `out` is writable.
enum TubesegStatus tubeseg_centreline_branch_length(const struct TubesegCentreline *cl,
                                                    size_t branch,
                                                    double *out);

// # Safety
// `cl` is NULL or a handle not yet freed.
void tubeseg_centreline_free(struct TubesegCentreline *cl);

// Straightened volume along one branch. `cfg` NULL uses defaults.
//
// # Safety
// `vol` and `cl` are live handles; `cfg` is NULL or a live config handle;
// `out` is writable.
enum TubesegStatus tubeseg_cpr(const struct TubesegVolume *vol,
                               const struct TubesegCentreline *cl,
                               size_t branch,
                               const struct TubesegConfig *cfg,
                               struct TubesegVolume **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUBESEG_H */
