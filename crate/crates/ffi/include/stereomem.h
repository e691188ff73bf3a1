#ifndef STEREOMEM_H
#define STEREOMEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_INVALID_INPUT = 2,
  SM_STATUS_DEGENERATE = 3,
  SM_STATUS_ALIGNMENT_FAILED = 4,
  SM_STATUS_IO = 5,
  SM_STATUS_FORMAT = 6,
  SM_STATUS_BUFFER_TOO_SMALL = 7,
  SM_STATUS_PANIC = 8,
  SM_STATUS_OTHER = 9,
} SmStatus;

typedef enum SmTrajectoryKind {
  SM_TRAJECTORY_KIND_UP = 0,
  SM_TRAJECTORY_KIND_LEFT = 1,
  SM_TRAJECTORY_KIND_RIGHT = 2,
  SM_TRAJECTORY_KIND_ORBIT = 3,
} SmTrajectoryKind;

// Opaque point cloud.
typedef struct SmCloud SmCloud;

typedef struct SmIcpOptions {
  size_t max_iters;
  double tol;
  // Fraction of closest pairs kept; values outside (0, 1) keep all.
  double trim_quantile;
  bool with_scale;
  bool symmetric;
} SmIcpOptions;

typedef struct SmSimilarity {
  double scale;
  double rotation[9];
  double translation[3];
} SmSimilarity;

typedef struct SmIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} SmIntrinsics;

// Camera-to-world pose.
typedef struct SmPose {
  double rotation[9];
  double translation[3];
} SmPose;

typedef struct SmCamera {
  struct SmIntrinsics intrinsics;
  struct SmPose pose;
} SmCamera;

typedef struct SmIcpResult {
  struct SmSimilarity transform;
  size_t iterations;
  double final_residual;
  bool converged;
} SmIcpResult;

typedef struct SmRetrievalPair {
  size_t target_index;
  // Bank index, or -1 when the best overlap is under the floor.
  int64_t entry;
  double overlap;
} SmRetrievalPair;

typedef struct SmPcdMetrics {
  double precision;
  double recall;
  double f1;
  double threshold;
} SmPcdMetrics;

typedef struct SmCamMetrics {
  double rot_err_deg;
  double trans_err;
  double ate;
} SmCamMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sm_version(void);

// Length in bytes of the last error message on this thread, without the
// terminating NUL; 0 when the last call succeeded.
size_t sm_last_error_length(void);

// Copies the last error message, NUL-terminated, into `buf`.
//
// # Safety
// `buf` must point to `cap` writable bytes.
enum SmStatus sm_last_error_message(char *buf, size_t cap);

// Default ICP options.
struct SmIcpOptions sm_icp_default_options(void);

// Builds a cloud from `n` packed xyz triples.
//
// # Safety
// `xyz` must hold `3n` doubles; `out` must be writable.
enum SmStatus sm_cloud_new(const double *xyz, size_t n, struct SmCloud **out_cloud);

// # Safety
// `cloud` must come from this library and not be used afterwards.
void sm_cloud_free(struct SmCloud *cloud);

// Number of points; 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t sm_cloud_len(const struct SmCloud *cloud);

// Copies the points as packed xyz into `xyz`, which holds `cap` doubles.
//
// # Safety
// `cloud` must be live and `xyz` must point to `cap` writable doubles.
enum SmStatus sm_cloud_points(const struct SmCloud *cloud, double *xyz, size_t cap);

// # Safety
// `path` must be a NUL-terminated string; `out_cloud` must be writable.
enum SmStatus sm_cloud_read_ply(const char *path, struct SmCloud **out_cloud);

// # Safety
// `cloud` must be live; `path` must be a NUL-terminated string.
enum SmStatus sm_cloud_write_ply(const struct SmCloud *cloud, const char *path, bool ascii);

// Least-squares similarity mapping `src[i]` onto `dst[i]`.
//
// # Safety
// `src` and `dst` must hold `3n` doubles; `out_transform` must be writable.
enum SmStatus sm_umeyama(const double *src,
                         const double *dst,
                         size_t n,
                         bool with_scale,
                         struct SmSimilarity *out_transform);

// Lifts a row-major `width×height` z-depth map. Non-finite or
// non-positive depths are skipped.
//
// # Safety
// `depth` must hold `width·height` doubles from `camera`'s intrinsics;
// `camera` must be valid and `out_cloud` writable.
enum SmStatus sm_backproject(const double *depth,
                             const struct SmCamera *camera,
                             struct SmCloud **out_cloud);

// ICP from `pred` onto `gt`. Null `init` starts at the identity, null
// `options` uses the defaults.
//
// # Safety
// Handles must be live; pointers must be null or valid.
enum SmStatus sm_icp(const struct SmCloud *pred,
                     const struct SmCloud *gt,
                     const struct SmSimilarity *init,
                     const struct SmIcpOptions *options,
                     struct SmIcpResult *out_result);

// Fraction of `a`'s near/far frustum volume inside `b`'s.
//
// # Safety
// `a`, `b` and `out_overlap` must be valid.
enum SmStatus sm_frustum_overlap(const struct SmCamera *a,
                                 const struct SmCamera *b,
                                 double near,
                                 double far,
                                 size_t samples,
                                 uint64_t seed,
                                 double *out_overlap);

// Best bank camera for each of the `floor(n_targets/4)` planned targets.
// `out_pairs` holds `cap` entries; the planned count goes to `out_count`.
//
// # Safety
// Arrays must hold the stated counts; outputs must be writable.
enum SmStatus sm_plan_retrieval(const struct SmCamera *targets,
                                size_t n_targets,
                                const struct SmCamera *bank,
                                size_t n_bank,
                                double near,
                                double far,
                                size_t samples,
                                uint64_t seed,
                                double floor,
                                struct SmRetrievalPair *out_pairs,
                                size_t cap,
                                size_t *out_count);

// Precision, recall and F1 of aligned clouds at `threshold`.
//
// # Safety
// Handles must be live and `out_metrics` writable.
enum SmStatus sm_pcd_f1(const struct SmCloud *pred,
                        const struct SmCloud *gt,
                        double threshold,
                        struct SmPcdMetrics *out_metrics);

// Area under the precision/recall curve over ascending thresholds.
//
// # Safety
// `thresholds` must hold `n` doubles; handles must be live.
enum SmStatus sm_pcd_auc(const struct SmCloud *pred,
                         const struct SmCloud *gt,
                         const double *thresholds,
                         size_t n,
                         double *out_auc);

// Camera errors after similarity alignment of `pred` onto `gt`.
//
// # Safety
// Both arrays must hold `n` poses.
enum SmStatus sm_cam_metrics(const struct SmPose *pred,
                             const struct SmPose *gt,
                             size_t n,
                             struct SmCamMetrics *out_metrics);

// Writes `n_frames` poses of a default trajectory of `kind` into
// `out_poses`, which holds `cap` entries. `angle_deg <= 0` keeps the
// default angle.
//
// # Safety
// `start` must be valid; `out_poses` must hold `cap` entries.
enum SmStatus sm_trajectory(enum SmTrajectoryKind kind,
                            size_t n_frames,
                            const struct SmCamera *start,
                            double median_depth,
                            double angle_deg,
                            struct SmPose *out_poses,
                            size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEREOMEM_H */
