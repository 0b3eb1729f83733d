#ifndef CTLIO_H
#define CTLIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CtlioStatus {
  CTLIO_STATUS_OK = 0,
  CTLIO_STATUS_NULL_POINTER = 1,
  CTLIO_STATUS_INVALID_ARGUMENT = 2,
  CTLIO_STATUS_OUT_OF_RANGE = 3,
  CTLIO_STATUS_IO = 4,
  CTLIO_STATUS_PARSE = 5,
  CTLIO_STATUS_CONFIG = 6,
  CTLIO_STATUS_NUMERIC = 7,
  CTLIO_STATUS_GRAPH = 8,
  CTLIO_STATUS_PANIC = 9,
} CtlioStatus;

/**
 * Opaque odometry session.
 */
typedef struct CtlioOdometry CtlioOdometry;

/**
 * Opaque continuous-time trajectory.
 */
typedef struct CtlioTrajectory CtlioTrajectory;

typedef struct CtlioPose {
  double tx;
  double ty;
  double tz;
  double qx;
  double qy;
  double qz;
  double qw;
} CtlioPose;

typedef struct CtlioState {
  struct CtlioPose pose;
  /**
   * World-frame velocity.
   */
  double velocity[3];
  /**
   * World-frame acceleration.
   */
  double acceleration[3];
  /**
   * Body-frame angular velocity.
   */
  double angular_velocity[3];
} CtlioState;

typedef struct CtlioImuSample {
  double t;
  double gyro[3];
  double accel[3];
} CtlioImuSample;

typedef struct CtlioPoint {
  /**
   * Offset from the scan start, seconds.
   */
  double tau;
  double xyz[3];
  uint32_t ring;
} CtlioPoint;

typedef struct CtlioScanReport {
  double cost_init;
  double cost_final;
  size_t n_corr;
  bool keyscan;
  bool degenerate;
} CtlioScanReport;

typedef struct CtlioEvaluation {
  double trans_rmse;
  double rot_rmse;
  size_t pairs;
} CtlioEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *ctlio_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ctlio_version(void);

/**
 * Trajectory of order 4 with `n` control points all at `pose`.
 *
 * # Safety
 * `pose` and `out` must be valid pointers.
 */
enum CtlioStatus ctlio_trajectory_constant(double t0,
                                           double dt,
                                           size_t n,
                                           const struct CtlioPose *pose,
                                           struct CtlioTrajectory **out);

/**
 * Reads a trajectory serialization file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CtlioStatus ctlio_trajectory_read(const char *path, struct CtlioTrajectory **out);

/**
 * # Safety
 * `traj` must be a live handle and `path` a NUL-terminated string.
 */
enum CtlioStatus ctlio_trajectory_write(const struct CtlioTrajectory *traj, const char *path);

/**
 * Evaluable time range.
 *
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_trajectory_range(const struct CtlioTrajectory *traj,
                                        double *t_start,
                                        double *t_end);

/**
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_trajectory_num_control(const struct CtlioTrajectory *traj, size_t *out);

/**
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_trajectory_pose(const struct CtlioTrajectory *traj,
                                       double t,
                                       struct CtlioPose *out);

/**
 * Pose and derivatives at `t`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_trajectory_state(const struct CtlioTrajectory *traj,
                                        double t,
                                        struct CtlioState *out);

/**
 * Releases a trajectory handle; null is ignored.
 *
 * # Safety
 * `traj` must come from this library and not be used afterwards.
 */
void ctlio_trajectory_free(struct CtlioTrajectory *traj);

/**
 * Starts an odometry session. `config_path` may be null for defaults;
 * `imu_to_lidar` is the LiDAR pose in the IMU frame.
 *
 * # Safety
 * `imu` must point to `n_imu` samples; other pointers must be valid.
 */
enum CtlioStatus ctlio_odometry_new(const char *config_path,
                                    const struct CtlioPose *imu_to_lidar,
                                    const struct CtlioImuSample *imu,
                                    size_t n_imu,
                                    struct CtlioOdometry **out);

/**
 * Processes one scan of `n_points` points sorted by ring then azimuth.
 *
 * # Safety
 * `points` must point to `n_points` points; other pointers must be valid.
 */
enum CtlioStatus ctlio_odometry_process_scan(struct CtlioOdometry *odo,
                                             uint64_t scan_id,
                                             double t_start,
                                             double period,
                                             const struct CtlioPoint *points,
                                             size_t n_points,
                                             bool force_keyscan,
                                             struct CtlioScanReport *report);

/**
 * Copies the current trajectory into a new handle.
 *
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_odometry_trajectory(const struct CtlioOdometry *odo,
                                           struct CtlioTrajectory **out);

/**
 * Current biases as `[bax, bay, baz, bgx, bgy, bgz]`.
 *
 * # Safety
 * `out` must point to 6 doubles.
 */
enum CtlioStatus ctlio_odometry_bias(const struct CtlioOdometry *odo, double *out);

/**
 * # Safety
 * All pointers must be valid.
 */
enum CtlioStatus ctlio_odometry_keyscan_count(const struct CtlioOdometry *odo, size_t *out);

/**
 * Releases an odometry handle; null is ignored.
 *
 * # Safety
 * `odo` must come from this library and not be used afterwards.
 */
void ctlio_odometry_free(struct CtlioOdometry *odo);

/**
 * `simulate` command. `config_path` may be null; `seed` applies when `has_seed`.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum CtlioStatus ctlio_simulate(const char *config_path,
                                const char *out_dir,
                                uint64_t seed,
                                bool has_seed);

/**
 * `odometry` command. `config_path` may be null.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum CtlioStatus ctlio_run_odometry(const char *dataset_dir,
                                    const char *config_path,
                                    const char *out_dir);

/**
 * `loop-correct` command. `gt_tum` may be null.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum CtlioStatus ctlio_loop_correct(const char *run_dir,
                                    const char *loops_csv,
                                    const char *gt_tum,
                                    const char *out_dir);

/**
 * `evaluate` command; `first_pose_align` selects the alignment mode.
 *
 * # Safety
 * String arguments must be NUL-terminated and `out` valid.
 */
enum CtlioStatus ctlio_evaluate(const char *est_tum,
                                const char *gt_tum,
                                bool first_pose_align,
                                struct CtlioEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTLIO_H */
