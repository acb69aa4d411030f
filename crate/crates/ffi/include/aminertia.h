#ifndef AMINERTIA_H
#define AMINERTIA_H

/* Generated by cbindgen from the aminertia-ffi crate; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum AmStatus {
  AM_STATUS_OK = 0,
  AM_STATUS_NULL_POINTER = 1,
  AM_STATUS_INVALID_ARGUMENT = 2,
  AM_STATUS_CONFIG = 3,
  AM_STATUS_PRESENSE = 4,
  AM_STATUS_KINEMATICS = 5,
  AM_STATUS_ANALYSIS = 6,
  AM_STATUS_DIVERGED = 7,
  AM_STATUS_IO = 8,
  AM_STATUS_OUT_OF_RANGE = 9,
  AM_STATUS_PANIC = 10,
} AmStatus;

// Prior catalog handle.
typedef struct AmCatalog AmCatalog;

// Run log handle.
typedef struct AmRunLog AmRunLog;

// Scenario configuration handle.
typedef struct AmScenario AmScenario;

// Rigid-body inertial parameters: mass, CoM and inertia about the CoM.
typedef struct AmInertial {
  double mass;
  double com[3];
  double inertia[9];
} AmInertial;

// Pre-sensed object estimate.
typedef struct AmObjectEstimate {
  double mass;
  // MoI about the object CoM in the cloud frame, row-major.
  double inertia[9];
  // End effector to object CoM, m.
  double grasp_offset[3];
  // Bounding box extents, longest first, m.
  double box_dims[3];
} AmObjectEstimate;

// Delta arm geometry; angles in rad, lengths in m.
typedef struct AmDeltaGeometry {
  double base_radius;
  double platform_radius;
  double upper_arm_len;
  double forearm_len;
  double arm_azimuths[3];
  double joint_min[3];
  double joint_max[3];
} AmDeltaGeometry;

// Rate-loop margins. `phase_crossover` is negative when the phase never
// reaches -180 deg in band, in which case `gain_margin_db` is `+inf`.
typedef struct AmMargins {
  double gain_margin_db;
  double phase_margin_deg;
  double gain_crossover;
  double phase_crossover;
} AmMargins;

// One logged control tick.
typedef struct AmLogSample {
  double t;
  double p[3];
  double p_des[3];
  // Roll, pitch, yaw, rad.
  double att[3];
  double m_hat_o;
  double m_true_o;
  double m_hat_t;
  double m_true_t;
  double k_k[3];
  bool latched;
} AmLogSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after success.
// The pointer stays valid until the next call on the same thread.
const char *am_last_error(void);

// Library version as a static NUL-terminated string.
const char *am_version(void);

// Whole-system inertia of a vehicle and an object whose own CoM frame is
// placed at `p_obj` (plus `obj.com`).
//
// # Safety
// All pointers must be valid; `p_obj` points to three doubles.
enum AmStatus am_compose_inertia(const struct AmInertial *vehicle,
                                 const struct AmInertial *obj,
                                 const double *p_obj,
                                 struct AmInertial *out);

// Built-in prior catalog.
//
// # Safety
// `out` must be valid for writes.
enum AmStatus am_catalog_builtin(struct AmCatalog **out);

// Loads a prior catalog from a TOML file.
//
// # Safety
// `path` is a NUL-terminated string; `out` must be valid for writes.
enum AmStatus am_catalog_load(const char *path, struct AmCatalog **out);

// # Safety
// `cat` is null or a handle from `am_catalog_*` not yet freed.
void am_catalog_free(struct AmCatalog *cat);

// Fits a bounding box to `n_points` xyz triples and applies the prior for
// `label`.
//
// # Safety
// `cat` is a live catalog handle, `label` a NUL-terminated string, `points`
// holds `3 * n_points` doubles and `out` is valid for writes.
enum AmStatus am_presense_estimate(const struct AmCatalog *cat,
                                   const char *label,
                                   const double *points,
                                   uintptr_t n_points,
                                   double pad_height,
                                   struct AmObjectEstimate *out);

// Default arm geometry.
struct AmDeltaGeometry am_delta_default_geometry(void);

// End-effector position for joint angles `theta[3]`, written to `p[3]`.
//
// # Safety
// Pointers valid for three doubles each.
enum AmStatus am_delta_forward(const struct AmDeltaGeometry *geom, const double *theta, double *p);

// Joint angles for end-effector position `p[3]`, written to `theta[3]`.
//
// # Safety
// Pointers valid for three doubles each.
enum AmStatus am_delta_inverse(const struct AmDeltaGeometry *geom, const double *p, double *theta);

// Velocity Jacobian at `theta[3]`, row-major into `jac[9]`.
//
// # Safety
// `theta` valid for three doubles, `jac` for nine.
enum AmStatus am_delta_jacobian(const struct AmDeltaGeometry *geom,
                                const double *theta,
                                double *jac);

// Margins of the single-axis rate loop with PID gains `kp, ki, kd`,
// scheduling gain `k_k`, motor gain `k_m`, motor lag `tau_m` and inertia `j`,
// scanned over `[lo, hi]` rad/s.
//
// # Safety
// `out` must be valid for writes.
enum AmStatus am_rate_margins(double kp,
                              double ki,
                              double kd,
                              double k_k,
                              double k_m,
                              double tau_m,
                              double j,
                              double lo,
                              double hi,
                              struct AmMargins *out);

// Loads a scenario TOML file.
//
// # Safety
// `path` is a NUL-terminated string; `out` must be valid for writes.
enum AmStatus am_scenario_load(const char *path, struct AmScenario **out);

// Parses a scenario from TOML text.
//
// # Safety
// `text` is a NUL-terminated string; `out` must be valid for writes.
enum AmStatus am_scenario_parse(const char *text, struct AmScenario **out);

// Sets the controller mode by name: `baseline`, `iags` (or `pre-only`),
// `iags+dob`, `dob-only`.
//
// # Safety
// `sc` is a live scenario handle and `mode` a NUL-terminated string.
enum AmStatus am_scenario_set_mode(struct AmScenario *sc, const char *mode);

// # Safety
// `sc` is a live scenario handle.
enum AmStatus am_scenario_set_seed(struct AmScenario *sc, uint64_t seed);

// # Safety
// `sc` is null or a handle from `am_scenario_*` not yet freed.
void am_scenario_free(struct AmScenario *sc);

// Runs a scenario to completion.
//
// # Safety
// `sc` is a live scenario handle; `out` must be valid for writes.
enum AmStatus am_run(const struct AmScenario *sc, struct AmRunLog **out);

// Number of logged rows; zero for a null handle.
//
// # Safety
// `log` is null or a live run-log handle.
uintptr_t am_runlog_len(const struct AmRunLog *log);

// Copies row `index` of the log into `out`.
//
// # Safety
// `log` is a live run-log handle; `out` must be valid for writes.
enum AmStatus am_runlog_row(const struct AmRunLog *log, uintptr_t index, struct AmLogSample *out);

// Time of the grasp latch, or a negative value when it never latched.
//
// # Safety
// `log` is null or a live run-log handle.
double am_runlog_latch_time(const struct AmRunLog *log);

// Writes the log as CSV.
//
// # Safety
// `log` is a live run-log handle and `path` a NUL-terminated string.
enum AmStatus am_runlog_write_csv(const struct AmRunLog *log, const char *path);

// # Safety
// `log` is null or a handle from `am_run` not yet freed.
void am_runlog_free(struct AmRunLog *log);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMINERTIA_H */
