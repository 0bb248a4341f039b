#ifndef FORMATION_NMPC_H
#define FORMATION_NMPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FnmpcStatus {
  FNMPC_STATUS_OK = 0,
  FNMPC_STATUS_NULL_POINTER = 1,
  FNMPC_STATUS_INVALID_UTF8 = 2,
  FNMPC_STATUS_INVALID_CONFIG = 3,
  FNMPC_STATUS_OUT_OF_RANGE = 4,
  // No run has completed on this handle yet.
  FNMPC_STATUS_NO_RUN = 5,
  FNMPC_STATUS_INFEASIBLE = 6,
  FNMPC_STATUS_SINGULARITY = 7,
  FNMPC_STATUS_GEOMETRY = 8,
  FNMPC_STATUS_DIVERGENCE = 9,
  FNMPC_STATUS_NUMERICAL = 10,
  FNMPC_STATUS_PANIC = 11,
} FnmpcStatus;

// Scenario configuration plus the log of the most recent run.
typedef struct FnmpcSimulation FnmpcSimulation;

// Per-step scalar metrics of a finished run.
typedef struct FnmpcStepMetrics {
  double t;
  double max_pair_error;
  double leader_position_error;
  double leader_yaw_error;
  double objective;
  double kkt;
  size_t sqp_iterations;
  // Seconds.
  double cpu_time;
  bool fallback;
  bool fov_ok;
} FnmpcStepMetrics;

typedef struct FnmpcVehicleState {
  double position[3];
  double velocity[3];
  // Roll, pitch, yaw in radians.
  double euler[3];
  double body_rates[3];
} FnmpcVehicleState;

typedef struct FnmpcVehicleParams {
  double mass;
  double inertia[3];
  double arm_length;
  double thrust_coeff;
  double torque_coeff;
  double max_prop_speed;
  double gravity;
} FnmpcVehicleParams;

// Range/bearing reading of `target` in the body frame of `observer`.
typedef struct FnmpcMeasurement {
  double range;
  double azimuth;
  double elevation;
  size_t observer;
  size_t target;
} FnmpcMeasurement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `capacity`. Returns the full message length in bytes.
//
// # Safety
// `buffer` must be null or valid for `capacity` bytes.
size_t fnmpc_last_error(char *buffer, size_t capacity);

// Creates a simulation from a TOML document; null selects all defaults.
//
// # Safety
// `config_toml` must be null or a NUL-terminated string; `out` must be valid
// for a pointer write.
enum FnmpcStatus fnmpc_simulation_new(const char *config_toml, struct FnmpcSimulation **out);

// # Safety
// `sim` must be null or a handle from [`fnmpc_simulation_new`] not yet freed.
void fnmpc_simulation_free(struct FnmpcSimulation *sim);

// Overrides the SQP budget: zero restores the wall-clock budget, any other
// value fixes the iterations per step and makes runs reproducible.
//
// # Safety
// `sim` must be a live handle.
enum FnmpcStatus fnmpc_simulation_set_test_mode(struct FnmpcSimulation *sim, size_t sqp_iterations);

// Simulates the whole scenario for `seed`, replacing any previous log.
//
// # Safety
// `sim` must be a live handle.
enum FnmpcStatus fnmpc_simulation_run(struct FnmpcSimulation *sim, uint64_t seed);

// Number of vehicles, control steps in the scenario, and sample time.
//
// # Safety
// `sim` must be a live handle; each output must be null or writable.
enum FnmpcStatus fnmpc_simulation_dims(const struct FnmpcSimulation *sim,
                                       size_t *vehicles,
                                       size_t *steps,
                                       double *dt);

// # Safety
// `sim` must be a live handle and `out` writable.
enum FnmpcStatus fnmpc_simulation_step_metrics(const struct FnmpcSimulation *sim,
                                               size_t step,
                                               struct FnmpcStepMetrics *out);

// True earth-frame state and applied rotor speeds of one vehicle at one step.
//
// # Safety
// `sim` must be a live handle; `state` must be null or writable and `rpm`
// null or valid for four doubles.
enum FnmpcStatus fnmpc_simulation_vehicle(const struct FnmpcSimulation *sim,
                                          size_t step,
                                          size_t vehicle,
                                          struct FnmpcVehicleState *state,
                                          double *rpm);

// Pair error norms of one step, in configured edge order. At most
// `capacity` values are written; `count` receives the number of edges.
//
// # Safety
// `sim` must be a live handle; `errors` null or valid for `capacity`
// doubles; `count` null or writable.
enum FnmpcStatus fnmpc_simulation_pair_errors(const struct FnmpcSimulation *sim,
                                              size_t step,
                                              double *errors,
                                              size_t capacity,
                                              size_t *count);

// The simulator's nominal vehicle parameters.
//
// # Safety
// `out` must be writable.
enum FnmpcStatus fnmpc_default_params(struct FnmpcVehicleParams *out);

// Squared rotor speeds to body thrust (upward, N) and torque (N m).
//
// # Safety
// `params` must be readable, `omega_sq` valid for four doubles, `thrust`
// writable and `torque` valid for three doubles.
enum FnmpcStatus fnmpc_mixer(const struct FnmpcVehicleParams *params,
                             const double *omega_sq,
                             double *thrust,
                             double *torque);

// One RK4 step of length `dt` with squared rotor speeds held constant.
//
// # Safety
// `params` and `state` must be readable, `omega_sq` valid for four doubles
// and `out` writable. `out` may alias `state`.
enum FnmpcStatus fnmpc_rk4_step(const struct FnmpcVehicleParams *params,
                                const struct FnmpcVehicleState *state,
                                const double *omega_sq,
                                double dt,
                                struct FnmpcVehicleState *out);

// Estimates `yaw_1 - yaw_2` from mutual readings and both vehicles' roll and pitch.
//
// # Safety
// `meas_12` and `meas_21` must be readable and `out` writable.
enum FnmpcStatus fnmpc_relative_yaw(const struct FnmpcMeasurement *meas_12,
                                    const struct FnmpcMeasurement *meas_21,
                                    double roll_1,
                                    double pitch_1,
                                    double roll_2,
                                    double pitch_2,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORMATION_NMPC_H */
