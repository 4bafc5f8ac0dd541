#ifndef CUBETHRUST_H
#define CUBETHRUST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_INVALID_ARGUMENT = 2,
  CT_STATUS_INFEASIBLE = 3,
  CT_STATUS_NUMERIC = 4,
  CT_STATUS_IO = 5,
  CT_STATUS_BUFFER_TOO_SMALL = 6,
  CT_STATUS_PANIC = 7,
} CtStatus;

// Thruster layout of the 24-slot cube.
typedef struct CtLayout CtLayout;

// Docking scenario.
typedef struct CtScenario CtScenario;

// Result of a configuration sweep.
typedef struct CtSearch CtSearch;

// One row of the sweep summary. `f_min` is NaN when no subset is viable.
typedef struct CtSweepRow {
  size_t n;
  uint64_t combinations;
  uint64_t full_rank;
  uint64_t viable;
  uint64_t optimal;
  double f_min;
} CtSweepRow;

// Headline numbers of one simulation. `time_to_dock` is NaN if not docked.
typedef struct CtSimSummary {
  bool docked;
  double time_to_dock;
  double total_impulse;
  double angular_velocity_rms;
  size_t steps;
} CtSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf`, NUL-terminated.
// `len_out`, if non-null, receives the message length without the NUL.
//
// # Safety
// `buf` must point to `cap` writable bytes or be null with `cap == 0`.
enum CtStatus ct_last_error(char *buf, size_t cap, size_t *len_out);

// Builds a layout with face angles in degrees.
//
// # Safety
// `out` must be a valid pointer.
enum CtStatus ct_layout_new(double side_length,
                            double theta_deg,
                            double phi_deg,
                            struct CtLayout **out);

// # Safety
// `layout` must come from `ct_layout_new` and not be used afterwards.
void ct_layout_free(struct CtLayout *layout);

// Non-negative thrusts for `wrench` (fx, fy, fz, tx, ty, tz) using the
// thrusters `ids`. `magnitudes` receives `n_ids` values. Returns
// `Infeasible` when the squared residual exceeds `eps`; outputs are still
// written.
//
// # Safety
// `ids` and `magnitudes` must hold `n_ids` elements, `wrench` six.
enum CtStatus ct_allocate(const struct CtLayout *layout,
                          const size_t *ids,
                          size_t n_ids,
                          const double *wrench,
                          double eps,
                          double *magnitudes,
                          double *residual_sq);

// Runs the twelve unit-wrench tests on `ids`.
//
// # Safety
// `ids` must hold `n_ids` elements; outputs may be null.
enum CtStatus ct_viability(const struct CtLayout *layout,
                           const size_t *ids,
                           size_t n_ids,
                           double eps,
                           bool *viable,
                           double *total_thrust);

// Sweeps subset sizes `n_min..=n_max` with the given geometry and eps.
//
// # Safety
// `out` must be a valid pointer.
enum CtStatus ct_search_run(double side_length,
                            double theta_deg,
                            double phi_deg,
                            double eps,
                            size_t n_min,
                            size_t n_max,
                            struct CtSearch **out);

// Summary row for subset size `n`.
//
// # Safety
// `search` must come from `ct_search_run`; `row` must be valid.
enum CtStatus ct_search_row(const struct CtSearch *search, size_t n, struct CtSweepRow *row);

// Copies the first optimal subset of size `n` into `ids` (capacity `cap`).
// `len_out` receives its length, 0 if there is none.
//
// # Safety
// `ids` must hold `cap` elements.
enum CtStatus ct_search_optimal_ids(const struct CtSearch *search,
                                    size_t n,
                                    size_t *ids,
                                    size_t cap,
                                    size_t *len_out);

// # Safety
// `search` must come from `ct_search_run` and not be used afterwards.
void ct_search_free(struct CtSearch *search);

// Default scenario: 12-thruster optimal set, built-in parameters.
//
// # Safety
// `out` must be a valid pointer.
enum CtStatus ct_scenario_new(struct CtScenario **out);

// Parses a JSON scenario; omitted fields take their defaults.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum CtStatus ct_scenario_from_json(const char *json, struct CtScenario **out);

// Replaces the scenario's thruster set.
//
// # Safety
// `ids` must hold `n_ids` elements.
enum CtStatus ct_scenario_set_ids(struct CtScenario *scenario, const size_t *ids, size_t n_ids);

// Sets the simulated duration in seconds.
//
// # Safety
// `scenario` must come from a `ct_scenario_*` constructor.
enum CtStatus ct_scenario_set_final_time(struct CtScenario *scenario, double t_final);

// Runs the closed loop.
//
// # Safety
// `scenario` must come from a `ct_scenario_*` constructor; `out` valid.
enum CtStatus ct_simulate(const struct CtScenario *scenario, struct CtSimSummary *out);

// # Safety
// `scenario` must come from a `ct_scenario_*` constructor and not be used
// afterwards.
void ct_scenario_free(struct CtScenario *scenario);

// Library version, static NUL-terminated string.
const char *ct_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUBETHRUST_H */
