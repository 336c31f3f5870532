#ifndef GRANULAR_KINETICS_H
#define GRANULAR_KINETICS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
typedef struct GkSim GkSim;
typedef struct GkDiagram GkDiagram;

// Result of every API call.
typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  GK_STATUS_CONVERGENCE = 3,
  GK_STATUS_STABILITY = 4,
  GK_STATUS_BOUNDARY = 5,
  GK_STATUS_INDEX_OUT_OF_RANGE = 6,
  GK_STATUS_PANIC = 7,
} GkStatus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL terminated,
// truncated to `cap` bytes) and return the full message length in bytes,
// excluding the terminator. Call with a null `buf` or zero `cap` to query
// the required capacity.
//
// # Safety
// `buf` must be null or valid for `cap` writable bytes.
size_t gk_last_error_message(char *buf, size_t cap);

// Create the roadworks scenario: a 10-cell road with 6 speed classes, an
// empty start, constant inflow of density `rho0` (0 < rho0 <= 1), a road
// condition ramp over the work zone, and a free exit.
//
// # Safety
// `out` must be a valid pointer; the returned handle must be released with
// `gk_sim_free`.
enum GkStatus gk_sim_roadworks(double rho0, GkSim **out);

// Create the traffic-light scenario: `queue_cells` full standing cells
// (1 to 5) queued at a light that alternates 10 green, 10 red.
//
// # Safety
// `out` must be a valid pointer; the returned handle must be released with
// `gk_sim_free`.
enum GkStatus gk_sim_traffic_light(size_t queue_cells, GkSim **out);

// Create a custom road: `m` cells, `n` speed classes, uniform road
// condition `alpha`, anticipation `beta`, rate coefficient `eta0`, uniform
// initial density `initial_rho`, constant inflow of density `inflow_rho`,
// and exit limiter `right_limiter`.
//
// # Safety
// `out` must be a valid pointer; the returned handle must be released with
// `gk_sim_free`.
enum GkStatus gk_sim_custom(size_t m,
                            size_t n,
                            double alpha,
                            double beta,
                            double eta0,
                            double initial_rho,
                            double inflow_rho,
                            double right_limiter,
                            GkSim **out);

// Advance the simulation by `steps` explicit steps of the built-in step
// size (see `gk_sim_dt`).
//
// # Safety
// `sim` must be a live handle from one of the constructors.
enum GkStatus gk_sim_step(GkSim *sim, uint64_t steps);

// Current simulation time.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum GkStatus gk_sim_time(const GkSim *sim, double *out);

// Step size used by `gk_sim_step`.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum GkStatus gk_sim_dt(const GkSim *sim, double *out);

// Number of cells and speed classes.
//
// # Safety
// `sim` must be a live handle; `m_out` and `n_out` must be valid pointers.
enum GkStatus gk_sim_dims(const GkSim *sim, size_t *m_out, size_t *n_out);

// Copy the full distribution f_ij, row major by cell, into `buf`.
// `len` must equal cells x classes.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` doubles.
enum GkStatus gk_sim_distribution(const GkSim *sim, double *buf, size_t len);

// Per-cell density into `buf` of length cells.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` doubles.
enum GkStatus gk_sim_density(const GkSim *sim, double *buf, size_t len);

// Per-cell flux into `buf` of length cells.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` doubles.
enum GkStatus gk_sim_flux(const GkSim *sim, double *buf, size_t len);

// Per-cell mean speed into `buf` of length cells. Empty cells have no mean
// speed and are marked NaN.
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` doubles.
enum GkStatus gk_sim_mean_speed(const GkSim *sim, double *buf, size_t len);

// Per-cell speed variance into `buf` of length cells (zero on empty cells).
//
// # Safety
// `sim` must be a live handle and `buf` valid for `len` doubles.
enum GkStatus gk_sim_variance(const GkSim *sim, double *buf, size_t len);

// Total vehicle mass on the road.
//
// # Safety
// `sim` must be a live handle and `out` a valid pointer.
enum GkStatus gk_sim_total_mass(const GkSim *sim, double *out);

// Release a simulation handle. A null handle is a no-op.
//
// # Safety
// `sim` must be null or a handle not freed before.
void gk_sim_free(GkSim *sim);

// Compute long-time flux/speed/variance curves for road condition `alpha`
// over the density grid `rho_start:rho_stop:rho_step` with `n` speed
// classes and rate coefficient `eta0`. Fails with GK_STATUS_CONVERGENCE
// if any grid point does not reach a certified steady state.
//
// # Safety
// `out` must be a valid pointer; the returned handle must be released with
// `gk_diagram_free`.
enum GkStatus gk_diagram_compute(double alpha,
                                 double rho_start,
                                 double rho_stop,
                                 double rho_step,
                                 size_t n,
                                 double eta0,
                                 GkDiagram **out);

// Number of grid points in a diagram.
//
// # Safety
// `diagram` must be a live handle and `out` a valid pointer.
enum GkStatus gk_diagram_len(const GkDiagram *diagram, size_t *out);

// Read one diagram row. The mean speed is NaN on the empty road.
//
// # Safety
// `diagram` must be a live handle; `rho`, `q`, `u`, `theta` must be valid
// pointers.
enum GkStatus gk_diagram_row(const GkDiagram *diagram,
                             size_t index,
                             double *rho,
                             double *q,
                             double *u,
                             double *theta);

// Release a diagram handle. A null handle is a no-op.
//
// # Safety
// `diagram` must be null or a handle not freed before.
void gk_diagram_free(GkDiagram *diagram);

// Density of the speed-variance peak for road condition `alpha` on the
// canonical 6-class lattice with eta0 = 1, scanned at `resolution`.
//
// # Safety
// `out` must be a valid pointer.
enum GkStatus gk_critical_density(double alpha, double resolution, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRANULAR_KINETICS_H */
