#ifndef GIBBS_CL_H
#define GIBBS_CL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define GCL_MODEL_ISING_ISOTROPIC 0

#define GCL_MODEL_ISING_ANISOTROPIC 1

#define GCL_MODEL_AUTOLOGISTIC 2

typedef enum GclStatus {
  GCL_STATUS_OK = 0,
  GCL_STATUS_NULL_POINTER = 1,
  GCL_STATUS_INVALID_ARGUMENT = 2,
  GCL_STATUS_DIMENSION_MISMATCH = 3,
  GCL_STATUS_BUFFER_TOO_SMALL = 4,
  GCL_STATUS_NUMERICAL = 5,
  GCL_STATUS_NO_CONVERGENCE = 6,
  GCL_STATUS_PANIC = 7,
} GclStatus;

// Modes, weights and curvature matrix of one calibration.
typedef struct GclCalibration GclCalibration;

// Observed lattice.
typedef struct GclLattice GclLattice;

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *gcl_last_error_message(void);

// Library version as a static string.
const char *gcl_version(void);

// Copies `rows × cols` spins into a new lattice.
//
// # Safety
// `values` must point to `rows × cols` readable bytes; `out` must be writable.
enum GclStatus gcl_lattice_new(uintptr_t rows,
                               uintptr_t cols,
                               const int8_t *values,
                               struct GclLattice **out);

// Exact draw from the model.
//
// # Safety
// `theta` must hold `theta_len` values; `out` must be writable.
enum GclStatus gcl_lattice_simulate(uint32_t model_code,
                                    const double *theta,
                                    uintptr_t theta_len,
                                    uintptr_t rows,
                                    uintptr_t cols,
                                    uint64_t seed,
                                    struct GclLattice **out);

// # Safety
// `lattice` must come from this library and not be used afterwards.
void gcl_lattice_free(struct GclLattice *lattice);

// Row count, 0 for a null handle.
//
// # Safety
// `lattice` must be null or a live handle.
uintptr_t gcl_lattice_rows(const struct GclLattice *lattice);

// Column count, 0 for a null handle.
//
// # Safety
// `lattice` must be null or a live handle.
uintptr_t gcl_lattice_cols(const struct GclLattice *lattice);

// Copies the spins, column-major, into `buf`.
//
// # Safety
// `buf` must hold `len` writable bytes.
enum GclStatus gcl_lattice_values(const struct GclLattice *lattice, int8_t *buf, uintptr_t len);

// Sufficient statistics of the lattice under the model.
//
// # Safety
// `out` must hold `len` writable values.
enum GclStatus gcl_sufficient_statistics(const struct GclLattice *lattice,
                                         uint32_t model_code,
                                         double *out,
                                         uintptr_t len);

// Exact `log z(θ)` of a `rows × cols` lattice.
//
// # Safety
// `theta` must hold `theta_len` values; `out` must be writable.
enum GclStatus gcl_log_partition(uint32_t model_code,
                                 const double *theta,
                                 uintptr_t theta_len,
                                 uintptr_t rows,
                                 uintptr_t cols,
                                 double *out);

// Log pseudolikelihood.
//
// # Safety
// `theta` must hold `theta_len` values; `out` must be writable.
enum GclStatus gcl_log_pseudolikelihood(const struct GclLattice *lattice,
                                        uint32_t model_code,
                                        const double *theta,
                                        uintptr_t theta_len,
                                        double *out);

// Composite log-likelihood over every `block_side × block_side` block,
// each with weight `weight`.
//
// # Safety
// `theta` must hold `theta_len` values; `out` must be writable.
enum GclStatus gcl_log_composite_likelihood(const struct GclLattice *lattice,
                                            uint32_t model_code,
                                            uintptr_t block_side,
                                            const double *theta,
                                            uintptr_t theta_len,
                                            double weight,
                                            double *out);

// Estimates both modes, the magnitude weights and the curvature matrix.
//
// # Safety
// `out` must be writable.
enum GclStatus gcl_calibrate(const struct GclLattice *lattice,
                             uint32_t model_code,
                             uintptr_t block_side,
                             uintptr_t gradient_draws,
                             uintptr_t covariance_draws,
                             uint64_t seed,
                             struct GclCalibration **out);

// # Safety
// `calibration` must come from this library and not be used afterwards.
void gcl_calibration_free(struct GclCalibration *calibration);

// Parameter dimension, 0 for a null handle.
//
// # Safety
// `calibration` must be null or a live handle.
uintptr_t gcl_calibration_dim(const struct GclCalibration *calibration);

// Full-posterior mode `θ*` and composite mode `θ*_CL`.
//
// # Safety
// Both buffers must hold `len` writable values.
enum GclStatus gcl_calibration_modes(const struct GclCalibration *calibration,
                                     double *theta_star,
                                     double *theta_cl,
                                     uintptr_t len);

// Magnitude weight for option 1 to 5, or 0 for the scalar weight of
// one-parameter models.
//
// # Safety
// `out` must be writable.
enum GclStatus gcl_calibration_weight(const struct GclCalibration *calibration,
                                      uint8_t option,
                                      double *out);

// Curvature matrix `W`, row-major `d × d`.
//
// # Safety
// `out` must hold `len` writable values.
enum GclStatus gcl_calibration_curvature(const struct GclCalibration *calibration,
                                         double *out,
                                         uintptr_t len);

// JSON report; release with [`gcl_string_free`]. Null on failure.
//
// # Safety
// `calibration` must be null or a live handle.
char *gcl_calibration_to_json(const struct GclCalibration *calibration);

// # Safety
// `s` must come from this library and not be used afterwards.
void gcl_string_free(char *s);

#endif  /* GIBBS_CL_H */
