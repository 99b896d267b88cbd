#ifndef METARES_H
#define METARES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum MetaresStatus {
  METARES_STATUS_OK = 0,
  METARES_STATUS_NULL_POINTER = 1,
  METARES_STATUS_INVALID_ARGUMENT = 2,
  METARES_STATUS_CONFIG = 3,
  METARES_STATUS_SIMULATION = 4,
  METARES_STATUS_DATA = 5,
  METARES_STATUS_IO = 6,
  METARES_STATUS_VERIFICATION = 7,
  METARES_STATUS_PANIC = 8,
} MetaresStatus;

/**
 * Lattice variant for [`metares_lattice_build`].
 */
typedef enum MetaresVariant {
  METARES_VARIANT_NONLINEAR = 0,
  METARES_VARIANT_LINEARIZED = 1,
} MetaresVariant;

/**
 * Experiment configuration.
 */
typedef struct MetaresConfig MetaresConfig;

/**
 * Lattice model.
 */
typedef struct MetaresLattice MetaresLattice;

/**
 * Time x sensor readout matrix.
 */
typedef struct MetaresState MetaresState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. Valid until the next call on the same thread.
 */
const char *metares_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *metares_version(void);

/**
 * Default experiment configuration.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum MetaresStatus metares_config_default(struct MetaresConfig **out);

/**
 * Parse a configuration from JSON text. Missing fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MetaresStatus metares_config_from_json(const char *json, struct MetaresConfig **out);

/**
 * # Safety
 * `config` must be a handle from this library.
 */
enum MetaresStatus metares_config_set_seed(struct MetaresConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be null or a handle from this library, freed once.
 */
void metares_config_free(struct MetaresConfig *config);

/**
 * Build the configured lattice with orientations drawn from the config's
 * master seed.
 *
 * # Safety
 * `config` must be a handle from this library and `out` a valid pointer.
 */
enum MetaresStatus metares_lattice_build(const struct MetaresConfig *config,
                                         enum MetaresVariant variant,
                                         struct MetaresLattice **out);

/**
 * Lowest natural frequency of the linearized lattice, Hz.
 *
 * # Safety
 * `lattice` must be a handle from this library and `out` a valid pointer.
 */
enum MetaresStatus metares_lattice_fundamental_hz(const struct MetaresLattice *lattice,
                                                  double *out);

/**
 * # Safety
 * `lattice` must be null or a handle from this library, freed once.
 */
void metares_lattice_free(struct MetaresLattice *lattice);

/**
 * Drive the lattice from rest with `force` (N) at its drive node and
 * sample the readouts at `sample_rate`.
 *
 * # Safety
 * `force` must point to `len` doubles; other pointers must be valid.
 */
enum MetaresStatus metares_simulate(const struct MetaresLattice *lattice,
                                    const double *force,
                                    size_t len,
                                    double sample_rate,
                                    struct MetaresState **out);

/**
 * Read a state CSV and its metadata sidecar.
 *
 * # Safety
 * Paths must be NUL-terminated strings and `out` a valid pointer.
 */
enum MetaresStatus metares_state_ingest_csv(const char *csv_path,
                                            const char *meta_path,
                                            struct MetaresState **out);

/**
 * Write a state CSV and its metadata sidecar.
 *
 * # Safety
 * `state` must be a handle from this library; paths NUL-terminated.
 */
enum MetaresStatus metares_state_export_csv(const struct MetaresState *state,
                                            const char *csv_path,
                                            const char *meta_path);

/**
 * Number of time samples and of sensors.
 *
 * # Safety
 * `state` must be a handle from this library; outputs may be null.
 */
enum MetaresStatus metares_state_shape(const struct MetaresState *state,
                                       size_t *rows,
                                       size_t *cols);

/**
 * Copy the data row-major into `buf`, which must hold rows * cols values.
 *
 * # Safety
 * `buf` must point to `cap` writable doubles.
 */
enum MetaresStatus metares_state_copy(const struct MetaresState *state, double *buf, size_t cap);

/**
 * Copy sensor `index`'s id, NUL-terminated, into `buf`. `needed`
 * receives the buffer size required, including the terminator, so a
 * first call with `cap = 0` can size the buffer.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null when `cap` is 0).
 */
enum MetaresStatus metares_state_sensor_id(const struct MetaresState *state,
                                           size_t index,
                                           char *buf,
                                           size_t cap,
                                           size_t *needed);

/**
 * # Safety
 * `state` must be null or a handle from this library, freed once.
 */
void metares_state_free(struct MetaresState *state);

/**
 * Train a ridge readout on the first `train_frac` of the samples and
 * score it on the rest. `ridge` is relative to the mean feature variance;
 * pass 0 for ordinary least squares.
 *
 * # Safety
 * `target` must point to as many doubles as the state has rows.
 */
enum MetaresStatus metares_train_score(const struct MetaresState *state,
                                       const double *target,
                                       size_t len,
                                       double train_frac,
                                       double ridge,
                                       double *r2_train,
                                       double *r2_test);

/**
 * Run a CLI command (`simulate`, `run`, `sweep`, `select`, `atlas`,
 * `metrics`) and write its bundle to `out_dir`.
 *
 * # Safety
 * `config` must be a handle from this library; strings NUL-terminated.
 */
enum MetaresStatus metares_run(const struct MetaresConfig *config,
                               const char *command,
                               const char *out_dir);

/**
 * Re-hash a bundle against its manifest.
 *
 * # Safety
 * `dir` must be a NUL-terminated string.
 */
enum MetaresStatus metares_verify(const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METARES_H */
