#ifndef FRAC_H
#define FRAC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum FracStatus {
  FRAC_STATUS_OK = 0,
  FRAC_STATUS_NULL_POINTER = 1,
  FRAC_STATUS_INVALID_UTF8 = 2,
  FRAC_STATUS_INVALID_CONFIG = 3,
  FRAC_STATUS_INVALID_SCENE = 4,
  FRAC_STATUS_OVERFLOW = 5,
  FRAC_STATUS_LENGTH_MISMATCH = 6,
  FRAC_STATUS_INVALID_SELECTION = 7,
  FRAC_STATUS_DIMENSION_MISMATCH = 8,
  FRAC_STATUS_EIG_FAILURE = 9,
  FRAC_STATUS_NON_FINITE = 10,
  FRAC_STATUS_DEGENERATE_CORE = 11,
  FRAC_STATUS_SUBSPACE_COLLAPSE = 12,
  FRAC_STATUS_OUT_OF_DOMAIN = 13,
  FRAC_STATUS_COMBINATORIAL_BLOWUP = 14,
  FRAC_STATUS_SINGULAR_FISHER = 15,
  FRAC_STATUS_PARSE = 16,
  FRAC_STATUS_IO = 17,
  FRAC_STATUS_INDEX_OUT_OF_RANGE = 18,
  FRAC_STATUS_BUFFER_TOO_SMALL = 19,
  FRAC_STATUS_PANIC = 20,
} FracStatus;

// Estimated targets, strongest first.
typedef struct FracEstimates FracEstimates;

// Scenario: radar configuration, targets, noise level and seed.
typedef struct FracScenario FracScenario;

// One synthesized frame of measurements.
typedef struct FracSnapshot FracSnapshot;

typedef struct FracTarget {
  double r_m;
  double v_mps;
  double theta_deg;
  double beta_re;
  double beta_im;
} FracTarget;

typedef struct FracResolution {
  double range_m;
  double velocity_mps;
  double doa_broadside_deg;
  double doa_nominal_deg;
} FracResolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *frac_last_error(void);

const char *frac_version(void);

void frac_string_free(char *s);

// Default scenario: the reference configuration with three targets at 20 dB.
struct FracScenario *frac_scenario_new(void);

// Parse a scenario from `key: value` text.
enum FracStatus frac_scenario_parse(const char *text, struct FracScenario **out);

void frac_scenario_free(struct FracScenario *sc);

enum FracStatus frac_scenario_set_snr_db(struct FracScenario *sc, double snr_db);

enum FracStatus frac_scenario_set_seed(struct FracScenario *sc, uint64_t seed);

enum FracStatus frac_scenario_target_count(const struct FracScenario *sc, uintptr_t *out);

// Synthesize the scenario's snapshot (frame and noise drawn from its seed).
enum FracStatus frac_snapshot_synthesize(const struct FracScenario *sc, struct FracSnapshot **out);

void frac_snapshot_free(struct FracSnapshot *s);

// Rows (`N·K`) and columns (`Qr`) of the measurement matrix.
enum FracStatus frac_snapshot_dims(const struct FracSnapshot *s, uintptr_t *rows, uintptr_t *cols);

enum FracStatus frac_snapshot_sigma2(const struct FracSnapshot *s, double *out);

// Copy the measurements row by row as interleaved real/imaginary pairs into
// `buf`, which must hold `2·rows·cols` doubles.
enum FracStatus frac_snapshot_copy(const struct FracSnapshot *s, double *buf, uintptr_t len);

// Estimate `targets` targets with the named algorithm (`danm2-hooi`,
// `danm2-match`, `ddanm-hooi`, `ddanm-match`, `l1`, `omp`).
enum FracStatus frac_estimate(const struct FracSnapshot *s,
                              const char *algorithm,
                              uintptr_t targets,
                              struct FracEstimates **out);

void frac_estimates_free(struct FracEstimates *e);

enum FracStatus frac_estimates_len(const struct FracEstimates *e, uintptr_t *out);

enum FracStatus frac_estimates_get(const struct FracEstimates *e,
                                   uintptr_t index,
                                   struct FracTarget *out);

enum FracStatus frac_estimates_residual(const struct FracEstimates *e, double *out);

enum FracStatus frac_bits_per_pulse(uintptr_t p,
                                    uintptr_t m,
                                    uintptr_t k,
                                    uintptr_t pm_levels,
                                    uint32_t *out);

// Encode a hexadecimal bit string (one frame's worth) into frame text.
enum FracStatus frac_codec_encode(const struct FracScenario *sc,
                                  const char *hex,
                                  char **frame_text);

// Decode frame text back into the hexadecimal bit string.
enum FracStatus frac_codec_decode(const struct FracScenario *sc,
                                  const char *frame_text,
                                  char **hex);

enum FracStatus frac_resolution(const struct FracScenario *sc, struct FracResolution *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAC_H */
