/* C interface to the regularized Gauss-Newton solver suite.
 *
 * All functions return IRGNM_OK (0) on success or a negative error code;
 * irgnm_strerror names the code and irgnm_last_error returns a thread-local
 * detail message for the most recent failure on the calling thread. Objects
 * are created behind opaque handles and released with the matching _destroy.
 */
#ifndef IRGNM_H
#define IRGNM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define IRGNM_OK 0
#define IRGNM_ERR_INVALID_ARGUMENT (-1)
#define IRGNM_ERR_PARSE (-2)
#define IRGNM_ERR_IO (-3)
#define IRGNM_ERR_NO_CONVERGENCE (-4)
#define IRGNM_ERR_INTERNAL (-5)

const char* irgnm_version(void);
const char* irgnm_strerror(int code);
const char* irgnm_last_error(void);

/* Configuration: a flat key=value store mirroring the config-file format.
 * Keys include variant, N, kappa, delta, rho, alpha0, theta, tau, seed,
 * noise_levels, runs_per_level, noise_model, max_outer, kkt_tol, max_inner,
 * max_newton, newton_reduction, p, c_tc, gamma, c_eta, tau_bar, tau_hat,
 * zeta_bar, compute_estimators, threads. Values are validated when a solver
 * entry point materializes the configuration.
 */
typedef struct irgnm_config irgnm_config;

int irgnm_config_create(irgnm_config** out);
void irgnm_config_destroy(irgnm_config* config);
int irgnm_config_set(irgnm_config* config, const char* key, const char* value);
/* Reads key=value lines ('#' comments and blank lines ignored). */
int irgnm_config_load_file(irgnm_config* config, const char* path);
/* Copies the stored value for key into buf (NUL-terminated). */
int irgnm_config_get(const irgnm_config* config, const char* key, char* buf, size_t bufsize);

/* Results of a solve or sweep: one table row per noise level. */
typedef struct irgnm_result irgnm_result;

void irgnm_result_destroy(irgnm_result* result);
int irgnm_result_levels(const irgnm_result* result, int* count);
int irgnm_result_table_row(const irgnm_result* result, int level, double* delta,
                           double* err_spot1, double* err_spot2, double* err_spot3,
                           double* err_l1, double* k_star_mean);

/* Single reconstruction at the configured noise level (key "delta"); writes
 * the iteration trace and field dumps under out_dir when it is non-NULL. */
int irgnm_solve(const irgnm_config* config, const char* out_dir, irgnm_result** out);

/* Noise sweep over the configured levels and repetitions; writes table.csv,
 * runs.csv and per-run outputs under out_dir when it is non-NULL. */
int irgnm_sweep(const irgnm_config* config, const char* out_dir, irgnm_result** out);

/* Sampled tangential-cone diagnostic around the exact source. */
int irgnm_diagnose_tc(const irgnm_config* config, double radius, int samples,
                      double* max_ratio, int* skipped);

/* Convergence-theory constants for the configured parameters. Pass d0 < 0 to
 * derive it from a synthesized data set's initial residual, and r_dagger < 0
 * to use the exact source's regularizer value. */
typedef struct irgnm_theory_report {
  double c_gamma;          /* power inequality constant */
  double q;                /* residual decay contraction factor */
  int schedule_admissible; /* 1 when q < theta < 1 */
  double d0;               /* initial decay quantity actually used */
  double k_bar;            /* stopping index bound (NaN when vacuous) */
  int k_bar_vacuous;
} irgnm_theory_report;

int irgnm_theory(const irgnm_config* config, double delta, double d0, double r_dagger,
                 irgnm_theory_report* out);

#ifdef __cplusplus
}
#endif

#endif /* IRGNM_H */
