#ifndef IBS_RISK_H
#define IBS_RISK_H

/* C interface for the ibs-risk library: estimation risk of inverse
 * binomial sampling estimators p_hat = omega / (N + c).
 *
 * Maintained by hand in cbindgen output style (the build environment
 * cannot fetch cbindgen). If the exported functions in
 * crates/ibs-risk-capi/src/lib.rs change, update this header; the test
 * header_lists_exactly_the_exported_symbols keeps the two in sync.
 *
 * Conventions: every fallible call returns an IbsStatus (IBS_STATUS_OK is
 * zero) and writes its results through out-pointers only on success.
 * ibs_last_error_message() describes the most recent failure on the
 * calling thread; the returned pointer stays valid until the next failing
 * call on that thread. Panics inside the library never unwind across this
 * boundary; they surface as IBS_STATUS_PANIC.
 */

#include <stdbool.h>
#include <stdint.h>

/**
 * Status code returned by every fallible API call.
 */
typedef enum IbsStatus {
  IBS_STATUS_OK = 0,
  IBS_STATUS_DOMAIN = 1,
  IBS_STATUS_OVERFLOW = 2,
  IBS_STATUS_NON_CONVERGENCE = 3,
  IBS_STATUS_DIVERGENCE = 4,
  IBS_STATUS_NO_OPTIMUM = 5,
  IBS_STATUS_SCHEMA = 6,
  IBS_STATUS_IO = 7,
  IBS_STATUS_NULL_ARGUMENT = 8,
  IBS_STATUS_INVALID_UTF8 = 9,
  IBS_STATUS_PANIC = 10,
} IbsStatus;

/**
 * Opaque loss handle.
 */
typedef struct IbsLoss IbsLoss;

/**
 * Optimization result in plain-old-data form. The Rust API additionally
 * carries textual unchecked-hypothesis notes; here only their count is
 * exposed.
 */
typedef struct IbsOptimum {
  double omega_star;
  double eta_star;
  double bracket_lo;
  double bracket_hi;
  uint32_t iterations;
  uint32_t unchecked_hypothesis_count;
  double stationarity_residual;
  bool multiplicity_warning;
} IbsOptimum;

#ifdef __cplusplus
extern "C" {
#endif  /* __cplusplus */

/**
 * Most recent error message on this thread (empty string if none).
 * The pointer stays valid until the next failing call on this thread.
 */
const char *ibs_last_error_message(void);

/**
 * Squared-error loss (x - 1)^2.
 */
IbsStatus ibs_loss_new_mse(struct IbsLoss **out);

/**
 * Absolute-error loss |x - 1|.
 */
IbsStatus ibs_loss_new_mae(struct IbsLoss **out);

/**
 * Two-coefficient interval loss: a2 below 1/mu2, zero on [1/mu2, mu1],
 * a1 above mu1. Requires mu1, mu2 > 1.
 */
IbsStatus ibs_loss_new_generalized_interval(double a1,
                                            double a2,
                                            double mu1,
                                            double mu2,
                                            struct IbsLoss **out);

/**
 * Build a loss from a description string: a built-in name (mse, mae,
 * constant-one), an inline spec such as
 * generalized_interval:a1=1,a2=1,mu1=2,mu2=2, or a path to a loss
 * description JSON file — the same syntax the CLI --loss flag accepts.
 */
IbsStatus ibs_loss_from_spec(const char *spec, struct IbsLoss **out);

/**
 * Release a loss handle. NULL is tolerated.
 */
void ibs_loss_free(struct IbsLoss *loss);

/**
 * Asymptotic (small-p) normalized risk of p_hat = omega / (N + c) and a
 * bound on the evaluation error.
 */
IbsStatus ibs_asymptotic_risk(const struct IbsLoss *loss,
                              uint32_t r,
                              double omega,
                              double *eta_bar,
                              double *abs_error);

/**
 * Derivative of the asymptotic risk with respect to omega.
 */
IbsStatus ibs_asymptotic_risk_derivative(const struct IbsLoss *loss,
                                         uint32_t r,
                                         double omega,
                                         double *derivative);

/**
 * Minimize the asymptotic risk over omega with default tolerances.
 */
IbsStatus ibs_find_optimum(const struct IbsLoss *loss,
                           uint32_t r,
                           struct IbsOptimum *out);

/**
 * Exact finite-p risk of p_hat = omega / (N + c) by certified series
 * summation: eta gets the partial sum, error_bound the certified
 * truncation bound (at most tol on success).
 */
IbsStatus ibs_exact_risk(const struct IbsLoss *loss,
                         uint32_t r,
                         double p,
                         double omega,
                         int64_t c,
                         double tol,
                         double *eta,
                         double *error_bound);

/**
 * Monte Carlo estimate of the finite-p risk with default batching:
 * eta gets the sample mean, standard_error the standard error of the
 * mean. Fixed seed gives reproducible results.
 */
IbsStatus ibs_simulate_risk(const struct IbsLoss *loss,
                            uint32_t r,
                            double p,
                            double omega,
                            int64_t c,
                            uint64_t samples,
                            uint64_t seed,
                            double *eta,
                            double *standard_error);

#ifdef __cplusplus
}  /* extern "C" */
#endif  /* __cplusplus */

#endif  /* IBS_RISK_H */
