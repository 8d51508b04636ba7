#ifndef IACE_IACE_H
#define IACE_IACE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible entry point. */
typedef enum iace_status {
    IACE_OK = 0,
    IACE_ERR_INVALID_ARGUMENT = 1,
    IACE_ERR_PRECONDITION = 2,
    IACE_ERR_IO = 3,
    IACE_ERR_PARSE = 4,
    IACE_ERR_INTEGRITY = 5,
    IACE_ERR_INTERNAL = 6
} iace_status;

const char* iace_status_name(iace_status status);

/* Opaque experiment handle. Not thread-safe; use one handle per thread. */
typedef struct iace_experiment iace_experiment;

iace_experiment* iace_experiment_create(void);
void iace_experiment_destroy(iace_experiment* exp);

/* Replaces the configuration from a JSON document or file. */
iace_status iace_experiment_load_config(iace_experiment* exp, const char* json_text);
iace_status iace_experiment_load_config_file(iace_experiment* exp, const char* path);

/* Dotted-key override, e.g. iace_experiment_set(exp, "train.lambda", "0.5").
 * Values parse as JSON when possible and fall back to plain strings. */
iace_status iace_experiment_set(iace_experiment* exp, const char* dotted_key, const char* value);

/* Canonical config JSON / its 16-hex digest. Returned buffers belong to the
 * handle and stay valid until the next call on the same handle. */
const char* iace_experiment_config(iace_experiment* exp);
const char* iace_experiment_config_digest(iace_experiment* exp);

/* Runs one command: "imagine", "pretrain", "finetune", "evaluate" or "report". */
iace_status iace_experiment_run(iace_experiment* exp, const char* command);

/* JSON summary of the last successful run; empty string before any run. */
const char* iace_experiment_summary(const iace_experiment* exp);

/* JSON {"code", "name", "message", "details"} describing the last failure on
 * this handle; empty string if none. */
const char* iace_experiment_error(const iace_experiment* exp);

/* Stateless numeric helpers over double arrays of length n. */
iace_status iace_l2_normalize(const double* in, size_t n, double* out);
iace_status iace_spherical_loss(const double* target, const double* value, size_t n,
                                double* loss_out);
/* grad_out receives d(loss)/d(value); loss_out may be NULL. */
iace_status iace_spherical_loss_grad(const double* target, const double* value, size_t n,
                                     double* grad_out, double* loss_out);

#ifdef __cplusplus
}
#endif

#endif /* IACE_IACE_H */
