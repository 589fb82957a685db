/* C interface to the OPF-surrogate toolkit. All objects are opaque handles
 * created and released through this header; every function returns a status
 * code and a failing call leaves a message in gpopf_last_error(). Handles are
 * immutable after creation and safe to share across threads for reads. */
#ifndef GPOPF_H
#define GPOPF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GPOPF_API __declspec(dllexport)
#else
#define GPOPF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gpopf_status {
    GPOPF_OK = 0,
    GPOPF_ERR_IO = 1,
    GPOPF_ERR_INVALID = 2,  /* bad arguments, config or file contents */
    GPOPF_ERR_SOLVER = 3,   /* infeasible/unbounded/non-converged */
    GPOPF_ERR_CHECK = 4,    /* self-check failed */
    GPOPF_ERR_INTERNAL = 5
} gpopf_status;

typedef struct gpopf_feeder gpopf_feeder;
typedef struct gpopf_scenarios gpopf_scenarios;
typedef struct gpopf_dataset gpopf_dataset;
typedef struct gpopf_model gpopf_model;

/* Message for the most recent failure on this thread. */
GPOPF_API const char *gpopf_last_error(void);
GPOPF_API const char *gpopf_version(void);

/* ---- feeder ---- */
GPOPF_API gpopf_status gpopf_feeder_load(const char *path, gpopf_feeder **out);
GPOPF_API void gpopf_feeder_free(gpopf_feeder *f);
GPOPF_API int gpopf_feeder_bus_count(const gpopf_feeder *f);
GPOPF_API int gpopf_feeder_inverter_count(const gpopf_feeder *f);
GPOPF_API int gpopf_feeder_theta_dim(const gpopf_feeder *f);
GPOPF_API int gpopf_feeder_x_dim(const gpopf_feeder *f);
/* original bus id of inverter slot j (ascending order used everywhere) */
GPOPF_API int gpopf_feeder_inverter_bus(const gpopf_feeder *f, int j);

/* ---- scenarios (theta pools) ---- */
GPOPF_API gpopf_status gpopf_scenarios_generate(const gpopf_feeder *f, const char *config_json_path,
                                                uint64_t seed, gpopf_scenarios **out);
GPOPF_API gpopf_status gpopf_scenarios_load_csv(const gpopf_feeder *f, const char *path, gpopf_scenarios **out);
GPOPF_API gpopf_status gpopf_scenarios_save_csv(const gpopf_feeder *f, const gpopf_scenarios *s, const char *path);
GPOPF_API int gpopf_scenarios_count(const gpopf_scenarios *s);
GPOPF_API int gpopf_scenarios_time(const gpopf_scenarios *s, int index);
/* packed theta of one instance; theta must hold theta_dim doubles */
GPOPF_API gpopf_status gpopf_scenarios_theta(const gpopf_feeder *f, const gpopf_scenarios *s, int index,
                                             double *theta, int theta_len);
GPOPF_API void gpopf_scenarios_free(gpopf_scenarios *s);

/* ---- one-shot OPF solve ----
 * fix_v0 <= 0 keeps the feeder-file substation mode; kkt_tol <= 0 uses 1e-8.
 * Optional outputs may be NULL; x_out needs x_dim doubles. */
GPOPF_API gpopf_status gpopf_opf_solve(const gpopf_feeder *f, const double *theta, int theta_len, double fix_v0,
                                       double kkt_tol, double *x_out, int x_len, double *objective_out,
                                       double *exact_gap_out);

/* ---- labeled datasets ---- */
GPOPF_API gpopf_status gpopf_dataset_build(const gpopf_feeder *f, const gpopf_scenarios *s,
                                           int with_sensitivities, int drop_degenerate, double kkt_tol,
                                           gpopf_dataset **out);
GPOPF_API gpopf_status gpopf_dataset_save(const gpopf_dataset *d, const char *jsonl_path);
GPOPF_API gpopf_status gpopf_dataset_load(const char *jsonl_path, gpopf_dataset **out);
GPOPF_API int gpopf_dataset_count(const gpopf_dataset *d);
GPOPF_API int gpopf_dataset_with_jacobian_count(const gpopf_dataset *d);
GPOPF_API void gpopf_dataset_free(gpopf_dataset *d);

/* ---- surrogate models ----
 * target is pg:<bus>, qg:<bus> or v:<bus>; method is gp, si-gp, rf-gp or
 * rf-si-gp. rf_dim/rf_seed apply to the rf methods only. */
GPOPF_API gpopf_status gpopf_train(const gpopf_feeder *f, const gpopf_dataset *d, const char *target,
                                   const char *method, int rf_dim, uint64_t rf_seed, gpopf_model **out);
GPOPF_API gpopf_status gpopf_model_save(const gpopf_model *m, const char *path);
GPOPF_API gpopf_status gpopf_model_load(const char *path, gpopf_model **out);
GPOPF_API gpopf_status gpopf_predict(const gpopf_model *m, const double *theta, int theta_len, double *mean,
                                     double *std_dev);
GPOPF_API void gpopf_model_free(gpopf_model *m);

/* ---- power-flow feasibility ----
 * p_net/q_net are net injections at buses 1..N in internal order; v_out, if
 * given, receives N+1 squared voltages (entry 0 = substation). */
GPOPF_API gpopf_status gpopf_pf_solve(const gpopf_feeder *f, const double *p_net, const double *q_net, int len,
                                      double v0, double *v_out, double *residual_out, int *iterations_out);
/* Setpoints CSV has header t,bus,pg,qg; writes a per-instance report CSV. */
GPOPF_API gpopf_status gpopf_pf_check(const gpopf_feeder *f, const gpopf_scenarios *s, const char *setpoints_csv,
                                      double band, const char *report_csv);

/* ---- linearized OPF baseline ---- */
GPOPF_API gpopf_status gpopf_lopf_solve(const gpopf_feeder *f, const double *theta, int theta_len, double v0,
                                        double *pg_out, double *qg_out, int ng_len);

/* ---- end-to-end pipeline ----
 * Runs the full experiment described by the JSON config and writes the
 * report CSVs. self_check != 0 returns GPOPF_ERR_CHECK when the run's
 * consistency checks fail. */
GPOPF_API gpopf_status gpopf_pipeline_run(const char *config_json_path, int self_check);

#ifdef __cplusplus
}
#endif

#endif /* GPOPF_H */
