#include <math.h>
#include <stdio.h>
#include <string.h>
#include "teleport_sim.h"

#define CHECK(cond)                                                        \
    do {                                                                   \
        if (!(cond)) {                                                     \
            fprintf(stderr, "check failed: %s (%s)\n", #cond, ts_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    double range = 0.0;
    CHECK(ts_slant_range(14.5, 500.0, &range) == TS_STATUS_OK);
    CHECK(fabs(range - 1432.3) < 0.1);
    CHECK(ts_slant_range(-1.0, 500.0, &range) == TS_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(ts_last_error()) > 0);

    double f = 0.0;
    CHECK(ts_teleport_fidelity(1.0, 0.0, 0.0, 0.0, 0.933, 1.0, &f) == TS_STATUS_OK);
    CHECK(fabs(f - 0.9553333333) < 1e-9);

    TsConfig *cfg = ts_config_default();
    CHECK(cfg != NULL);
    CHECK(ts_config_set_seed(cfg, 7) == TS_STATUS_OK);
    TsResult *res = NULL;
    CHECK(ts_run_campaign(cfg, &res) == TS_STATUS_OK);
    uint64_t total = 0;
    double mean = 0.0, sigma = 0.0;
    CHECK(ts_result_summary(res, &total, &mean, &sigma) == TS_STATUS_OK);
    CHECK(total > 700 && total < 1150);
    CHECK(mean > 0.75 && mean < 0.85);
    for (size_t s = 0; s < TS_NUM_STATES; ++s) {
        uint64_t c = 0, w = 0;
        double fs = 0.0, e = 0.0;
        CHECK(ts_result_state(res, s, &c, &w, &fs, &e) == TS_STATUS_OK);
        CHECK(c > w);
    }
    char *json = NULL;
    CHECK(ts_result_to_json(res, &json) == TS_STATUS_OK);
    CHECK(strstr(json, "\"total_counts\"") != NULL);
    ts_string_free(json);
    ts_result_free(res);

    double budget[TS_BUDGET_ROWS];
    CHECK(ts_error_budget(cfg, budget) == TS_STATUS_OK);
    CHECK(fabs(budget[1] - 0.10) < 1e-6);
    ts_config_free(cfg);

    TsConfig *bad = NULL;
    CHECK(ts_config_from_toml("schema_version = 1", &bad) == TS_STATUS_CONFIG);
    CHECK(bad == NULL);
    printf("ffi smoke ok %s\n", ts_version());
    return 0;
}
