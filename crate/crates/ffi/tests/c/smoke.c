#include <math.h>
#include <stdio.h>
#include "algebroid_mech.h"

#define CHECK(call)                                                   \
    do {                                                              \
        AmStatus s_ = (call);                                         \
        if (s_ != AM_STATUS_OK) {                                     \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, am_last_error()); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    AmChart *chart = NULL;
    AmLagrangian *lag = NULL;
    AmTrajectory *tr = NULL;
    CHECK(am_chart_builtin("trivial_r1", &chart));
    CHECK(am_lagrangian_parse(chart, "v1^2/2", &lag));
    double s0[4] = {0.0, 0.0, 0.0, 6.0};
    CHECK(am_integrate(chart, lag, s0, 4, 0.0, 1.0, 1e-3, 0.0, &tr));
    size_t len = am_trajectory_len(tr);
    double end[4];
    CHECK(am_trajectory_state(tr, len - 1, end, 4));
    if (fabs(end[0] + 1.0) > 1e-12 || fabs(end[1] + 3.0) > 1e-12 || fabs(end[2] + 6.0) > 1e-12) {
        fprintf(stderr, "free cubic end state off: %.17g %.17g %.17g\n", end[0], end[1], end[2]);
        return 1;
    }
    if (am_chart_builtin("nope", &chart) != AM_STATUS_INVALID_ARGUMENT) return 1;
    am_trajectory_free(tr);
    am_lagrangian_free(lag);
    am_chart_free(chart);
    printf("ok %zu nodes\n", len);
    return 0;
}
