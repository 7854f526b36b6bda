#include <math.h>
#include <stdio.h>
#include "gpmhe.h"

#define CHECK(c) do { if (!(c)) { fprintf(stderr, "failed: %s\n", #c); return 1; } } while (0)

int main(void) {
    double xs[6] = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
    double ys[6];
    for (int i = 0; i < 6; i++) ys[i] = sin(xs[i]);
    double ell = 1.0;
    GpmheGp *gp = NULL;
    CHECK(gpmhe_gp_fit(xs, ys, 6, 1, 1.0, &ell, 1e-3, &gp) == GPMHE_STATUS_OK);
    double x = 1.0, mean = 0.0, var = 0.0;
    CHECK(gpmhe_gp_predict(gp, &x, 1, &mean, &var) == GPMHE_STATUS_OK);
    CHECK(fabs(mean - sin(1.0)) < 1e-2);
    CHECK(gpmhe_gp_predict(gp, &x, 1, &mean, NULL) == GPMHE_STATUS_NULL_POINTER);
    char msg[64];
    CHECK(gpmhe_last_error_message(msg, sizeof msg) > 0);
    gpmhe_gp_free(gp);

    double lo[2] = {0.1, 0.1}, hi[2] = {4.5, 4.5};
    uint64_t cover = 0;
    CHECK(gpmhe_covering_number(lo, hi, 2, 0.1, &cover) == GPMHE_STATUS_OK);
    CHECK(cover == 1024);
    printf("ok\n");
    return 0;
}
