#include <stdio.h>
#include <string.h>

#include "qbae.h"

/* Michelson interferometer with m = omega_m = lambda = 1. */
static const double S[] = {1, 0, 0, 0, 0, 0, 1, 0};
static const double C[] = {0, .5, 0, .5, 0, .5, 0, -.5};
static const double OM[] = {1, 0, 0, 0, 0, 0, 1, 0};
static const double OP[] = {0, 0, 0, 0, 0, 0, 0, 0};

int main(void) {
    QbaeSystem *sys = NULL;
    if (qbae_system_new(2, 2, S, C, C, OM, OP, &sys) != QBAE_STATUS_OK) {
        char msg[256];
        qbae_last_error_message(msg, sizeof msg);
        fprintf(stderr, "new failed: %s\n", msg);
        return 1;
    }
    int verdict = 0;
    double residual = -1;
    if (qbae_certify_block(sys, QBAE_QUAD_Q, QBAE_QUAD_P, 0, &verdict, &residual) != QBAE_STATUS_OK
        || !verdict) {
        fprintf(stderr, "certificate failed\n");
        return 1;
    }
    QbaeStatus st = qbae_system_from_json("{\"name\": 1}", &sys);
    char msg[256];
    size_t len = qbae_last_error_message(msg, sizeof msg);
    if (st != QBAE_STATUS_PARSE_ERROR || len == 0 || strlen(msg) != (len < 255 ? len : 255)) {
        fprintf(stderr, "expected parse error\n");
        return 1;
    }
    qbae_system_free(sys);
    printf("ok %s\n", qbae_version());
    return 0;
}
