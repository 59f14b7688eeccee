#include <stdio.h>
#include "hermit.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        HermitStatus st_ = (call);                                         \
        if (st_ != HERMIT_STATUS_OK) {                                     \
            const char *m_ = hermit_last_error();                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_, m_ ? m_ : ""); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    HermitEngine *e = NULL;
    size_t b, c, hermit, baseline, n_h, n_b;
    HermitResult *rh = NULL, *rb = NULL;

    CHECK(hermit_engine_generate("sigmoid", 20000, 0.01, 3, 0, false, &e));
    CHECK(hermit_engine_column(e, "B", &b));
    CHECK(hermit_engine_column(e, "C", &c));
    CHECK(hermit_create_hermit_index(e, c, b, "error_bound=8", &hermit));
    CHECK(hermit_create_baseline_index(e, c, &baseline));
    CHECK(hermit_lookup(e, hermit, 250000.0, 260000.0, &rh));
    CHECK(hermit_lookup(e, baseline, 250000.0, 260000.0, &rb));

    n_h = hermit_result_len(rh);
    n_b = hermit_result_len(rb);
    if (n_h != n_b || n_h == 0) {
        fprintf(stderr, "result sizes differ: %zu vs %zu\n", n_h, n_b);
        return 1;
    }
    const int64_t *kh = hermit_result_keys(rh), *kb = hermit_result_keys(rb);
    for (size_t i = 0; i < n_h; i++) {
        if (kh[i] != kb[i]) {
            fprintf(stderr, "key %zu differs\n", i);
            return 1;
        }
    }
    if (hermit_lookup(e, 99, 0.0, 1.0, &rh) != HERMIT_STATUS_UNKNOWN_INDEX || hermit_last_error() == NULL) {
        return 1;
    }
    hermit_result_free(rh);
    hermit_result_free(rb);
    hermit_engine_free(e);
    printf("ok %zu\n", n_h);
    return 0;
}
