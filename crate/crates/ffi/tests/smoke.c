#include <math.h>
#include <stdio.h>
#include "fpme.h"

#define N 32

int main(void) {
    FpmeGrid *grid = NULL;
    FpmeForm *form = NULL;
    FpmeGroundState *gs = NULL;
    FpmeParams p = {0.5, 2.0, 0.0};
    double w[N], v[N], lambda1, level, energy;

    if (fpme_grid_new(-1.0, 1.0, 4, &grid) != FPME_STATUS_INVALID_ARGUMENT) return 1;
    if (fpme_grid_new(-1.0, 1.0, N, &grid) != FPME_STATUS_OK) return 2;
    if (fpme_form_assemble(grid, 0.5, 8, &form) != FPME_STATUS_OK) return 3;
    if (fpme_ground_state(form, p, &gs) != FPME_STATUS_OK) return 4;
    if (fpme_ground_state_levels(gs, &lambda1, &level) != FPME_STATUS_OK) return 5;
    if (!(level < 0.0 && lambda1 > 0.0)) return 6;
    if (fpme_ground_state_values(gs, w, N) != FPME_STATUS_OK) return 7;
    if (fpme_ground_state_values(gs, w, N - 1) != FPME_STATUS_GRID_MISMATCH) return 8;
    if (fpme_energy(form, p, w, N, &energy) != FPME_STATUS_OK) return 9;
    if (fabs(energy - level) > 1e-12) return 10;
    for (int i = 0; i < N; i++) v[i] = sqrt(w[i]);
    if (fpme_step(form, p, 0.05, v, v, N, &energy) != FPME_STATUS_OK) return 11;
    if (fpme_step(form, p, 1.0, v, v, N, NULL) != FPME_STATUS_STEP_TOO_LARGE) return 12;
    if (fpme_last_error()[0] == '\0') return 13;
    printf("fpme %s lambda1=%.6f level=%.6e\n", fpme_version(), lambda1, level);
    fpme_ground_state_free(gs);
    fpme_form_free(form);
    fpme_grid_free(grid);
    return 0;
}
