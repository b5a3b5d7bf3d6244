#ifndef FPME_H
#define FPME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FpmeStatus {
  FPME_STATUS_OK = 0,
  FPME_STATUS_NULL_POINTER = 1,
  FPME_STATUS_INVALID_ARGUMENT = 2,
  FPME_STATUS_GRID_MISMATCH = 3,
  FPME_STATUS_ASSEMBLY_FAILURE = 4,
  FPME_STATUS_NO_CONVERGENCE = 5,
  FPME_STATUS_CHECK_FAILED = 6,
  FPME_STATUS_STEP_TOO_LARGE = 7,
  FPME_STATUS_IO = 8,
  FPME_STATUS_PANIC = 9,
  FPME_STATUS_OTHER = 10,
} FpmeStatus;

typedef struct FpmeForm FpmeForm;

typedef struct FpmeGrid FpmeGrid;

typedef struct FpmeGroundState FpmeGroundState;

// Energy parameters; `alpha <= 0` selects the default `1 / (m - 1)`.
typedef struct FpmeParams {
  double s;
  double m;
  double alpha;
} FpmeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread; valid until the next call.
const char *fpme_last_error(void);

const char *fpme_version(void);

// Uniform grid with `n` interior nodes on `(a, b)`.
//
// # Safety
// `out` must be a valid pointer.
enum FpmeStatus fpme_grid_new(double a, double b, size_t n, struct FpmeGrid **out);

// # Safety
// `grid` must come from `fpme_grid_new` and not be used afterwards.
void fpme_grid_free(struct FpmeGrid *grid);

// # Safety
// `grid` must be a live handle; `n` and `h` valid pointers.
enum FpmeStatus fpme_grid_info(const struct FpmeGrid *grid, size_t *n, double *h);

// Copies the node abscissae into `out[0..len]`.
//
// # Safety
// `out` must hold `len` doubles.
enum FpmeStatus fpme_grid_nodes(const struct FpmeGrid *grid, double *out, size_t len);

// Assembles the stiffness form for fractional order `s`.
//
// # Safety
// `grid` must be live and `out` valid.
enum FpmeStatus fpme_form_assemble(const struct FpmeGrid *grid,
                                   double s,
                                   size_t quad_order,
                                   struct FpmeForm **out);

// # Safety
// `form` must come from `fpme_form_assemble` and not be used afterwards.
void fpme_form_free(struct FpmeForm *form);

// Row-major copy of the `n x n` matrix into `out[0..len]`, `len = n * n`.
//
// # Safety
// `out` must hold `len` doubles.
enum FpmeStatus fpme_form_matrix(const struct FpmeForm *form, double *out, size_t len);

// `y = A x`.
//
// # Safety
// `x` and `y` must hold `len` doubles.
enum FpmeStatus fpme_form_apply(const struct FpmeForm *form,
                                const double *x,
                                double *y,
                                size_t len);

// Writes 1 to `ok` when the matrix has the M-matrix sign pattern, else 0.
//
// # Safety
// `ok` must be valid.
enum FpmeStatus fpme_form_m_structure(const struct FpmeForm *form, int32_t *ok);

// Energy `1/2 phi^T A phi - (alpha / q) sum h |phi|^q`.
//
// # Safety
// `phi` must hold `len` doubles; `out` valid.
enum FpmeStatus fpme_energy(const struct FpmeForm *form,
                            struct FpmeParams p,
                            const double *phi,
                            size_t len,
                            double *out);

// Positive ground state of the Lane-Emden problem.
//
// # Safety
// `form` must be live and `out` valid.
enum FpmeStatus fpme_ground_state(const struct FpmeForm *form,
                                  struct FpmeParams p,
                                  struct FpmeGroundState **out);

// # Safety
// `gs` must come from `fpme_ground_state` and not be used afterwards.
void fpme_ground_state_free(struct FpmeGroundState *gs);

// First eigenvalue and ground level.
//
// # Safety
// All pointers must be valid.
enum FpmeStatus fpme_ground_state_levels(const struct FpmeGroundState *gs,
                                         double *lambda1,
                                         double *level);

// Nodal values of `w` into `out[0..len]`.
//
// # Safety
// `out` must hold `len` doubles.
enum FpmeStatus fpme_ground_state_values(const struct FpmeGroundState *gs, double *out, size_t len);

// One minimizing-movement step `v_prev -> v_new`; the new energy goes to `energy`.
//
// # Safety
// `v_prev` and `v_new` must hold `len` doubles; `energy` may be null.
enum FpmeStatus fpme_step(const struct FpmeForm *form,
                          struct FpmeParams p,
                          double h,
                          const double *v_prev,
                          double *v_new,
                          size_t len,
                          double *energy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPME_H */
