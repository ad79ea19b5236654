#include <math.h>
#include <stdio.h>
#include <string.h>

#include "opinf.h"

#define CHECK(call)                                                             \
  do {                                                                          \
    OpinfStatus st_ = (call);                                                   \
    if (st_ != OPINF_STATUS_OK) {                                               \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)st_,                  \
              opinf_last_error_message());                                      \
      return 1;                                                                 \
    }                                                                           \
  } while (0)

int main(void) {
  OpinfModel *model = NULL;
  size_t nv = 0, np = 0, m = 0;
  CHECK(opinf_model_random(0, 4, 1, 1, 0, &model));
  CHECK(opinf_model_dims(model, &nv, &np, &m));
  if (nv != 4 || np != 1 || m != 1) return 2;

  enum { STEPS = 200 };
  double v[4 * (STEPS + 1)];
  CHECK(opinf_model_simulate(model, 2.0, STEPS, "sin-decay", NULL, v, 4 * (STEPS + 1), NULL, 0));

  /* Projected velocities are already divergence free. */
  double pv[4 * (STEPS + 1)];
  CHECK(opinf_leray_apply(model, v, STEPS + 1, pv));
  double err = 1.0;
  CHECK(opinf_error_l2(v, pv, 4, STEPS + 1, 0.01, &err));
  if (!(err < 1e-10)) return 3;

  if (opinf_model_random(0, 1, 1, 1, 0, &model) != OPINF_STATUS_INVALID_ARGUMENT) return 4;
  if (strlen(opinf_last_error_message()) == 0) return 5;

  opinf_model_free(model);
  printf("ok %s\n", opinf_version());
  return 0;
}
