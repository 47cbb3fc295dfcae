#include <math.h>
#include <stdio.h>
#include "socialgrad.h"

#define CHECK(call)                                                   \
  do {                                                                \
    SgStatus s_ = (call);                                             \
    if (s_ != SG_STATUS_OK) {                                         \
      fprintf(stderr, "%s failed (%d): %s\n", #call, s_, sg_last_error()); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  SgProblem *pr = NULL;
  CHECK(sg_problem_new_preset("oscillator-2", 0.95, &pr));
  size_t n = sg_problem_dim(pr);
  if (n != 2) return 1;

  double c_star, c;
  CHECK(sg_problem_levels(pr, &c_star, &c));

  double pd[2], x[2];
  bool interior = false;
  CHECK(sg_problem_p_dagger(pr, pd, n));
  CHECK(sg_solve_response(pr, pd, x, n, &interior));
  printf("c* = %.6f  x*(p+) = (%.6f, %.6f)\n", c_star, x[0], x[1]);

  double x0[2] = {0.0, -0.5}, p0[2] = {-3.0, -3.0};
  SgTtsa *run = NULL;
  CHECK(sg_ttsa_run(pr, SG_RULE_PG, 0.0, x0, p0, n, 100000, 1000, &run));
  double err;
  CHECK(sg_ttsa_sample(run, sg_ttsa_len(run) - 1, NULL, NULL, NULL, 0, NULL, &err, NULL));
  printf("final incentive error %.3e\n", err);

  SgStatus bad = sg_solve_response(pr, pd, x, 3, NULL);
  if (bad != SG_STATUS_DIMENSION_MISMATCH) return 1;

  sg_ttsa_free(run);
  sg_problem_free(pr);
  return isfinite(err) && err < 0.05 ? 0 : 1;
}
