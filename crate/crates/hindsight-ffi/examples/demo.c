/* Minimal consumer of the hindsight C API.
 *
 * Build (from the repository root):
 *   cargo build --release -p hindsight-ffi
 *   cc crates/hindsight-ffi/examples/demo.c \
 *      -Icrates/hindsight-ffi/include \
 *      -Ltarget/release -lhindsight_ffi -lm -o demo
 *   LD_LIBRARY_PATH=target/release ./demo
 */
#include <stdio.h>
#include <stdlib.h>

#include "hindsight.h"

static const char *SPEC =
    "{\"A\": [[0.5]], \"B\": [[1.0]], \"Q\": [[1.0]], \"R\": [[1.0]],"
    " \"noise\": {\"kind\": \"uniform_box\","
    "             \"params\": {\"half_width\": 1.7320508075688772}}}";

int main(void) {
  HsSystem *sys = NULL;
  if (hs_system_from_json(SPEC, &sys) != HS_OK) {
    fprintf(stderr, "parse failed: %s\n", hs_last_error_message());
    return 1;
  }

  double radius = 0.0;
  if (hs_system_validate(sys, &radius) != HS_OK) {
    fprintf(stderr, "validation failed: %s\n", hs_last_error_message());
    hs_system_free(sys);
    return 1;
  }

  double p, k, s, residual;
  if (hs_solve_dare(sys, &p, &k, &s, &residual) != HS_OK) {
    fprintf(stderr, "dare failed: %s\n", hs_last_error_message());
    hs_system_free(sys);
    return 1;
  }
  printf("P = %.6f  K = %.6f  S = %.6f  rho = %.6f\n", p, k, s, radius);

  double online, offline, correction;
  if (hs_closed_form_costs(sys, &online, &offline, &correction) != HS_OK) {
    fprintf(stderr, "costs failed: %s\n", hs_last_error_message());
    hs_system_free(sys);
    return 1;
  }
  printf("online cost = %.6f  offline cost = %.6f\n", online, offline);

  double mean, ci;
  if (hs_monte_carlo(sys, HS_POLICY_OFFLINE_OPTIMAL, 10000, 50, 0, &mean,
                     &ci) != HS_OK) {
    fprintf(stderr, "monte carlo failed: %s\n", hs_last_error_message());
    hs_system_free(sys);
    return 1;
  }
  printf("offline empirical = %.6f +- %.6f (ci95)\n", mean, ci);

  hs_system_free(sys);
  return 0;
}
