#include <math.h>
#include <stdio.h>
#include <string.h>

#include "ctlio.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond);       \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  CtlioPose pose = {1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 1.0};
  CtlioTrajectory *traj = NULL;
  CHECK(ctlio_trajectory_constant(0.0, 0.1, 6, &pose, &traj) == CTLIO_STATUS_OK);
  double a = 0.0, b = 0.0;
  CHECK(ctlio_trajectory_range(traj, &a, &b) == CTLIO_STATUS_OK);
  CHECK(a == 0.0 && fabs(b - 0.3) < 1e-12);
  CtlioState s;
  CHECK(ctlio_trajectory_state(traj, 0.15, &s) == CTLIO_STATUS_OK);
  CHECK(fabs(s.pose.tx - 1.0) < 1e-12 && fabs(s.pose.qw - 1.0) < 1e-12);
  CHECK(fabs(s.velocity[0]) < 1e-12);
  CHECK(ctlio_trajectory_pose(traj, 5.0, &s.pose) == CTLIO_STATUS_OUT_OF_RANGE);
  CHECK(strlen(ctlio_last_error_message()) > 0);
  CHECK(ctlio_trajectory_pose(traj, 0.1, NULL) == CTLIO_STATUS_NULL_POINTER);
  ctlio_trajectory_free(traj);
  ctlio_trajectory_free(NULL);
  CHECK(strlen(ctlio_version()) > 0);
  printf("ok\n");
  return 0;
}
