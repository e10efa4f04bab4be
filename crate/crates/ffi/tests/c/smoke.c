#include <math.h>
#include <stdio.h>
#include <string.h>

#include "congestion_lab.h"

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
      return 1;                                                  \
    }                                                            \
  } while (0)

int main(void) {
  double truth[] = {1.0, 2.0, 3.0};
  double pred[] = {2.0, 4.0, 7.0};
  double r = 0.0, c = 0.0;
  int defined = 0;
  CHECK(cl_rmse(truth, pred, 3, &r) == CL_STATUS_OK);
  CHECK(fabs(r - sqrt(7.0)) < 1e-12);
  CHECK(cl_corr(truth, pred, 3, &c, &defined) == CL_STATUS_OK);
  CHECK(defined == 1 && fabs(c - 0.993399267798783) < 1e-12);

  CHECK(cl_classify_pixel(NULL, 0xF2, 0x3C, 0x32) == 3);
  CHECK(cl_rmse(truth, pred, 0, &r) == CL_STATUS_DATA);
  CHECK(cl_last_error() != NULL && strlen(cl_last_error()) > 0);

  cl_network *net = NULL;
  CHECK(cl_network_parse("segment_id,color_hex,from_id,to_id\ns1,#010101,A,B\n", &net) == CL_STATUS_OK);
  CHECK(cl_network_intersection_count(net) == 2);
  cl_network_free(net);

  double series[200];
  series[0] = 5.0;
  for (int i = 1; i < 200; i++) series[i] = 2.0 + 0.5 * series[i - 1] + ((i % 3) - 1) * 0.1;
  cl_arima_model *m = NULL;
  CHECK(cl_arima_fit(series, 200, 1, 0, 0, &m) == CL_STATUS_OK);
  double f[2];
  CHECK(cl_arima_forecast(m, 2, f) == CL_STATUS_OK);
  CHECK(isfinite(f[0]) && isfinite(f[1]));
  cl_arima_free(m);

  printf("ok %s\n", cl_version());
  return 0;
}
