#include "fcmtm/threading.hpp"

#include <Eigen/Core>

#include "fcmtm/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fcmtm {

void set_thread_count(int threads) {
  if (threads < 0) fail(ErrorCode::invalid_argument, "thread count must be >= 0");
#ifdef _OPENMP
  const int n = threads == 0 ? omp_get_num_procs() : threads;
  omp_set_num_threads(n);
  Eigen::setNbThreads(n);
#else
  Eigen::setNbThreads(threads == 0 ? 1 : threads);
#endif
}

int thread_count() { return Eigen::nbThreads(); }

}  // namespace fcmtm
