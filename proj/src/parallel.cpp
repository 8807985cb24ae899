#include "sslseg/parallel.hpp"

#include <cstdlib>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sslseg {

namespace {

int initial_workers() {
  if (const char* env = std::getenv("SSLSEG_NUM_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int& worker_setting() {
  static int workers = initial_workers();
  return workers;
}

}  // namespace

int num_workers() { return worker_setting(); }

void set_num_workers(int workers) { worker_setting() = workers > 0 ? workers : 1; }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace sslseg
