#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef ONION_HAVE_OPENMP
#include <omp.h>
#endif

namespace onion {

// How a batch kernel runs. `serial` is the reference path kept for tests;
// both paths must produce identical results because every item is computed
// independently and written to its own slot.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef ONION_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Calls body(i) for i in [0, n). The first exception thrown by any
// iteration is rethrown on the calling thread after the loop.
template <typename Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto count = static_cast<long long>(n);
#ifdef ONION_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace onion
