#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace saco {

// Selects between the OpenMP loop and its serial reference. Both visit every
// index exactly once; callers write per-index results and reduce in index
// order, so outputs are identical under either policy.
enum class Exec { kSerial, kParallel };

// Exceptions thrown by `fn` are captured per index; after the loop the one
// with the lowest index is rethrown.
template <typename Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  const auto count = static_cast<long>(n);
  std::vector<std::exception_ptr> errors(n);
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < count; ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  } else {
    for (long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace saco
