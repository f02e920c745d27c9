#ifndef MMEIG_PARALLEL_HPP
#define MMEIG_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace mmeig {

/*!
 * Evaluate fn(i) for i in [0, n) on `workers` threads and return the results
 * in index order. Work is handed out through a shared counter, so the result
 * never depends on the worker count as long as fn(i) only depends on i. The
 * exception of the lowest failing index is rethrown.
 */
template <typename Fn>
auto parallel_map(std::size_t n, int workers, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  const std::size_t nthreads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace mmeig

#endif  // MMEIG_PARALLEL_HPP
