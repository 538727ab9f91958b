#include "logrecon/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace logrecon {

int worker_count() {
  if (const char* env = std::getenv("LOGRECON_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::size_t chunk_count(std::size_t n) {
  if (n == 0) return 0;
  return std::min<std::size_t>(n, static_cast<std::size_t>(worker_count()));
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = chunk_count(n);
  if (chunks == 0) return;
  auto bounds = [&](std::size_t c) { return n * c / chunks; };
  if (chunks == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(chunks);
  pool.reserve(chunks - 1);
  for (std::size_t c = 1; c < chunks; ++c) {
    pool.emplace_back([&, c] {
      try {
        fn(bounds(c), bounds(c + 1), c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  try {
    fn(bounds(0), bounds(1), 0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace logrecon
