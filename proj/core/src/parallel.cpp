#include "cmiprune/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

namespace cmiprune {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_cap() {
  const char* raw = std::getenv("CMIPRUNE_THREADS");
  if (raw == nullptr) return 0;
  std::string_view text(raw);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return 0;
  return value;
}

}  // namespace

std::size_t worker_count() {
  if (std::size_t forced = g_override.load(); forced > 0) return forced;
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (std::size_t cap = env_cap(); cap > 0) hw = std::min(hw, cap);
  return hw;
}

void set_worker_count(std::size_t count) { g_override.store(count); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cmiprune
