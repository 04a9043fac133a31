#pragma once

// Deterministic fan-out over replication indices.
//
// Work is cut into fixed-size chunks whose boundaries do not depend on the
// thread count. Each chunk is reduced sequentially in replication order and
// chunk partials are merged in chunk order, so every floating-point sum is
// evaluated in the same order regardless of scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace equiproc {

namespace detail {
inline std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace detail

/// Threads used by replication fan-out. Falls back to EQUIPROC_THREADS, then
/// to the hardware concurrency.
inline std::size_t thread_count() {
  std::size_t n = detail::thread_setting().load();
  if (n > 0) return n;
  if (const char* env = std::getenv("EQUIPROC_THREADS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline void set_thread_count(std::size_t n) { detail::thread_setting().store(n); }

/// Replications per chunk. Part of the determinism contract: changing it
/// changes the summation order and therefore the report bytes.
inline constexpr std::size_t kChunkSize = 64;

struct ChunkRange {
  std::size_t index;
  std::size_t begin;
  std::size_t end;
};

/// Runs `map(ChunkRange) -> Partial` over all chunks of [0, count) and feeds
/// the partials to `merge(Partial&&)` strictly in chunk order.
template <class Map, class Merge>
void ordered_chunk_reduce(std::size_t count, Map&& map, Merge&& merge,
                          std::size_t chunk_size = kChunkSize) {
  using Partial = decltype(map(ChunkRange{}));
  if (count == 0) return;
  const std::size_t chunks = (count + chunk_size - 1) / chunk_size;
  const std::size_t threads = std::min(thread_count(), chunks);
  auto range = [&](std::size_t c) {
    return ChunkRange{c, c * chunk_size, std::min(count, (c + 1) * chunk_size)};
  };

  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) merge(map(range(c)));
    return;
  }

  // Waves bound the number of partials alive at once.
  const std::size_t wave = threads * 4;
  for (std::size_t first = 0; first < chunks; first += wave) {
    const std::size_t last = std::min(chunks, first + wave);
    std::vector<std::optional<Partial>> slots(last - first);
    std::atomic<std::size_t> next{first};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        std::size_t c = next.fetch_add(1);
        if (c >= last) return;
        try {
          slots[c - first].emplace(map(range(c)));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(last);
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    for (auto& slot : slots) merge(std::move(*slot));
  }
}

/// Applies `fn(i)` for every i in [0, count) and returns results by index.
template <class Fn>
auto parallel_map(std::size_t count, Fn&& fn) {
  using T = decltype(fn(std::size_t{}));
  std::vector<T> out;
  out.reserve(count);
  ordered_chunk_reduce(
      count,
      [&](ChunkRange r) {
        std::vector<T> part;
        part.reserve(r.end - r.begin);
        for (std::size_t i = r.begin; i < r.end; ++i) part.push_back(fn(i));
        return part;
      },
      [&](std::vector<T>&& part) {
        for (auto& v : part) out.push_back(std::move(v));
      });
  return out;
}

}  // namespace equiproc
