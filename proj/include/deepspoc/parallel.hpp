#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace deepspoc {

namespace detail {
inline std::atomic<std::size_t>& worker_slot() {
  static std::atomic<std::size_t> workers{1};
  return workers;
}
}  // namespace detail

/// Number of worker threads used by parallel kernels (default 1).
inline std::size_t worker_count() { return detail::worker_slot().load(); }

inline void set_worker_count(std::size_t n) {
  detail::worker_slot().store(std::max<std::size_t>(1, n));
}

/// Chunk size used by every parallel reduction. Chunking depends only on the
/// problem size, so results are bit-identical for any worker count.
inline constexpr std::size_t kChunk = 256;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunk) {
  return (n + chunk - 1) / chunk;
}

/// Calls fn(chunk_index, begin, end) for each fixed-size chunk of [0, n).
/// Chunks are distributed over worker threads; the first exception thrown by
/// any chunk is rethrown on the calling thread.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn, std::size_t chunk = kChunk) {
  const std::size_t chunks = chunk_count(n, chunk);
  if (chunks == 0) return;
  const std::size_t workers = std::min(worker_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        fn(c, c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

/// Element-wise parallel loop over [0, n).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t chunk = kChunk) {
  parallel_chunks(
      n,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      },
      chunk);
}

}  // namespace deepspoc
