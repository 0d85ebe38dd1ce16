#pragma once

// Allocation high-water accounting. Binaries that want real numbers expand
// GEKC_DEFINE_COUNTING_ALLOCATOR in exactly one translation unit; elsewhere
// the counters just read zero. Peak RSS is reported alongside, since the
// allocator meter only sees operator new traffic.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <new>

#if defined(__linux__)
#include <sys/resource.h>
#endif

namespace gekc::memtrack {

struct Counters {
  std::atomic<std::int64_t> current{0};
  std::atomic<std::int64_t> peak{0};
  std::atomic<bool> active{false};
};

inline Counters& counters() {
  static Counters c;
  return c;
}

inline void on_alloc(std::size_t bytes) {
  Counters& c = counters();
  std::int64_t cur = c.current.fetch_add(std::int64_t(bytes)) + std::int64_t(bytes);
  std::int64_t peak = c.peak.load();
  while (cur > peak && !c.peak.compare_exchange_weak(peak, cur)) {
  }
}

inline void on_free(std::size_t bytes) {
  counters().current.fetch_sub(std::int64_t(bytes));
}

inline void reset_peak() {
  Counters& c = counters();
  c.peak.store(c.current.load());
}

inline std::int64_t peak_bytes() { return counters().peak.load(); }
inline std::int64_t current_bytes() { return counters().current.load(); }
inline bool active() { return counters().active.load(); }
inline void set_active() { counters().active.store(true); }

// OS-level peak resident set size in bytes (0 when unavailable).
inline std::int64_t peak_rss_bytes() {
#if defined(__linux__)
  struct rusage ru;
  if (getrusage(RUSAGE_SELF, &ru) == 0) return std::int64_t(ru.ru_maxrss) * 1024;
#endif
  return 0;
}

}  // namespace gekc::memtrack

// Size-tracking global new/delete. Stores the block size in a header so the
// sized and unsized delete forms agree.
#define GEKC_DEFINE_COUNTING_ALLOCATOR                                              \
  namespace {                                                                       \
  constexpr std::size_t kGekcAllocHeader = 16;                                      \
  }                                                                                 \
  void* operator new(std::size_t size) {                                            \
    void* raw = std::malloc(size + kGekcAllocHeader);                               \
    if (!raw) throw std::bad_alloc();                                               \
    *static_cast<std::size_t*>(raw) = size;                                         \
    gekc::memtrack::on_alloc(size);                                                 \
    return static_cast<char*>(raw) + kGekcAllocHeader;                              \
  }                                                                                 \
  void* operator new[](std::size_t size) { return ::operator new(size); }           \
  void operator delete(void* ptr) noexcept {                                        \
    if (!ptr) return;                                                               \
    void* raw = static_cast<char*>(ptr) - kGekcAllocHeader;                         \
    gekc::memtrack::on_free(*static_cast<std::size_t*>(raw));                       \
    std::free(raw);                                                                 \
  }                                                                                 \
  void operator delete[](void* ptr) noexcept { ::operator delete(ptr); }            \
  void operator delete(void* ptr, std::size_t) noexcept { ::operator delete(ptr); } \
  void operator delete[](void* ptr, std::size_t) noexcept { ::operator delete(ptr); } \
  namespace gekc::memtrack {                                                        \
  struct ActivateMeter {                                                            \
    ActivateMeter() { set_active(); }                                               \
  };                                                                                \
  static ActivateMeter gekc_activate_meter;                                         \
  }
