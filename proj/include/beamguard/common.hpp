#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace beamguard {

// error taxonomy mirrored by the CLI exit codes
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; i++) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// stable seed derivation for per-record / per-batch streams
inline uint64_t seed_mix(uint64_t base, uint64_t a, uint64_t b = 0) {
  uint64_t words[3] = {base, a, b};
  return fnv1a64(words, sizeof words);
}

// mt19937_64 with hand-rolled distributions so streams are identical across
// standard libraries (std::*_distribution is implementation-defined)
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(eng_() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; i--) {
      size_t j = static_cast<size_t>(eng_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0;
  bool have_spare_ = false;
};

inline int worker_threads() {
  static int n = [] {
    if (const char* env = std::getenv("BEAMGUARD_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return n;
}

namespace detail {

class Pool {
 public:
  static Pool& instance() {
    static Pool p(worker_threads() - 1);
    return p;
  }

  // runs fn(0..n_tasks-1); results must only depend on the task index, so the
  // outcome is identical for any worker count
  void run(size_t n_tasks, const std::function<void(size_t)>& fn) {
    if (n_tasks == 0) return;
    if (workers_.empty() || n_tasks == 1) {
      for (size_t i = 0; i < n_tasks; i++) fn(i);
      return;
    }
    std::unique_lock lk(m_);
    fn_ = &fn;
    next_ = 0;
    remaining_ = n_tasks;
    total_ = n_tasks;
    failed_ = nullptr;
    cancelled_ = false;
    generation_++;
    cv_.notify_all();
    lk.unlock();

    work();
    lk.lock();
    done_cv_.wait(lk, [&] { return remaining_ == 0; });
    fn_ = nullptr;
    if (failed_) std::rethrow_exception(failed_);
  }

 private:
  explicit Pool(int n_workers) {
    for (int i = 0; i < n_workers; i++) {
      workers_.emplace_back([this] {
        uint64_t seen = 0;
        for (;;) {
          std::unique_lock lk(m_);
          cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
          if (stop_) return;
          seen = generation_;
          lk.unlock();
          work();
        }
      });
    }
  }

  ~Pool() {
    {
      std::lock_guard lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void work() {
    for (;;) {
      size_t i = next_.fetch_add(1);
      if (i >= total_) return;
      try {
        if (!cancelled_.load(std::memory_order_relaxed)) (*fn_)(i);
      } catch (...) {
        std::lock_guard lk(m_);
        if (!failed_) failed_ = std::current_exception();
        cancelled_ = true;
      }
      std::unique_lock lk(m_);
      if (--remaining_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(size_t)>* fn_ = nullptr;
  std::atomic<size_t> next_{0};
  std::atomic<bool> cancelled_{false};
  std::exception_ptr failed_ = nullptr;
  size_t total_ = 0, remaining_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace detail

// splits [0, n) into fixed-size chunks and runs fn(chunk_index, begin, end).
// chunking is independent of the worker count, so float reductions done per
// chunk and then combined in chunk order are bit-stable under any thread cap.
inline void parallel_chunks(size_t n, size_t chunk,
                            const std::function<void(size_t, size_t, size_t)>& fn) {
  if (n == 0) return;
  size_t n_chunks = (n + chunk - 1) / chunk;
  detail::Pool::instance().run(n_chunks, [&](size_t c) {
    size_t b = c * chunk;
    size_t e = std::min(n, b + chunk);
    fn(c, b, e);
  });
}

inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  size_t chunk = std::max<size_t>(1, n / (4 * static_cast<size_t>(worker_threads())));
  parallel_chunks(n, chunk, [&](size_t, size_t b, size_t e) {
    for (size_t i = b; i < e; i++) fn(i);
  });
}

}  // namespace beamguard
