#include "lateralgrad/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace lateralgrad {

namespace {

int read_worker_count() {
  if (const char* env = std::getenv("LATERALGRAD_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

thread_local bool inside_worker = false;

// Long-lived pool; jobs are (range, fn) pairs dispatched to all workers at
// once. Only one parallel_for is in flight at a time (single orchestrator
// process), guarded by job_mutex.
class Pool {
 public:
  explicit Pool(int workers) : workers_(workers) {
    for (int w = 1; w < workers_; ++w)
      threads_.emplace_back([this, w] { worker_loop(w); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(int64_t n, const std::function<void(int64_t)>& fn) {
    std::lock_guard<std::mutex> job_lk(job_mutex_);
    fn_ = &fn;
    n_ = n;
    {
      std::lock_guard<std::mutex> lk(m_);
      pending_ = workers_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    run_range(0);
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
  }

  int workers() const { return workers_; }

 private:
  void run_range(int w) {
    inside_worker = true;
    int64_t chunk = (n_ + workers_ - 1) / workers_;
    int64_t lo = w * chunk;
    int64_t hi = std::min<int64_t>(n_, lo + chunk);
    for (int64_t i = lo; i < hi; ++i) (*fn_)(i);
    inside_worker = false;
  }

  void worker_loop(int w) {
    uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(m_);
      cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lk.unlock();
      run_range(w);
      lk.lock();
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  const int workers_;
  std::vector<std::thread> threads_;
  std::mutex job_mutex_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int64_t)>* fn_ = nullptr;
  int64_t n_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

Pool& pool() {
  static Pool p(read_worker_count());
  return p;
}

}  // namespace

int worker_count() { return pool().workers(); }

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (inside_worker || n == 1 || pool().workers() == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  pool().run(n, fn);
}

}  // namespace lateralgrad
