#pragma once

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace iddr {

// Fixed-size pool running one job per worker index. Work is partitioned into
// exactly `size()` segments so reductions can happen in a fixed segment order
// regardless of scheduling; this is what makes training runs reproducible for
// a given worker count.
class ThreadPool {
 public:
  explicit ThreadPool(int threads) {
    threads = std::max(1, threads);
    workers_.reserve(threads);
    for (int i = 0; i < threads; ++i) {
      workers_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::unique_lock lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  int size() const { return static_cast<int>(workers_.size()); }

  // Runs job(worker_index) on every worker and blocks until all finish.
  // The first exception thrown by any worker is rethrown here.
  void run(const std::function<void(int)>& job) {
    {
      std::unique_lock lock(mutex_);
      job_ = &job;
      error_ = nullptr;
      ++generation_;
      pending_ = size();
    }
    cv_.notify_all();
    std::exception_ptr error;
    {
      std::unique_lock lock(mutex_);
      done_cv_.wait(lock, [this] { return pending_ == 0; });
      job_ = nullptr;
      error = error_;
    }
    if (error) std::rethrow_exception(error);
  }

  // Splits [0, count) into size() contiguous segments; fn(worker, begin, end).
  void parallel_segments(std::size_t count,
                         const std::function<void(int, std::size_t, std::size_t)>& fn) {
    const std::size_t n = static_cast<std::size_t>(size());
    std::function<void(int)> job = [&](int w) {
      std::size_t begin = count * w / n;
      std::size_t end = count * (w + 1) / n;
      if (begin < end) fn(w, begin, end);
    };
    run(job);
  }

 private:
  void worker_loop(int index) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(int)>* job = nullptr;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        job = job_;
      }
      std::exception_ptr error;
      try {
        (*job)(index);
      } catch (...) {
        error = std::current_exception();
      }
      {
        std::unique_lock lock(mutex_);
        if (error && !error_) error_ = error;
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int)>* job_ = nullptr;
  std::exception_ptr error_;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

}  // namespace iddr
