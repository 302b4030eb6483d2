#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace hqlab {

/// Fixed worker pool for embarrassingly parallel loops. Results must be
/// written into preallocated per-index slots so the outcome is independent
/// of completion order; no tool here does floating-point reduction.
class ThreadPool {
  public:
    explicit ThreadPool(int n_threads) {
        if (n_threads < 1) n_threads = 1;
        for (int i = 0; i < n_threads; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    int size() const { return static_cast<int>(workers_.size()); }

    /// Runs fn(i) for i in [0, n). Blocks until all iterations finish.
    /// Exceptions from fn propagate (first one wins).
    void parallel_for(int n, const std::function<void(int)>& fn) {
        if (n <= 0) return;
        if (size() == 1 || n == 1) {
            for (int i = 0; i < n; ++i) fn(i);
            return;
        }
        std::atomic<int> next{0};
        std::atomic<int> done{0};
        std::exception_ptr error;
        std::mutex err_mu;
        std::condition_variable done_cv;
        std::mutex done_mu;

        auto task = [&, n]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::unique_lock<std::mutex> lock(err_mu);
                    if (!error) error = std::current_exception();
                }
                if (done.fetch_add(1) + 1 == n) {
                    std::unique_lock<std::mutex> lock(done_mu);
                    done_cv.notify_all();
                }
            }
        };

        {
            std::unique_lock<std::mutex> lock(mu_);
            for (int w = 0; w < size(); ++w) queue_.push(task);
        }
        cv_.notify_all();
        task();  // caller participates
        {
            std::unique_lock<std::mutex> lock(done_mu);
            done_cv.wait(lock, [&] { return done.load() >= n; });
        }
        if (error) std::rethrow_exception(error);
    }

  private:
    void worker_loop() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
                if (stop_ && queue_.empty()) return;
                job = std::move(queue_.front());
                queue_.pop();
            }
            job();
        }
    }

    std::vector<std::thread> workers_;
    std::queue<std::function<void()>> queue_;
    std::mutex mu_;
    std::condition_variable cv_;
    bool stop_ = false;
};

/// Process-wide pool. Sized once by the CLI (--threads); defaults to 1 so
/// library use stays single-threaded unless asked otherwise.
ThreadPool& global_pool();
void set_global_threads(int n);

}  // namespace hqlab
