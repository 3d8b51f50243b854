#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rdmix {

/// Fixed set of worker threads running blocking parallel_for loops. With a
/// single thread every loop runs inline on the caller.
class WorkerPool {
  public:
    explicit WorkerPool(int threads) : threads_(threads < 1 ? 1 : threads) {
        for (int t = 1; t < threads_; ++t) workers_.emplace_back([this] { work(); });
    }
    WorkerPool(const WorkerPool &) = delete;
    WorkerPool &operator=(const WorkerPool &) = delete;
    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto &w : workers_) w.join();
    }

    int size() const noexcept { return threads_; }

    /// Calls fn(i) for i in [0, count). Tasks are claimed dynamically, so fn
    /// must not depend on which thread runs it.
    void parallel_for(std::size_t count, const std::function<void(std::size_t)> &fn) {
        if (count == 0) return;
        if (threads_ == 1 || count == 1) {
            for (std::size_t i = 0; i < count; ++i) fn(i);
            return;
        }
        {
            std::lock_guard lock(mutex_);
            task_ = &fn;
            count_ = count;
            next_.store(0);
            active_ = static_cast<int>(workers_.size());
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        run_tasks();
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return active_ == 0; });
        task_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

  private:
    void run_tasks() {
        for (;;) {
            const std::size_t i = next_.fetch_add(1);
            if (i >= count_) return;
            try {
                (*task_)(i);
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_) error_ = std::current_exception();
                next_.store(count_);
            }
        }
    }

    void work() {
        std::size_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            run_tasks();
            {
                std::lock_guard lock(mutex_);
                --active_;
            }
            done_.notify_one();
        }
    }

    int threads_;
    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)> *task_ = nullptr;
    std::size_t count_ = 0;
    std::atomic<std::size_t> next_{0};
    int active_ = 0;
    std::size_t generation_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
};

} // namespace rdmix
