#include "selfsense/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace selfsense {

namespace {

int g_workers = 0;

int detect_workers() {
    if (const char* env = std::getenv("SELFSENSE_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Persistent pool. Workers grab chunk indices from a shared atomic counter;
// the calling thread participates as well.
class Pool {
public:
    explicit Pool(int extra_workers) {
        for (int i = 0; i < extra_workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n_chunks, const std::function<void(int64_t)>& chunk_fn) {
        {
            std::lock_guard<std::mutex> lk(mu_);
            chunk_fn_ = &chunk_fn;
            next_chunk_.store(0, std::memory_order_relaxed);
            total_chunks_ = n_chunks;
            pending_ = n_chunks;
            ++generation_;
        }
        cv_.notify_all();
        drain();
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        chunk_fn_ = nullptr;
    }

private:
    void drain() {
        for (;;) {
            int64_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= total_chunks_) break;
            (*chunk_fn_)(c);
            finish_one();
        }
    }

    void finish_one() {
        std::lock_guard<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            for (;;) {
                int64_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
                if (c >= total_chunks_) break;
                (*chunk_fn_)(c);
                finish_one();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int64_t)>* chunk_fn_ = nullptr;
    std::atomic<int64_t> next_chunk_{0};
    int64_t total_chunks_ = 0;
    int64_t pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p(worker_count() - 1);
    return p;
}

}  // namespace

int worker_count() {
    if (g_workers == 0) g_workers = detect_workers();
    return g_workers;
}

void set_worker_count(int n) {
    if (n >= 1) g_workers = n;
}

void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int64_t, int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (chunk_size < 1) chunk_size = 1;
    const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (n_chunks == 1 || worker_count() == 1) {
        for (int64_t c = 0; c < n_chunks; ++c) {
            const int64_t b = c * chunk_size;
            fn(c, b, std::min(n, b + chunk_size));
        }
        return;
    }
    pool().run(n_chunks, [&](int64_t c) {
        const int64_t b = c * chunk_size;
        fn(c, b, std::min(n, b + chunk_size));
    });
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int64_t chunk = std::max<int64_t>(1, n / (4 * worker_count()));
    parallel_chunks(n, chunk, [&](int64_t, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace selfsense
