#include "wayflow/kernels.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "wayflow/errors.hpp"

namespace wayflow::kernels {

namespace {

using detail::KernelTable;

Backend detect_backend() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return Backend::avx2;
    return Backend::scalar;
#elif defined(__aarch64__)
    return Backend::neon;
#else
    return Backend::scalar;
#endif
}

const KernelTable* table_for(Backend b) {
    switch (b) {
        case Backend::scalar:
            return &detail::scalar_table();
        case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return &detail::avx2_table();
#else
            return nullptr;
#endif
        case Backend::neon:
#if defined(__aarch64__)
            return &detail::neon_table();
#else
            return nullptr;
#endif
    }
    return nullptr;
}

struct Dispatch {
    Backend backend;
    const KernelTable* table;
};

Dispatch& dispatch() {
    static Dispatch d = [] {
        const Backend b = detect_backend();
        return Dispatch{b, table_for(b)};
    }();
    return d;
}

// Two-worker pool for splitting matmul rows. Work items never overlap in
// output, so any interleaving yields identical results.
class RowPool {
public:
    static RowPool& instance() {
        static RowPool pool;
        return pool;
    }

    std::size_t workers() const { return threads_.size(); }

    // Runs fn(chunk_begin, chunk_end) over [0, rows) split into equal chunks,
    // one per worker plus the calling thread.
    void run(std::size_t rows,
             const std::function<void(std::size_t, std::size_t)>& fn) {
        const std::size_t parts = workers() + 1;
        const std::size_t chunk = (rows + parts - 1) / parts;
        {
            std::unique_lock<std::mutex> lk(m_);
            job_ = &fn;
            job_rows_ = rows;
            job_chunk_ = chunk;
            pending_ = 0;
            for (std::size_t w = 0; w < workers(); ++w) {
                const std::size_t b = std::min(rows, (w + 1) * chunk);
                const std::size_t e = std::min(rows, (w + 2) * chunk);
                if (b < e) ++pending_;
            }
            ++epoch_;
        }
        cv_.notify_all();
        // Calling thread takes the first chunk.
        fn(0, std::min(rows, chunk));
        std::unique_lock<std::mutex> lk(m_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    RowPool() {
        unsigned hw = std::thread::hardware_concurrency();
        const std::size_t n_workers = hw > 1 ? hw - 1 : 0;
        for (std::size_t w = 0; w < n_workers; ++w) {
            threads_.emplace_back([this, w] { worker_loop(w); });
        }
    }

    ~RowPool() {
        {
            std::unique_lock<std::mutex> lk(m_);
            stop_ = true;
            ++epoch_;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void worker_loop(std::size_t w) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* job = nullptr;
            std::size_t b = 0, e = 0;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
                seen = epoch_;
                if (stop_) return;
                b = std::min(job_rows_, (w + 1) * job_chunk_);
                e = std::min(job_rows_, (w + 2) * job_chunk_);
                if (b >= e || job_ == nullptr) continue;
                job = job_;
            }
            (*job)(b, e);
            {
                std::unique_lock<std::mutex> lk(m_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t job_rows_ = 0;
    std::size_t job_chunk_ = 0;
    std::size_t pending_ = 0;
    std::uint64_t epoch_ = 0;
    bool stop_ = false;
};

}  // namespace

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
        case Backend::neon: return "neon";
    }
    return "?";
}

void force_backend(Backend b) {
    const KernelTable* t = table_for(b);
    if (t == nullptr)
        throw ValueError(std::string("kernel backend not available: ") +
                         backend_name(b));
    dispatch() = Dispatch{b, t};
}

void reset_backend() {
    const Backend b = detect_backend();
    dispatch() = Dispatch{b, table_for(b)};
}

void add(const double* a, const double* b, double* out, std::size_t n) {
    dispatch().table->add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
    dispatch().table->sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
    dispatch().table->mul(a, b, out, n);
}
void scale(const double* a, double s, double* out, std::size_t n) {
    dispatch().table->scale(a, s, out, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
    dispatch().table->axpy(a, x, y, n);
}
double dot(const double* a, const double* b, std::size_t n) {
    return dispatch().table->dot(a, b, n);
}
double sum(const double* a, std::size_t n) { return dispatch().table->sum(a, n); }
double sumsq(const double* a, std::size_t n) {
    return dispatch().table->sumsq(a, n);
}

void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
    const KernelTable* t = dispatch().table;
    // Threading pays off only past ~1 MFLOP.
    const bool par = RowPool::instance().workers() > 0 && m >= 8 &&
                     m * k * n >= (std::size_t)1 << 19;
    if (!par) {
        t->matmul_rows(A, B, C, 0, m, k, n, accumulate);
        return;
    }
    RowPool::instance().run(m, [&](std::size_t r0, std::size_t r1) {
        t->matmul_rows(A, B, C, r0, r1, k, n, accumulate);
    });
}

void transpose(const double* A, double* AT, std::size_t rows, std::size_t cols) {
    // Blocked to keep both sides cache-resident.
    constexpr std::size_t BS = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += BS) {
        const std::size_t i1 = std::min(rows, i0 + BS);
        for (std::size_t j0 = 0; j0 < cols; j0 += BS) {
            const std::size_t j1 = std::min(cols, j0 + BS);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j)
                    AT[j * rows + i] = A[i * cols + j];
        }
    }
}

}  // namespace wayflow::kernels
