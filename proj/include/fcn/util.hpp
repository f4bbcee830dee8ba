#ifndef FCN_UTIL_HPP
#define FCN_UTIL_HPP

#include <atomic>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fcn {

// Applies fn to 0..n-1 on `jobs` threads and returns results in index order,
// so callers see the same output as a sequential loop regardless of
// scheduling. Exceptions are rethrown on the caller thread.
template <typename T>
std::vector<T> parallel_map(size_t n, int jobs, const std::function<T(size_t)>& fn) {
    std::vector<T> out(n);
    if (n == 0) return out;
    if (jobs < 2 || n == 1) {
        for (size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) out[i] = fn(i);
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace fcn

#endif
