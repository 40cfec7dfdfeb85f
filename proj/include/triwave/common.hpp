#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace triwave {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void append_parts(std::ostringstream&) {}

template <class T, class... Rest>
void append_parts(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    append_parts(os, rest...);
}

} // namespace detail

template <class... Parts>
[[noreturn]] void fail(const Parts&... parts) {
    std::ostringstream os;
    detail::append_parts(os, parts...);
    throw Error(os.str());
}

template <class... Parts>
void require(bool condition, const Parts&... parts) {
    if (!condition) fail(parts...);
}

// Shortest round-trip decimal form, locale independent.
inline std::string num_str(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num_str(long long v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// FNV-1a, used for content fingerprints of meshes and input files.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        auto bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= bytes[i];
            hash_ *= 1099511628211ull;
        }
    }
    void update(double v) { update(&v, sizeof(v)); }
    void update(std::int64_t v) { update(&v, sizeof(v)); }
    void update(const std::string& s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 1469598103934665603ull;
};

// ---------------------------------------------------------------------------
// Deterministic parallelism helpers.
//
// Work is split into fixed-size blocks independent of the thread count and
// partial results are combined in block order, so numeric output does not
// change when the number of worker threads changes.

inline int& thread_count_ref() {
    static int n = [] {
        if (const char* env = std::getenv("TRIWAVE_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        return 1;
    }();
    return n;
}

inline int thread_count() { return thread_count_ref(); }
inline void set_thread_count(int n) { thread_count_ref() = n < 1 ? 1 : n; }

// Runs fn(begin, end) over disjoint index ranges covering [0, n).
inline void parallel_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                            std::size_t block = 256) {
    int threads = thread_count();
    if (threads <= 1 || n <= block) {
        if (n > 0) fn(0, n);
        return;
    }
    std::size_t nblocks = (n + block - 1) / block;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    std::size_t per = (nblocks + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        std::size_t b0 = static_cast<std::size_t>(t) * per;
        std::size_t b1 = std::min(nblocks, b0 + per);
        if (b0 >= b1) break;
        pool.emplace_back([=, &fn] {
            for (std::size_t b = b0; b < b1; ++b)
                fn(b * block, std::min(n, (b + 1) * block));
        });
    }
    for (auto& th : pool) th.join();
}

// Deterministic sum of per-index contributions: every block is accumulated
// sequentially and block sums are added in index order regardless of the
// thread count.
inline double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& term,
                           std::size_t block = 256) {
    if (n == 0) return 0.0;
    std::size_t nblocks = (n + block - 1) / block;
    std::vector<double> partial(nblocks, 0.0);
    parallel_blocks(
        n,
        [&](std::size_t i0, std::size_t i1) {
            double s = 0.0;
            for (std::size_t i = i0; i < i1; ++i) s += term(i);
            partial[i0 / block] = s;
        },
        block);
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

} // namespace triwave
