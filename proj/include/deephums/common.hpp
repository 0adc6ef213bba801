#pragma once

#include <atomic>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace deephums {

/// Runs fn(i) for i in [0, n) across `threads` workers. Each index owns its
/// output slot, so results never depend on the thread count or schedule.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

/// Broad failure categories. The CLI maps these onto process exit codes
/// (validation/config/usage -> 1, runtime/numerical -> 2).
enum class ErrorKind {
    Parse,       // malformed input file
    Validation,  // well-formed input violating a contract
    Argument,    // bad argument to an operation
    Config,      // inconsistent or missing configuration
    Shape,       // dimension mismatch
    Dataset,     // dataset too small / unusable for the requested operation
    Io,          // filesystem failure
    Numeric,     // divergence or non-finite values at runtime
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(ErrorKind::Parse, msg) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(ErrorKind::Validation, msg) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error(ErrorKind::Argument, msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::Shape, msg) {}
};
struct DatasetError : Error {
    explicit DatasetError(const std::string& msg) : Error(ErrorKind::Dataset, msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

}  // namespace deephums
