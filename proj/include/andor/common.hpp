#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace andor {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ------ errors -------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input grid or image too small for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

class VersionError : public Error {
public:
    using Error::Error;
};

/// Position or index outside the domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Precondition of an operation violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

#define ANDOR_REQUIRE(cond, msg)                                                 \
    do {                                                                         \
        if (!(cond)) throw ::andor::ContractError(std::string(msg));            \
    } while (0)

// ------ geometry -------

/// Axis-aligned box, (x, y) is the top-left corner.
struct Box {
    double x = 0, y = 0, w = 0, h = 0;

    double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double x2() const { return x + w; }
    double y2() const { return y + h; }
    bool operator==(const Box&) const = default;
};

inline double intersection_area(const Box& a, const Box& b) {
    const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
    const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
    return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

/// Intersection-over-union ratio.
inline double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

inline Box union_box(const Box& a, const Box& b) {
    const double x1 = std::min(a.x, b.x), y1 = std::min(a.y, b.y);
    const double x2 = std::max(a.x2(), b.x2()), y2 = std::max(a.y2(), b.y2());
    return {x1, y1, x2 - x1, y2 - y1};
}

inline Box union_box(const std::vector<Box>& boxes) {
    ANDOR_REQUIRE(!boxes.empty(), "union of an empty box list");
    Box u = boxes.front();
    for (const auto& b : boxes) u = union_box(u, b);
    return u;
}

inline Box clip_box(const Box& b, double width, double height) {
    const double x1 = std::clamp(b.x, 0.0, width), y1 = std::clamp(b.y, 0.0, height);
    const double x2 = std::clamp(b.x2(), 0.0, width), y2 = std::clamp(b.y2(), 0.0, height);
    return {x1, y1, x2 - x1, y2 - y1};
}

/// Integer lattice point.
struct Point {
    int x = 0, y = 0;
    bool operator==(const Point&) const = default;
};

// ------ concurrency -------

inline unsigned default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
/// write results into slot i so output order never depends on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned threads = default_threads()) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace andor
