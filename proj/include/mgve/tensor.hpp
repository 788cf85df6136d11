#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mgve {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension contract violations.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Numerically degenerate inputs (fully masked rows, non-finite evaluations).
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Malformed configuration (odd head dim, inconsistent extents).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File parsing errors, kept distinct so callers can tell them apart.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};
struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error(msg) {}
};
struct TruncationError : Error {
    explicit TruncationError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major tensor of doubles. All compute happens at 64-bit
// precision; 32-bit truncation only occurs in file serialization.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {
        check_extents();
    }

    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        check_extents();
        if (data.size() != shape_numel(shape)) {
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_string(shape));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t extent(std::size_t axis) const {
        if (axis >= shape.size()) {
            throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                             shape_string(shape));
        }
        return shape[axis];
    }

    // 2-D accessors; most kernels operate on matrices.
    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    std::string shape_str() const { return shape_string(shape); }

private:
    void check_extents() const {
        for (std::size_t e : shape) {
            if (e == 0) {
                throw ShapeError("tensor: zero extent in shape " + shape_string(shape));
            }
        }
    }
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        // bit comparison, not value comparison: distinguishes -0.0 from 0.0
        if (std::memcmp(&a.data[i], &b.data[i], sizeof(double)) != 0) return false;
    }
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

// Deterministic fills used for weight init and synthetic assets.
inline Tensor random_uniform(Shape s, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data) v = dist(rng);
    return t;
}

inline Tensor random_normal(Shape s, std::mt19937_64& rng, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(s));
    std::normal_distribution<double> dist(mean, stddev);
    for (double& v : t.data) v = dist(rng);
    return t;
}

}  // namespace mgve
