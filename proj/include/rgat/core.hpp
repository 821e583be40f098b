#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rgat {

// ---- errors -----------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct VocabError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

// ---- dense array ------------------------------------------------------------

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// Row-major dense array of doubles. The numeric currency of the whole library.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}
    Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("Array: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Array zeros(Shape s) { return Array(std::move(s), 0.0); }
    static Array full(Shape s, double v) { return Array(std::move(s), v); }
    static Array ones(Shape s) { return Array(std::move(s), 1.0); }
    static Array scalar(double v) { return Array(Shape{1}, std::vector<double>{v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t ndim() const { return static_cast<int64_t>(shape.size()); }

    // 2-D accessors; most of the library lives in matrices.
    int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
    int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }
    double* row(int64_t i) { return &data[static_cast<size_t>(i * cols())]; }
    const double* row(int64_t i) const { return &data[static_cast<size_t>(i * cols())]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }
    bool is_scalar() const { return numel() == 1; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// ---- deterministic rng --------------------------------------------------------
//
// All randomness flows through splitmix64 so that a (seed, call-order) pair fixes
// every draw bit-exactly on any platform. std:: distributions are avoided on
// purpose: their output is implementation-defined.

inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derive a child seed from (a, b); used for per-query and per-step streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    return splitmix64_next(s);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    int64_t below(int64_t n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
    }

    // Sample k distinct values from [0, n) in draw order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> pool(static_cast<size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        shuffle(pool);
        pool.resize(static_cast<size_t>(std::min(n, k)));
        return pool;
    }

private:
    uint64_t state_;
};

// Glorot-uniform init for a [rows x cols] matrix.
inline Array glorot_uniform(int64_t rows, int64_t cols, Rng& rng) {
    Array w(Shape{rows, cols});
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
    return w;
}

// ---- small formatting helpers --------------------------------------------------

inline std::string fmt_double(double v, int precision = 10) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

}  // namespace rgat
