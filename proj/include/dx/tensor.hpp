#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dx {

/// Dense CHW tensor of doubles. The one pixel container of the whole pipeline.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    double& at(int ch, int r, int col) { return v[(static_cast<std::size_t>(ch) * h + r) * w + col]; }
    double at(int ch, int r, int col) const { return v[(static_cast<std::size_t>(ch) * h + r) * w + col]; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.c) + "x" + std::to_string(a.h) + "x" + std::to_string(a.w) +
                                    " vs " +
                                    std::to_string(b.c) + "x" + std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
}

/// H x W boolean grid.
struct BinaryMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

    std::uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : v) n += b ? 1 : 0;
        return n;
    }
};

/// Named parameter tensor with its gradient accumulator.
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t size() const { return value.size(); }

    void init(std::string n, std::vector<int> s) {
        name = std::move(n);
        shape = std::move(s);
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        value.assign(total, 0.0);
        grad.assign(total, 0.0);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Deterministic uniform in [0,1): bit construction, identical across stdlib versions.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Integer in [lo, hi] inclusive, rejection-free modulo (ranges here are tiny).
inline std::int64_t uniform_int_in(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

inline double l2_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace dx
