#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/rng.hpp"

namespace rar {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) n *= static_cast<std::size_t>(e);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. The whole numeric stack is templated on the scalar
// type: float for training runs, double for gradient-check tests.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {
        for (int e : shape) {
            if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
        }
    }
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    // fan-in-scaled uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)]
    static Tensor uniform_fan_in(Shape s, int fan_in, Rng& rng) {
        Tensor t(std::move(s));
        const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (auto& x : t.data) x = static_cast<T>(rng.uniform(-a, a));
        return t;
    }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& x : data)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    double l2_norm() const {
        double acc = 0.0;
        for (const T& x : data) acc += static_cast<double>(x) * static_cast<double>(x);
        return std::sqrt(acc);
    }

    double l2_distance(const Tensor& o) const {
        require_same_shape(o, "l2_distance");
        double acc = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double d = static_cast<double>(data[i]) - static_cast<double>(o.data[i]);
            acc += d * d;
        }
        return std::sqrt(acc);
    }

    void require_same_shape(const Tensor& o, const char* what) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(shape) +
                                        " vs " + shape_str(o.shape));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace rar
