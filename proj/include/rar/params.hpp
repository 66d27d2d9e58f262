#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rar/tensor.hpp"

namespace rar {

// Named parameter collection with one gradient slot per parameter. Ordered map
// so iteration (and therefore checkpoints and optimizer sweeps) is stable.
template <typename T>
class ParamSet {
public:
    struct Entry {
        Tensor<T> value;
        Tensor<T> grad;
    };

    void add(const std::string& name, Tensor<T> value) {
        if (entries_.count(name)) throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
        Entry e;
        e.grad = Tensor<T>::zeros(value.shape);
        e.value = std::move(value);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor<T>& value(const std::string& name) { return at(name).value; }
    const Tensor<T>& value(const std::string& name) const { return at(name).value; }
    Tensor<T>& grad(const std::string& name) { return at(name).grad; }
    const Tensor<T>& grad(const std::string& name) const { return at(name).grad; }

    void zero_grads() {
        for (auto& [k, e] : entries_)
            for (auto& g : e.grad.data) g = T(0);
    }

    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [k, e] : entries_) n += e.value.numel();
        return n;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& [k, e] : entries_) out.push_back(k);
        return out;
    }

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& [k, e] : entries_) out.add(k, e.value.template cast<U>());
        return out;
    }

private:
    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter '" + name + "'");
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::invalid_argument("ParamSet: unknown parameter '" + name + "'");
        return it->second;
    }

    std::map<std::string, Entry> entries_;
};

// Bias-corrected adaptive-moment optimizer state. Moment tensors are created
// lazily on the first step so the state can be declared before the ParamSet
// is fully populated.
template <typename T>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
};

// One optimizer step over every parameter in `ps` using the gradients stored
// there. Aborts on non-finite gradients, naming the offending parameter.
template <typename T>
void adam_update(ParamSet<T>& ps, AdamState<T>& st) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (auto& [name, e] : ps) {
        const Tensor<T>& g = e.grad;
        for (const T& gx : g.data)
            if (!std::isfinite(static_cast<double>(gx)))
                throw std::runtime_error("adam_update: non-finite gradient in parameter '" + name + "'");
        auto mi = st.m.find(name);
        if (mi == st.m.end()) {
            mi = st.m.emplace(name, Tensor<T>::zeros(g.shape)).first;
            st.v.emplace(name, Tensor<T>::zeros(g.shape));
        }
        Tensor<T>& m = mi->second;
        Tensor<T>& v = st.v.at(name);
        if (!m.same_shape(g))
            throw std::invalid_argument("adam_update: moment shape " + shape_str(m.shape) +
                                        " does not match gradient " + shape_str(g.shape) + " for '" + name + "'");
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi2 = st.beta1 * static_cast<double>(m[i]) + (1.0 - st.beta1) * gi;
            const double vi2 = st.beta2 * static_cast<double>(v[i]) + (1.0 - st.beta2) * gi * gi;
            m[i] = static_cast<T>(mi2);
            v[i] = static_cast<T>(vi2);
            const double mhat = mi2 / bc1;
            const double vhat = vi2 / bc2;
            e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

// Central-difference oracle: (f(p+h) - f(p-h)) / 2h for every scalar in every
// parameter. f must be pure. The analytic backward pass is tested against this
// and never the other way around.
template <typename T>
ParamSet<T> finite_difference_gradient(const std::function<double(ParamSet<T>&)>& f, ParamSet<T>& params,
                                       double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be positive");
    ParamSet<T> out;
    for (const auto& [name, e] : params) out.add(name, Tensor<T>::zeros(e.value.shape));
    for (auto& [name, e] : params) {
        Tensor<T>& g = out.value(name);
        for (std::size_t i = 0; i < e.value.numel(); ++i) {
            const T saved = e.value[i];
            e.value[i] = static_cast<T>(static_cast<double>(saved) + h);
            const double fp = f(params);
            e.value[i] = static_cast<T>(static_cast<double>(saved) - h);
            const double fm = f(params);
            e.value[i] = saved;
            g[i] = static_cast<T>((fp - fm) / (2.0 * h));
        }
    }
    return out;
}

}  // namespace rar
