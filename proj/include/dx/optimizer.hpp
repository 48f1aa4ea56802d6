#pragma once

#include "dx/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dx {

/// Bias-corrected Adam over a fixed parameter list.
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;

    void attach(const std::vector<ParamTensor*>& params) {
        m.clear();
        v.clear();
        for (ParamTensor* p : params) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
        step = 0;
    }
};

/// One Adam update from the gradients currently accumulated in the params.
inline void adam_step(const std::vector<ParamTensor*>& params, AdamState& st, double lr) {
    if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state not attached to these params");
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, st.step);
    const double bc2 = 1.0 - std::pow(st.beta2, st.step);
    for (std::size_t k = 0; k < params.size(); ++k) {
        ParamTensor& p = *params[k];
        if (p.size() != st.m[k].size()) throw std::invalid_argument("adam_step: shape mismatch at " + p.name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            double g = p.grad[i];
            if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in tensor " + p.name);
            st.m[k][i] = st.beta1 * st.m[k][i] + (1.0 - st.beta1) * g;
            st.v[k][i] = st.beta2 * st.v[k][i] + (1.0 - st.beta2) * g * g;
            double mhat = st.m[k][i] / bc1;
            double vhat = st.v[k][i] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace dx
