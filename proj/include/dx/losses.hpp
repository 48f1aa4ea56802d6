#pragma once

#include "dx/models.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dx {

/// Coefficients of the weak objective. kappa only matters for the
/// multi-class classification loss.
struct LossWeights {
    double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0, alpha4 = 0.0;
    double beta1 = 0.001, beta2 = 0.001;
    double gamma = 0.0;
    double lambda = 0.0;
    double kappa = 0.1;

    void validate() const {
        auto nonneg = [](double v, const char* n) {
            if (!(v >= 0.0)) throw std::invalid_argument(std::string("loss weight ") + n + " must be >= 0");
        };
        nonneg(alpha1, "alpha1");
        nonneg(alpha2, "alpha2");
        nonneg(alpha3, "alpha3");
        nonneg(alpha4, "alpha4");
        nonneg(beta1, "beta1");
        nonneg(beta2, "beta2");
        nonneg(gamma, "gamma");
        nonneg(lambda, "lambda");
        if (!(kappa > 0.0)) throw std::invalid_argument("loss weight kappa must be > 0");
    }
};

struct LossBreakdown {
    double l_d = 0.0, l_fc = 0.0, l_reg = 0.0, l_sa = 0.0, total = 0.0;
};

namespace detail {

constexpr double kNormFloor = 1e-12;

inline double l2_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        double d = a.v[i] - b.v[i];
        s += d * d;
    }
    return std::sqrt(s);
}
inline double l1_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += std::fabs(a.v[i] - b.v[i]);
    return s;
}

}  // namespace detail

constexpr double kBceEps = 1e-7;

/// Binary cross entropy with the prediction clamped to [eps, 1-eps].
inline double bce(double target, double pred) {
    double p = std::min(std::max(pred, kBceEps), 1.0 - kBceEps);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

/// d bce / d pred; zero where the clamp is active.
inline double bce_dpred(double target, double pred) {
    if (pred <= kBceEps || pred >= 1.0 - kBceEps) return 0.0;
    return -target / pred + (1.0 - target) / (1.0 - pred);
}

// ---------------------------------------------------------------------------
// Similarity loss: a1|x-xs|_2 + a2|x-xa|_2 + a3|xs-xa|_2 + a4|xs-xa|_1
// ---------------------------------------------------------------------------

inline double similarity_loss(const Tensor& x, const Tensor& xs, const Tensor& xa, const LossWeights& w) {
    require_same_shape(x, xs, "similarity_loss");
    require_same_shape(x, xa, "similarity_loss");
    return w.alpha1 * detail::l2_diff(x, xs) + w.alpha2 * detail::l2_diff(x, xa) +
           w.alpha3 * detail::l2_diff(xs, xa) + w.alpha4 * detail::l1_diff(xs, xa);
}

inline void similarity_loss_grad(const Tensor& x, const Tensor& xs, const Tensor& xa, const LossWeights& w,
                                 Tensor& gxs, Tensor& gxa) {
    double n1 = detail::l2_diff(x, xs);
    double n2 = detail::l2_diff(x, xa);
    double n3 = detail::l2_diff(xs, xa);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        double d_sa = xs.v[i] - xa.v[i];
        double g_s = 0.0, g_a = 0.0;
        if (n1 > detail::kNormFloor) g_s += w.alpha1 * (xs.v[i] - x.v[i]) / n1;
        if (n2 > detail::kNormFloor) g_a += w.alpha2 * (xa.v[i] - x.v[i]) / n2;
        if (n3 > detail::kNormFloor) {
            g_s += w.alpha3 * d_sa / n3;
            g_a -= w.alpha3 * d_sa / n3;
        }
        double sgn = d_sa > 0.0 ? 1.0 : (d_sa < 0.0 ? -1.0 : 0.0);
        g_s += w.alpha4 * sgn;
        g_a -= w.alpha4 * sgn;
        gxs.v[i] += g_s;
        gxa.v[i] += g_a;
    }
}

// ---------------------------------------------------------------------------
// Classification loss, binary: soft targets taken from the classifier itself
// ---------------------------------------------------------------------------

inline void check_score(double s, const char* what) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument(std::string(what) + ": score outside [0,1]");
}

inline double classification_loss_binary(double fc_x, double fc_xs, double fc_xa, const LossWeights& w) {
    check_score(fc_x, "classification_loss_binary");
    check_score(fc_xs, "classification_loss_binary");
    check_score(fc_xa, "classification_loss_binary");
    return w.beta1 * bce(fc_x, fc_xs) + w.beta2 * bce(1.0 - fc_x, fc_xa);
}

// ---------------------------------------------------------------------------
// Classification loss, multi-class (margin / CW form)
// ---------------------------------------------------------------------------

inline double classification_loss_multiclass(const std::vector<double>& fc_x, const std::vector<double>& fc_xs,
                                             const std::vector<double>& fc_xa, const LossWeights& w) {
    const std::size_t n = fc_x.size();
    if (n < 2 || fc_xs.size() != n || fc_xa.size() != n)
        throw std::invalid_argument("classification_loss_multiclass: needs >= 2 classes and equal lengths");
    std::size_t l = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (fc_x[i] > fc_x[l]) l = i;  // ties -> lowest index
    auto max_other = [n, l](const std::vector<double>& v) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i)
            if (i != l) m = std::max(m, v[i]);
        return m;
    };
    double term_s = std::max(max_other(fc_xs) - fc_xs[l], -w.kappa);
    double term_a = std::max(fc_xa[l] - max_other(fc_xa), -w.kappa);
    return w.beta1 * term_s + w.beta2 * term_a;
}

/// Subgradient of the multi-class loss w.r.t. the two generated score vectors.
inline void classification_loss_multiclass_grad(const std::vector<double>& fc_x, const std::vector<double>& fc_xs,
                                                const std::vector<double>& fc_xa, const LossWeights& w,
                                                std::vector<double>& gxs, std::vector<double>& gxa) {
    const std::size_t n = fc_x.size();
    gxs.assign(n, 0.0);
    gxa.assign(n, 0.0);
    std::size_t l = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (fc_x[i] > fc_x[l]) l = i;
    auto argmax_other = [n, l](const std::vector<double>& v) {
        std::size_t best = l == 0 ? 1 : 0;
        for (std::size_t i = 0; i < n; ++i)
            if (i != l && v[i] > v[best]) best = i;
        return best;
    };
    std::size_t js = argmax_other(fc_xs);
    if (fc_xs[js] - fc_xs[l] > -w.kappa) {
        gxs[js] += w.beta1;
        gxs[l] -= w.beta1;
    }
    std::size_t ja = argmax_other(fc_xa);
    if (fc_xa[l] - fc_xa[ja] > -w.kappa) {
        gxa[l] += w.beta2;
        gxa[ja] -= w.beta2;
    }
}

// ---------------------------------------------------------------------------
// Generator weight proximity: gamma * sum_k |w_s^k - w_a^k|_2 over non-shared layers
// ---------------------------------------------------------------------------

inline double generator_weight_loss(GeneratorPair& pair, const LossWeights& w) {
    double s = 0.0;
    for (auto& [ps, pa] : pair.weight_loss_pairs()) {
        if (ps->shape != pa->shape)
            throw std::invalid_argument("generator_weight_loss: head shape mismatch at " + ps->name);
        s += l2_norm_diff(ps->value, pa->value);
    }
    return w.gamma * s;
}

inline void generator_weight_loss_grad(GeneratorPair& pair, const LossWeights& w) {
    if (w.gamma == 0.0) return;
    for (auto& [ps, pa] : pair.weight_loss_pairs()) {
        double n = l2_norm_diff(ps->value, pa->value);
        if (n <= detail::kNormFloor) continue;
        double scale = w.gamma / n;
        for (std::size_t i = 0; i < ps->value.size(); ++i) {
            double d = (ps->value[i] - pa->value[i]) * scale;
            ps->grad[i] += d;
            pa->grad[i] -= d;
        }
    }
}

// ---------------------------------------------------------------------------
// TV regularization on xs - xa: lambda * sum_c sum_p |(d_row, d_col)|_2
// (forward differences, zero at the last row/col)
// ---------------------------------------------------------------------------

inline double tv_regularization(const Tensor& xs, const Tensor& xa, const LossWeights& w) {
    require_same_shape(xs, xa, "tv_regularization");
    if (w.lambda == 0.0) return 0.0;
    double s = 0.0;
    for (int ch = 0; ch < xs.c; ++ch)
        for (int r = 0; r < xs.h; ++r)
            for (int col = 0; col < xs.w; ++col) {
                double d = xs.at(ch, r, col) - xa.at(ch, r, col);
                double dr = r + 1 < xs.h ? (xs.at(ch, r + 1, col) - xa.at(ch, r + 1, col)) - d : 0.0;
                double dc = col + 1 < xs.w ? (xs.at(ch, r, col + 1) - xa.at(ch, r, col + 1)) - d : 0.0;
                s += std::sqrt(dr * dr + dc * dc);
            }
    return w.lambda * s;
}

inline void tv_regularization_grad(const Tensor& xs, const Tensor& xa, const LossWeights& w,
                                   Tensor& gxs, Tensor& gxa) {
    if (w.lambda == 0.0) return;
    for (int ch = 0; ch < xs.c; ++ch)
        for (int r = 0; r < xs.h; ++r)
            for (int col = 0; col < xs.w; ++col) {
                double d = xs.at(ch, r, col) - xa.at(ch, r, col);
                double dr = r + 1 < xs.h ? (xs.at(ch, r + 1, col) - xa.at(ch, r + 1, col)) - d : 0.0;
                double dc = col + 1 < xs.w ? (xs.at(ch, r, col + 1) - xa.at(ch, r, col + 1)) - d : 0.0;
                double n = std::sqrt(dr * dr + dc * dc);
                if (n <= detail::kNormFloor) continue;
                double gdr = w.lambda * dr / n, gdc = w.lambda * dc / n;
                auto add = [&](int rr, int cc, double g) {
                    gxs.at(ch, rr, cc) += g;
                    gxa.at(ch, rr, cc) -= g;
                };
                add(r, col, -gdr - gdc);
                if (r + 1 < xs.h) add(r + 1, col, gdr);
                if (col + 1 < xs.w) add(r, col + 1, gdc);
            }
}

// ---------------------------------------------------------------------------
// Full objective and the naive baseline objective
// ---------------------------------------------------------------------------

inline LossBreakdown total_loss(const Tensor& x, GeneratorPair& pair, const ClassifierNet& clf,
                                const LossWeights& w) {
    auto [xs, xa] = pair.forward(x);
    LossBreakdown b;
    b.l_d = similarity_loss(x, xs, xa, w);
    b.l_fc = classification_loss_binary(clf.forward(x), clf.forward(xs), clf.forward(xa), w);
    b.l_reg = tv_regularization(xs, xa, w);
    b.l_sa = generator_weight_loss(pair, w);
    b.total = b.l_d + b.l_fc + b.l_reg + b.l_sa;
    return b;
}

/// Objective of the adversarial-only baseline: only the xa path matters.
inline double naive_adversarial_loss(const Tensor& x, GeneratorPair& pair, const ClassifierNet& clf,
                                     const LossWeights& w) {
    auto [xs, xa] = pair.forward(x);
    (void)xs;
    double l = w.alpha2 * detail::l2_diff(x, xa);
    l += w.beta2 * bce(1.0 - clf.forward(x), clf.forward(xa));
    if (w.lambda != 0.0) {
        // TV of x - xa, reusing the pairwise form with xs := x.
        l += tv_regularization(x, xa, w);
    }
    return l;
}

}  // namespace dx
