#pragma once

#include "dx/models.hpp"
#include "dx/warp.hpp"

#include <fstream>
#include <functional>
#include <string>

namespace dx {

/// Non-negative H x W evidence map.
struct ExplanationMap {
    int h = 0, w = 0;
    std::vector<double> v;
    std::string provenance;

    ExplanationMap() = default;
    ExplanationMap(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
};

namespace detail {

inline ExplanationMap channel_mean_abs_diff(const Tensor& a, const Tensor& b, std::string provenance) {
    require_same_shape(a, b, "explanation");
    ExplanationMap m(a.h, a.w);
    const double inv_c = 1.0 / a.c;
    for (int ch = 0; ch < a.c; ++ch)
        for (int r = 0; r < a.h; ++r)
            for (int c = 0; c < a.w; ++c) m.at(r, c) += std::fabs(a.at(ch, r, c) - b.at(ch, r, c)) * inv_c;
    m.provenance = std::move(provenance);
    return m;
}

}  // namespace detail

/// Dual explanation: |x_s - x_a|, channel-mean.
inline ExplanationMap explain(const GeneratorPair& pair, const Tensor& x) {
    auto [xs, xa] = pair.forward(x);
    return detail::channel_mean_abs_diff(xs, xa, "dual");
}

/// Naive explanation: |x - x_a|, channel-mean.
inline ExplanationMap explain_naive(const GeneratorPair& pair, const Tensor& x) {
    auto [xs, xa] = pair.forward(x);
    (void)xs;
    return detail::channel_mean_abs_diff(x, xa, "naive");
}

/// Saliency baseline: channel-mean |d f_c(x) / dx|.
inline ExplanationMap gradient_saliency(ClassifierNet& clf, const Tensor& x) {
    ClassifierTrace t;
    clf.forward_trace(x, t);
    Tensor g = clf.backward(t, 1.0, /*accumulate_param_grads=*/false);
    ExplanationMap m(x.h, x.w);
    const double inv_c = 1.0 / x.c;
    for (int ch = 0; ch < x.c; ++ch)
        for (int r = 0; r < x.h; ++r)
            for (int c = 0; c < x.w; ++c) {
                double gv = g.at(ch, r, c);
                if (!std::isfinite(gv)) throw std::runtime_error("gradient_saliency: non-finite input gradient");
                m.at(r, c) += std::fabs(gv) * inv_c;
            }
    m.provenance = "gradient";
    return m;
}

using Mapper = std::function<ExplanationMap(const Tensor&)>;

/// Augmentation-averaged explanation: per-pixel mean of the plain map and the
/// inverse-warped maps of N augmented copies, weighted by warp validity.
inline ExplanationMap explain_augmented(const Mapper& mapper, const Tensor& x, const AugmentationSpec& spec,
                                        std::uint64_t seed) {
    spec.validate();
    ExplanationMap base = mapper(x);
    if (spec.n == 0) {
        base.provenance = "augmented(" + base.provenance + ",N=0)";
        return base;
    }
    std::vector<double> acc(base.v);
    std::vector<double> weight(base.v.size(), 1.0);
    std::mt19937_64 rng(seed);
    bool all_identity = true;
    for (int i = 0; i < spec.n; ++i) {
        GeomTransform t = sample_transform(spec, rng);
        ExplanationMap em = mapper(apply_transform(t, x));
        Tensor em_t(1, em.h, em.w);
        em_t.v = em.v;
        auto [inv_map, valid] = invert_transform(t, em_t);
        all_identity = all_identity && t.is_identity();
        for (std::size_t p = 0; p < acc.size(); ++p) {
            if (!valid.v[p]) continue;
            acc[p] += inv_map.v[p];
            weight[p] += 1.0;
        }
    }
    ExplanationMap out(base.h, base.w);
    if (all_identity) {
        out.v = base.v;  // exact collapse when every transform is the identity
    } else {
        for (std::size_t p = 0; p < acc.size(); ++p) out.v[p] = acc[p] / weight[p];
    }
    out.provenance = "augmented(" + base.provenance + ",N=" + std::to_string(spec.n) + ")";
    return out;
}

// ---------------------------------------------------------------------------
// Map files: raw little-endian float32 grid for exact metrics, 16-bit PGM
// (min-max scaled) with a sidecar recording the scaling.
// ---------------------------------------------------------------------------

inline void save_map_f32(const ExplanationMap& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write map file: " + path);
    for (double d : m.v) {
        float f = static_cast<float>(d);
        os.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline ExplanationMap load_map_f32(const std::string& path, int h, int w) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read map file: " + path);
    ExplanationMap m(h, w);
    for (double& d : m.v) {
        float f;
        is.read(reinterpret_cast<char*>(&f), 4);
        d = static_cast<double>(f);
    }
    if (!is) throw std::runtime_error("truncated map file: " + path);
    return m;
}

inline void save_map_pgm(const ExplanationMap& m, const std::string& pgm_path, const std::string& sidecar_path) {
    double lo = m.v.empty() ? 0.0 : m.v[0], hi = lo;
    for (double d : m.v) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    double span = hi > lo ? hi - lo : 1.0;
    std::ofstream os(pgm_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write map image: " + pgm_path);
    os << "P5\n" << m.w << " " << m.h << "\n65535\n";
    for (double d : m.v) {
        unsigned q = static_cast<unsigned>(std::lround((d - lo) / span * 65535.0));
        unsigned char b[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    std::ofstream sc(sidecar_path);
    sc << "min " << lo << "\nmax " << hi << "\nprovenance " << m.provenance << "\n";
}

}  // namespace dx
