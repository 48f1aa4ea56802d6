#pragma once

#include "dx/tensor.hpp"

#include <cmath>

namespace dx {

/// Row/col affine map p -> A*p + t, homogeneous 2x3.
struct Affine {
    // [ m00 m01 | t0 ]
    // [ m10 m11 | t1 ]
    double m00 = 1, m01 = 0, t0 = 0;
    double m10 = 0, m11 = 1, t1 = 0;

    bool is_identity() const {
        return m00 == 1 && m01 == 0 && t0 == 0 && m10 == 0 && m11 == 1 && t1 == 0;
    }
    void apply(double r, double c, double& out_r, double& out_c) const {
        out_r = m00 * r + m01 * c + t0;
        out_c = m10 * r + m11 * c + t1;
    }
};

inline Affine compose(const Affine& a, const Affine& b) {  // a after b
    Affine r;
    r.m00 = a.m00 * b.m00 + a.m01 * b.m10;
    r.m01 = a.m00 * b.m01 + a.m01 * b.m11;
    r.m10 = a.m10 * b.m00 + a.m11 * b.m10;
    r.m11 = a.m10 * b.m01 + a.m11 * b.m11;
    r.t0 = a.m00 * b.t0 + a.m01 * b.t1 + a.t0;
    r.t1 = a.m10 * b.t0 + a.m11 * b.t1 + a.t1;
    return r;
}

inline Affine invert(const Affine& a) {
    double det = a.m00 * a.m11 - a.m01 * a.m10;
    Affine r;
    r.m00 = a.m11 / det;
    r.m01 = -a.m01 / det;
    r.m10 = -a.m10 / det;
    r.m11 = a.m00 / det;
    r.t0 = -(r.m00 * a.t0 + r.m01 * a.t1);
    r.t1 = -(r.m10 * a.t0 + r.m11 * a.t1);
    return r;
}

struct AugmentationSpec {
    double rotation_min = -5.0, rotation_max = 5.0;  // degrees
    double shift_rows_min = -10.0, shift_rows_max = 10.0;
    double shift_cols_min = -10.0, shift_cols_max = 10.0;
    double zoom_min = 0.9, zoom_max = 1.0;
    bool hflip = true, vflip = true;
    int n = 10;  // augmented copies at prediction time

    void validate() const {
        if (rotation_min > rotation_max || shift_rows_min > shift_rows_max ||
            shift_cols_min > shift_cols_max || zoom_min > zoom_max || zoom_min <= 0.0)
            throw std::invalid_argument("augmentation spec: empty or invalid range");
        if (n < 0) throw std::invalid_argument("augmentation spec: n must be >= 0");
    }
};

/// One invertible geometric transform: zoom and rotation about the image
/// center, then translation, then axis flips.
struct GeomTransform {
    double rotation_deg = 0.0;
    double shift_rows = 0.0, shift_cols = 0.0;
    double zoom = 1.0;
    bool hflip = false, vflip = false;

    bool is_identity() const {
        return rotation_deg == 0.0 && shift_rows == 0.0 && shift_cols == 0.0 && zoom == 1.0 && !hflip && !vflip;
    }

    Affine to_affine(int h, int w) const {
        const double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
        Affine center_out{1, 0, -cr, 0, 1, -cc};
        Affine center_back{1, 0, cr, 0, 1, cc};
        double s = 1.0 / zoom;
        Affine scale{s, 0, 0, 0, s, 0};
        double th = rotation_deg * 3.14159265358979323846 / 180.0;
        Affine rot{std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0};
        Affine flip{vflip ? -1.0 : 1.0, 0, 0, 0, hflip ? -1.0 : 1.0, 0};
        Affine shift{1, 0, shift_rows, 0, 1, shift_cols};
        Affine about_center = compose(center_back, compose(flip, compose(rot, compose(scale, center_out))));
        return compose(shift, about_center);
    }
};

inline GeomTransform sample_transform(const AugmentationSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    GeomTransform t;
    t.rotation_deg = uniform_in(rng, spec.rotation_min, spec.rotation_max);
    t.shift_rows = uniform_in(rng, spec.shift_rows_min, spec.shift_rows_max);
    t.shift_cols = uniform_in(rng, spec.shift_cols_min, spec.shift_cols_max);
    t.zoom = uniform_in(rng, spec.zoom_min, spec.zoom_max);
    t.hflip = spec.hflip && uniform01(rng) < 0.5;
    t.vflip = spec.vflip && uniform01(rng) < 0.5;
    return t;
}

/// Bilinear warp: out(p) = img(sample(p)); out-of-frame source contributes 0.
inline Tensor warp_bilinear(const Tensor& img, const Affine& sample) {
    if (sample.is_identity()) return img;
    Tensor out(img.c, img.h, img.w);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            double sr, sc;
            sample.apply(r, c, sr, sc);
            int r0 = static_cast<int>(std::floor(sr)), c0 = static_cast<int>(std::floor(sc));
            double tr = sr - r0, tc = sc - c0;
            const double wts[4] = {(1 - tr) * (1 - tc), (1 - tr) * tc, tr * (1 - tc), tr * tc};
            const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
            const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
            for (int ch = 0; ch < img.c; ++ch) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k)
                    if (rr[k] >= 0 && rr[k] < img.h && cc[k] >= 0 && cc[k] < img.w)
                        acc += wts[k] * img.at(ch, rr[k], cc[k]);
                out.at(ch, r, c) = acc;
            }
        }
    return out;
}

inline Tensor apply_transform(const GeomTransform& t, const Tensor& img) {
    return warp_bilinear(img, invert(t.to_affine(img.h, img.w)));
}

/// Warps a per-pixel map back through t^-1. The validity mask marks pixels
/// whose full bilinear support survived the round trip through the frame.
inline std::pair<Tensor, BinaryMask> invert_transform(const GeomTransform& t, const Tensor& map) {
    Affine fwd = t.to_affine(map.h, map.w);
    Tensor inv_map = warp_bilinear(map, fwd);

    BinaryMask valid(map.h, map.w);
    if (t.is_identity()) {
        std::fill(valid.v.begin(), valid.v.end(), 1);
        return {inv_map, valid};
    }
    Tensor ones(1, map.h, map.w);
    ones.fill(1.0);
    Tensor cover = warp_bilinear(warp_bilinear(ones, invert(fwd)), fwd);
    for (std::size_t i = 0; i < cover.v.size(); ++i) valid.v[i] = cover.v[i] > 0.999 ? 1 : 0;
    return {inv_map, valid};
}

}  // namespace dx
