#pragma once

#include "dx/tensor.hpp"

#include <cassert>
#include <cmath>

namespace dx::nn {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// 3x3 convolution, padding 1, stride 1 or 2.
struct Conv2d {
    int in_c = 0, out_c = 0, stride = 1;
    ParamTensor weight;  // [out_c, in_c, 3, 3]
    ParamTensor bias;    // [out_c]

    void configure(const std::string& name, int in_channels, int out_channels, int stride_) {
        in_c = in_channels;
        out_c = out_channels;
        stride = stride_;
        weight.init(name + ".w", {out_c, in_c, 3, 3});
        bias.init(name + ".b", {out_c});
    }

    void init_params(std::mt19937_64& rng) {
        double limit = std::sqrt(3.0 / (in_c * 9));
        for (double& x : weight.value) x = uniform_in(rng, -limit, limit);
        std::fill(bias.value.begin(), bias.value.end(), 0.0);
    }

    int out_h(int h) const { return (h + 2 - 3) / stride + 1; }
    int out_w(int w) const { return (w + 2 - 3) / stride + 1; }

    Tensor forward(const Tensor& in) const {
        assert(in.c == in_c);
        Tensor out(out_c, out_h(in.h), out_w(in.w));
        for (int oc = 0; oc < out_c; ++oc) {
            const double b = bias.value[oc];
            for (int r = 0; r < out.h; ++r) {
                for (int col = 0; col < out.w; ++col) {
                    const int r0 = r * stride - 1, c0 = col * stride - 1;
                    double acc = b;
                    for (int ic = 0; ic < in_c; ++ic) {
                        const double* wk = &weight.value[((static_cast<std::size_t>(oc) * in_c) + ic) * 9];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int ir = r0 + ky;
                            if (ir < 0 || ir >= in.h) continue;
                            const double* row = &in.v[(static_cast<std::size_t>(ic) * in.h + ir) * in.w];
                            for (int kx = 0; kx < 3; ++kx) {
                                const int icol = c0 + kx;
                                if (icol < 0 || icol >= in.w) continue;
                                acc += wk[ky * 3 + kx] * row[icol];
                            }
                        }
                    }
                    out.at(oc, r, col) = acc;
                }
            }
        }
        return out;
    }

    /// Accumulates weight/bias grads (when wanted) and returns dL/dinput.
    Tensor backward(const Tensor& in, const Tensor& gout, bool accumulate_param_grads = true) {
        Tensor gin(in.c, in.h, in.w);
        for (int oc = 0; oc < out_c; ++oc) {
            for (int r = 0; r < gout.h; ++r) {
                for (int col = 0; col < gout.w; ++col) {
                    const double g = gout.at(oc, r, col);
                    if (g == 0.0) continue;
                    if (accumulate_param_grads) bias.grad[oc] += g;
                    const int r0 = r * stride - 1, c0 = col * stride - 1;
                    for (int ic = 0; ic < in_c; ++ic) {
                        const std::size_t wbase = ((static_cast<std::size_t>(oc) * in_c) + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int ir = r0 + ky;
                            if (ir < 0 || ir >= in.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int icol = c0 + kx;
                                if (icol < 0 || icol >= in.w) continue;
                                if (accumulate_param_grads)
                                    weight.grad[wbase + ky * 3 + kx] += g * in.at(ic, ir, icol);
                                gin.at(ic, ir, icol) += g * weight.value[wbase + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
        return gin;
    }
};

struct Relu {
    static Tensor forward(const Tensor& in) {
        Tensor out = in;
        for (double& x : out.v) x = x > 0.0 ? x : 0.0;
        return out;
    }
    static Tensor backward(const Tensor& out, const Tensor& gout) {
        Tensor gin = gout;
        for (std::size_t i = 0; i < gin.v.size(); ++i)
            if (out.v[i] <= 0.0) gin.v[i] = 0.0;
        return gin;
    }
};

struct Sigmoid {
    static Tensor forward(const Tensor& in) {
        Tensor out = in;
        for (double& x : out.v) x = sigmoid(x);
        return out;
    }
    static Tensor backward(const Tensor& out, const Tensor& gout) {
        Tensor gin = gout;
        for (std::size_t i = 0; i < gin.v.size(); ++i)
            gin.v[i] *= out.v[i] * (1.0 - out.v[i]);
        return gin;
    }
};

/// Nearest-neighbour 2x upsampling.
struct Upsample2x {
    static Tensor forward(const Tensor& in) {
        Tensor out(in.c, in.h * 2, in.w * 2);
        for (int ch = 0; ch < in.c; ++ch)
            for (int r = 0; r < out.h; ++r)
                for (int col = 0; col < out.w; ++col)
                    out.at(ch, r, col) = in.at(ch, r / 2, col / 2);
        return out;
    }
    static Tensor backward(const Tensor& in, const Tensor& gout) {
        Tensor gin(in.c, in.h, in.w);
        for (int ch = 0; ch < in.c; ++ch)
            for (int r = 0; r < gout.h; ++r)
                for (int col = 0; col < gout.w; ++col)
                    gin.at(ch, r / 2, col / 2) += gout.at(ch, r, col);
        return gin;
    }
};

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    assert(a.h == b.h && a.w == b.w);
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

inline void split_channels(const Tensor& g, Tensor& ga, Tensor& gb) {
    std::copy(g.v.begin(), g.v.begin() + ga.v.size(), ga.v.begin());
    std::copy(g.v.begin() + ga.v.size(), g.v.end(), gb.v.begin());
}

/// Global average pooling to a c-vector (kept as a cx1x1 tensor).
struct GlobalAvgPool {
    static Tensor forward(const Tensor& in) {
        Tensor out(in.c, 1, 1);
        const double inv = 1.0 / (in.h * in.w);
        for (int ch = 0; ch < in.c; ++ch) {
            double s = 0.0;
            for (int r = 0; r < in.h; ++r)
                for (int col = 0; col < in.w; ++col) s += in.at(ch, r, col);
            out.at(ch, 0, 0) = s * inv;
        }
        return out;
    }
    static Tensor backward(const Tensor& in, const Tensor& gout) {
        Tensor gin(in.c, in.h, in.w);
        const double inv = 1.0 / (in.h * in.w);
        for (int ch = 0; ch < in.c; ++ch) {
            const double g = gout.at(ch, 0, 0) * inv;
            for (int r = 0; r < in.h; ++r)
                for (int col = 0; col < in.w; ++col) gin.at(ch, r, col) = g;
        }
        return gin;
    }
};

/// Fully connected layer on the flattened input.
struct Dense {
    int in_n = 0, out_n = 0;
    ParamTensor weight;  // [out_n, in_n]
    ParamTensor bias;    // [out_n]

    void configure(const std::string& name, int in_count, int out_count) {
        in_n = in_count;
        out_n = out_count;
        weight.init(name + ".w", {out_n, in_n});
        bias.init(name + ".b", {out_n});
    }

    void init_params(std::mt19937_64& rng) {
        double limit = std::sqrt(3.0 / in_n);
        for (double& x : weight.value) x = uniform_in(rng, -limit, limit);
        std::fill(bias.value.begin(), bias.value.end(), 0.0);
    }

    std::vector<double> forward(const Tensor& in) const {
        assert(static_cast<int>(in.size()) == in_n);
        std::vector<double> out(out_n);
        for (int o = 0; o < out_n; ++o) {
            double acc = bias.value[o];
            const double* wrow = &weight.value[static_cast<std::size_t>(o) * in_n];
            for (int i = 0; i < in_n; ++i) acc += wrow[i] * in.v[i];
            out[o] = acc;
        }
        return out;
    }

    Tensor backward(const Tensor& in, const std::vector<double>& gout, bool accumulate_param_grads = true) {
        Tensor gin(in.c, in.h, in.w);
        for (int o = 0; o < out_n; ++o) {
            const double g = gout[o];
            if (accumulate_param_grads) bias.grad[o] += g;
            const double* wrow = &weight.value[static_cast<std::size_t>(o) * in_n];
            double* grow = accumulate_param_grads ? &weight.grad[static_cast<std::size_t>(o) * in_n] : nullptr;
            for (int i = 0; i < in_n; ++i) {
                if (grow) grow[i] += g * in.v[i];
                gin.v[i] += g * wrow[i];
            }
        }
        return gin;
    }
};

}  // namespace dx::nn
