#pragma once

#include "dx/nn.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dx {

// ---------------------------------------------------------------------------
// Classifier: 3 stride-2 conv blocks -> global average pool -> dense -> sigmoid
// ---------------------------------------------------------------------------

struct ClassifierArch {
    int in_c = 1, in_h = 32, in_w = 32;
    int w1 = 8, w2 = 16, w3 = 32;

    std::string descriptor() const {
        std::ostringstream os;
        os << "clf-v1 in=" << in_c << "x" << in_h << "x" << in_w
           << " widths=" << w1 << "," << w2 << "," << w3;
        return os.str();
    }
    static ClassifierArch parse(const std::string& d) {
        ClassifierArch a;
        if (std::sscanf(d.c_str(), "clf-v1 in=%dx%dx%d widths=%d,%d,%d",
                        &a.in_c, &a.in_h, &a.in_w, &a.w1, &a.w2, &a.w3) != 6)
            throw std::runtime_error("bad classifier descriptor: " + d);
        return a;
    }
};

/// Activations kept from a classifier forward pass, consumed by backward().
struct ClassifierTrace {
    Tensor x, a1, a2, a3, pooled;
    double logit = 0.0, score = 0.0;
};

struct ClassifierNet {
    ClassifierArch arch;
    nn::Conv2d c1, c2, c3;
    nn::Dense fc;

    void configure(const ClassifierArch& a) {
        arch = a;
        c1.configure("c1", a.in_c, a.w1, 2);
        c2.configure("c2", a.w1, a.w2, 2);
        c3.configure("c3", a.w2, a.w3, 2);
        fc.configure("fc", a.w3, 1);
    }

    std::vector<ParamTensor*> params() {
        return {&c1.weight, &c1.bias, &c2.weight, &c2.bias, &c3.weight, &c3.bias, &fc.weight, &fc.bias};
    }
    std::vector<const ParamTensor*> params() const {
        return {&c1.weight, &c1.bias, &c2.weight, &c2.bias, &c3.weight, &c3.bias, &fc.weight, &fc.bias};
    }

    void check_input(const Tensor& x) const {
        if (x.c != arch.in_c || x.h != arch.in_h || x.w != arch.in_w)
            throw std::invalid_argument("classifier input shape mismatch");
    }

    double forward_trace(const Tensor& x, ClassifierTrace& t) const {
        check_input(x);
        t.x = x;
        t.a1 = nn::Relu::forward(c1.forward(x));
        t.a2 = nn::Relu::forward(c2.forward(t.a1));
        t.a3 = nn::Relu::forward(c3.forward(t.a2));
        t.pooled = nn::GlobalAvgPool::forward(t.a3);
        t.logit = fc.forward(t.pooled)[0];
        t.score = nn::sigmoid(t.logit);
        return t.score;
    }

    double forward(const Tensor& x) const {
        ClassifierTrace t;
        return forward_trace(x, t);
    }

    /// Backprop dL/dscore through the net; returns dL/dinput.
    Tensor backward(const ClassifierTrace& t, double gscore, bool accumulate_param_grads) {
        double glogit = gscore * t.score * (1.0 - t.score);
        Tensor gp = fc.backward(t.pooled, {glogit}, accumulate_param_grads);
        Tensor ga3 = nn::GlobalAvgPool::backward(t.a3, gp);
        Tensor gz3 = nn::Relu::backward(t.a3, ga3);
        Tensor ga2 = c3.backward(t.a2, gz3, accumulate_param_grads);
        Tensor gz2 = nn::Relu::backward(t.a2, ga2);
        Tensor ga1 = c2.backward(t.a1, gz2, accumulate_param_grads);
        Tensor gz1 = nn::Relu::backward(t.a1, ga1);
        return c1.backward(t.x, gz1, accumulate_param_grads);
    }
};

inline ClassifierNet init_classifier(const ClassifierArch& arch, std::uint64_t seed) {
    ClassifierNet net;
    net.configure(arch);
    std::mt19937_64 rng(seed);
    net.c1.init_params(rng);
    net.c2.init_params(rng);
    net.c3.init_params(rng);
    net.fc.init_params(rng);
    return net;
}

// ---------------------------------------------------------------------------
// Generators: 3-level UNet trunk with skip connections + sigmoid head(s)
// ---------------------------------------------------------------------------

enum class GenMode { DuoAE, SingleAE1, SingleAE2 };

inline std::string gen_mode_name(GenMode m) {
    switch (m) {
        case GenMode::DuoAE: return "duo";
        case GenMode::SingleAE1: return "single1";
        case GenMode::SingleAE2: return "single2";
    }
    throw std::logic_error("unreachable");
}
inline GenMode parse_gen_mode(const std::string& s) {
    if (s == "duo") return GenMode::DuoAE;
    if (s == "single1") return GenMode::SingleAE1;
    if (s == "single2") return GenMode::SingleAE2;
    throw std::runtime_error("unknown generator mode: " + s);
}

struct GeneratorArch {
    GenMode mode = GenMode::SingleAE2;
    int in_c = 1, in_h = 32, in_w = 32;
    int base = 8;

    int head_layers() const {
        switch (mode) {
            case GenMode::DuoAE: return 1;
            case GenMode::SingleAE1: return 1;
            case GenMode::SingleAE2: return 2;
        }
        throw std::logic_error("unreachable");
    }

    std::string descriptor() const {
        std::ostringstream os;
        os << "gen-v1 mode=" << gen_mode_name(mode)
           << " in=" << in_c << "x" << in_h << "x" << in_w << " base=" << base;
        return os.str();
    }
    static GeneratorArch parse(const std::string& d) {
        GeneratorArch a;
        char mode[32];
        if (std::sscanf(d.c_str(), "gen-v1 mode=%31s in=%dx%dx%d base=%d",
                        mode, &a.in_c, &a.in_h, &a.in_w, &a.base) != 5)
            throw std::runtime_error("bad generator descriptor: " + d);
        a.mode = parse_gen_mode(mode);
        return a;
    }
};

struct TrunkTrace {
    Tensor x, e1, e2, b, cat2, d2, cat1, out;
};

/// Encoder-decoder trunk, base width w: in -> w -> 2w -> 4w -> 2w -> w with skips.
struct Trunk {
    nn::Conv2d enc1, enc2, bott, dec2, dec1;

    void configure(const std::string& name, int in_c, int base) {
        enc1.configure(name + ".enc1", in_c, base, 1);
        enc2.configure(name + ".enc2", base, base * 2, 2);
        bott.configure(name + ".bott", base * 2, base * 4, 2);
        dec2.configure(name + ".dec2", base * 4 + base * 2, base * 2, 1);
        dec1.configure(name + ".dec1", base * 2 + base, base, 1);
    }
    void init_params(std::mt19937_64& rng) {
        enc1.init_params(rng);
        enc2.init_params(rng);
        bott.init_params(rng);
        dec2.init_params(rng);
        dec1.init_params(rng);
    }
    std::vector<ParamTensor*> params() {
        return {&enc1.weight, &enc1.bias, &enc2.weight, &enc2.bias, &bott.weight, &bott.bias,
                &dec2.weight, &dec2.bias, &dec1.weight, &dec1.bias};
    }

    Tensor forward_trace(const Tensor& x, TrunkTrace& t) const {
        t.x = x;
        t.e1 = nn::Relu::forward(enc1.forward(x));
        t.e2 = nn::Relu::forward(enc2.forward(t.e1));
        t.b = nn::Relu::forward(bott.forward(t.e2));
        t.cat2 = nn::concat_channels(nn::Upsample2x::forward(t.b), t.e2);
        t.d2 = nn::Relu::forward(dec2.forward(t.cat2));
        t.cat1 = nn::concat_channels(nn::Upsample2x::forward(t.d2), t.e1);
        t.out = nn::Relu::forward(dec1.forward(t.cat1));
        return t.out;
    }

    Tensor backward(const TrunkTrace& t, const Tensor& gout, bool accumulate_param_grads = true) {
        Tensor gz = nn::Relu::backward(t.out, gout);
        Tensor gcat1 = dec1.backward(t.cat1, gz, accumulate_param_grads);
        Tensor gup1(t.d2.c, t.cat1.h, t.cat1.w), ge1(t.e1.c, t.e1.h, t.e1.w);
        nn::split_channels(gcat1, gup1, ge1);
        Tensor gd2 = nn::Upsample2x::backward(t.d2, gup1);

        gz = nn::Relu::backward(t.d2, gd2);
        Tensor gcat2 = dec2.backward(t.cat2, gz, accumulate_param_grads);
        Tensor gup2(t.b.c, t.cat2.h, t.cat2.w), ge2(t.e2.c, t.e2.h, t.e2.w);
        nn::split_channels(gcat2, gup2, ge2);
        Tensor gb = nn::Upsample2x::backward(t.b, gup2);

        gz = nn::Relu::backward(t.b, gb);
        Tensor ge2b = bott.backward(t.e2, gz, accumulate_param_grads);
        for (std::size_t i = 0; i < ge2.v.size(); ++i) ge2.v[i] += ge2b.v[i];

        gz = nn::Relu::backward(t.e2, ge2);
        Tensor ge1b = enc2.backward(t.e1, gz, accumulate_param_grads);
        for (std::size_t i = 0; i < ge1.v.size(); ++i) ge1.v[i] += ge1b.v[i];

        gz = nn::Relu::backward(t.e1, ge1);
        return enc1.backward(t.x, gz, accumulate_param_grads);
    }
};

struct HeadTrace {
    Tensor in, a1, out;  // a1 unused for 1-layer heads
};

/// Head of 1 or 2 conv layers ending in a sigmoid image.
struct Head {
    int layers = 1;
    nn::Conv2d conv1, conv2;  // conv2 unused when layers == 1

    void configure(const std::string& name, int base, int out_c, int n_layers) {
        layers = n_layers;
        if (layers == 1) {
            conv1.configure(name + ".0", base, out_c, 1);
        } else if (layers == 2) {
            conv1.configure(name + ".0", base, base, 1);
            conv2.configure(name + ".1", base, out_c, 1);
        } else {
            throw std::invalid_argument("unsupported head depth: " + std::to_string(n_layers));
        }
    }
    void init_params(std::mt19937_64& rng) {
        conv1.init_params(rng);
        if (layers == 2) conv2.init_params(rng);
    }
    void copy_params_from(const Head& o) {
        conv1.weight.value = o.conv1.weight.value;
        conv1.bias.value = o.conv1.bias.value;
        if (layers == 2) {
            conv2.weight.value = o.conv2.weight.value;
            conv2.bias.value = o.conv2.bias.value;
        }
    }
    std::vector<ParamTensor*> params() {
        if (layers == 1) return {&conv1.weight, &conv1.bias};
        return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias};
    }

    Tensor forward_trace(const Tensor& in, HeadTrace& t) const {
        t.in = in;
        if (layers == 1) {
            t.out = nn::Sigmoid::forward(conv1.forward(in));
        } else {
            t.a1 = nn::Relu::forward(conv1.forward(in));
            t.out = nn::Sigmoid::forward(conv2.forward(t.a1));
        }
        return t.out;
    }

    Tensor backward(const HeadTrace& t, const Tensor& gout, bool accumulate_param_grads = true) {
        if (layers == 1) {
            Tensor gz = nn::Sigmoid::backward(t.out, gout);
            return conv1.backward(t.in, gz, accumulate_param_grads);
        }
        Tensor gz2 = nn::Sigmoid::backward(t.out, gout);
        Tensor ga1 = conv2.backward(t.a1, gz2, accumulate_param_grads);
        Tensor gz1 = nn::Relu::backward(t.a1, ga1);
        return conv1.backward(t.in, gz1, accumulate_param_grads);
    }
};

struct PairTrace {
    TrunkTrace trunk_s, trunk_a;  // trunk_a unused for SingleAE (shared trunk)
    HeadTrace head_s, head_a;
    Tensor xs, xa;
};

/// The similar/adversarial generator couple. SingleAE shares one trunk; DuoAE
/// holds two complete autoencoders.
struct GeneratorPair {
    GeneratorArch arch;
    Trunk trunk_s, trunk_a;  // trunk_a configured only for DuoAE
    Head head_s, head_a;

    bool shared_trunk() const { return arch.mode != GenMode::DuoAE; }

    void configure(const GeneratorArch& a) {
        arch = a;
        trunk_s.configure(shared_trunk() ? "trunk" : "trunk_s", a.in_c, a.base);
        if (!shared_trunk()) trunk_a.configure("trunk_a", a.in_c, a.base);
        head_s.configure("head_s", a.base, a.in_c, a.head_layers());
        head_a.configure("head_a", a.base, a.in_c, a.head_layers());
    }

    std::vector<ParamTensor*> params() {
        std::vector<ParamTensor*> out = trunk_s.params();
        if (!shared_trunk())
            for (ParamTensor* p : trunk_a.params()) out.push_back(p);
        for (ParamTensor* p : head_s.params()) out.push_back(p);
        for (ParamTensor* p : head_a.params()) out.push_back(p);
        return out;
    }

    /// Non-shared parameter tensors entering the weight-proximity loss, as
    /// (similar-side, adversarial-side) pairs in matching order.
    std::vector<std::pair<ParamTensor*, ParamTensor*>> weight_loss_pairs() {
        std::vector<std::pair<ParamTensor*, ParamTensor*>> out;
        if (!shared_trunk()) {
            auto ts = trunk_s.params(), ta = trunk_a.params();
            for (std::size_t i = 0; i < ts.size(); ++i) out.emplace_back(ts[i], ta[i]);
        }
        auto hs = head_s.params(), ha = head_a.params();
        for (std::size_t i = 0; i < hs.size(); ++i) out.emplace_back(hs[i], ha[i]);
        return out;
    }

    void check_input(const Tensor& x) const {
        if (x.c != arch.in_c || x.h != arch.in_h || x.w != arch.in_w)
            throw std::invalid_argument("generator input shape mismatch");
    }

    void forward_trace(const Tensor& x, PairTrace& t) const {
        check_input(x);
        if (shared_trunk()) {
            Tensor feat = trunk_s.forward_trace(x, t.trunk_s);
            t.xs = head_s.forward_trace(feat, t.head_s);
            t.xa = head_a.forward_trace(feat, t.head_a);
        } else {
            t.xs = head_s.forward_trace(trunk_s.forward_trace(x, t.trunk_s), t.head_s);
            t.xa = head_a.forward_trace(trunk_a.forward_trace(x, t.trunk_a), t.head_a);
        }
    }

    std::pair<Tensor, Tensor> forward(const Tensor& x) const {
        PairTrace t;
        forward_trace(x, t);
        return {t.xs, t.xa};
    }

    /// Backprop dL/dxs and dL/dxa; accumulates into all parameter grads.
    void backward(const PairTrace& t, const Tensor& gxs, const Tensor& gxa) {
        Tensor gfs = head_s.backward(t.head_s, gxs);
        Tensor gfa = head_a.backward(t.head_a, gxa);
        if (shared_trunk()) {
            for (std::size_t i = 0; i < gfs.v.size(); ++i) gfs.v[i] += gfa.v[i];
            trunk_s.backward(t.trunk_s, gfs);
        } else {
            trunk_s.backward(t.trunk_s, gfs);
            trunk_a.backward(t.trunk_a, gfa);
        }
    }
};

/// Heads (DuoAE: whole twins) start identical, so the fresh pair explains nothing.
inline GeneratorPair init_generator_pair(const GeneratorArch& arch, std::uint64_t seed) {
    GeneratorPair pair;
    pair.configure(arch);
    std::mt19937_64 rng(seed);
    pair.trunk_s.init_params(rng);
    pair.head_s.init_params(rng);
    if (!pair.shared_trunk()) {
        std::mt19937_64 rng2(seed);
        pair.trunk_a.init_params(rng2);
        pair.head_a.init_params(rng2);
    } else {
        pair.head_a.copy_params_from(pair.head_s);
    }
    return pair;
}

// ---------------------------------------------------------------------------
// Weight files: magic DXW1, u32 LE descriptor length, descriptor text, then
// tensors in declaration order as little-endian float32.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_weights(const std::vector<const ParamTensor*>& params, const std::string& descriptor,
                         const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open weight file for writing: " + path);
    os.write("DXW1", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(descriptor.size()));
    os.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
    for (const ParamTensor* p : params) {
        for (double d : p->value) {
            float f = static_cast<float>(d);
            os.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::string read_weight_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 2) != "DX" || magic[2] != 'W')
        throw std::runtime_error("not a weight file: " + path);
    if (magic[3] != '1')
        throw std::runtime_error("unsupported weight file version '" + std::string(1, magic[3]) + "': " + path);
    std::uint32_t len = detail::read_u32(is);
    std::string descriptor(len, '\0');
    is.read(descriptor.data(), len);
    if (!is) throw std::runtime_error("truncated weight file header: " + path);
    return descriptor;
}

inline void load_weight_payload(std::istream& is, const std::vector<ParamTensor*>& params, const std::string& path) {
    for (ParamTensor* p : params) {
        for (double& d : p->value) {
            float f;
            is.read(reinterpret_cast<char*>(&f), 4);
            d = static_cast<double>(f);
        }
    }
    if (!is) throw std::runtime_error("truncated weight file payload: " + path);
}

inline void save_classifier(const ClassifierNet& net, const std::string& path) {
    save_weights(net.params(), net.arch.descriptor(), path);
}

inline ClassifierNet load_classifier(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open weight file: " + path);
    std::string descriptor = read_weight_header(is, path);
    if (descriptor.rfind("clf-v1", 0) != 0)
        throw std::runtime_error("architecture mismatch: expected 'clf-v1 ...', found '" + descriptor + "' in " + path);
    ClassifierNet net;
    net.configure(ClassifierArch::parse(descriptor));
    load_weight_payload(is, net.params(), path);
    return net;
}

inline void save_generator(const GeneratorPair& pair, const std::string& path) {
    auto& mut = const_cast<GeneratorPair&>(pair);
    std::vector<const ParamTensor*> ps;
    for (ParamTensor* p : mut.params()) ps.push_back(p);
    save_weights(ps, pair.arch.descriptor(), path);
}

inline GeneratorPair load_generator(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open weight file: " + path);
    std::string descriptor = read_weight_header(is, path);
    if (descriptor.rfind("gen-v1", 0) != 0)
        throw std::runtime_error("architecture mismatch: expected 'gen-v1 ...', found '" + descriptor + "' in " + path);
    GeneratorPair pair;
    pair.configure(GeneratorArch::parse(descriptor));
    load_weight_payload(is, pair.params(), path);
    return pair;
}

/// Byte-exact fingerprint of a parameter set (FNV-1a over the float32 encoding).
inline std::uint64_t param_fingerprint(const std::vector<const ParamTensor*>& params) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (const ParamTensor* p : params)
        for (double d : p->value) {
            float f = static_cast<float>(d);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            for (int i = 0; i < 4; ++i) mix(b[i]);
        }
    return h;
}

}  // namespace dx
