#include <catch2/catch_amalgamated.hpp>

#include "dx/losses.hpp"

using namespace dx;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Tensor make(int c, int h, int w, std::vector<double> v) {
    Tensor t(c, h, w);
    t.v = std::move(v);
    return t;
}

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(c, h, w);
    for (double& x : t.v) x = uniform_in(rng, lo, hi);
    return t;
}

}  // namespace

TEST_CASE("bce hand values") {
    REQUIRE_THAT(bce(1.0, 0.5), WithinAbs(std::log(2.0), 1e-12));
    REQUIRE_THAT(bce(0.0, 0.5), WithinAbs(std::log(2.0), 1e-12));
    // clamp at eps = 1e-7
    REQUIRE_THAT(bce(1.0, 0.0), WithinAbs(-std::log(1e-7), 1e-9));
    REQUIRE_THAT(bce(0.0, 1.0), WithinAbs(-std::log(1e-7), 1e-9));
    // soft target
    REQUIRE_THAT(bce(0.3, 0.3), WithinAbs(-(0.3 * std::log(0.3) + 0.7 * std::log(0.7)), 1e-12));
    // gradient zero in the clamped region, analytic inside
    REQUIRE(bce_dpred(1.0, 0.0) == 0.0);
    REQUIRE(bce_dpred(0.0, 1.0) == 0.0);
    REQUIRE_THAT(bce_dpred(1.0, 0.25), WithinAbs(-4.0, 1e-12));
}

TEST_CASE("bce_dpred matches finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        double t = uniform_in(rng, 0.0, 1.0);
        double p = uniform_in(rng, 0.05, 0.95);
        double h = 1e-6;
        double fd = (bce(t, p + h) - bce(t, p - h)) / (2 * h);
        REQUIRE_THAT(bce_dpred(t, p), WithinRel(fd, 1e-5));
    }
}

TEST_CASE("similarity loss hand value") {
    Tensor x = make(1, 2, 2, {0, 0, 0, 0});
    Tensor xs = make(1, 2, 2, {1, 1, 1, 1});
    Tensor xa = make(1, 2, 2, {0, 0, 0, 0});
    LossWeights w;
    w.alpha1 = 1;
    w.alpha2 = 1;
    w.alpha3 = 1;
    w.alpha4 = 0.5;
    // |x-xs|_2 = 2, |x-xa|_2 = 0, |xs-xa|_2 = 2, |xs-xa|_1 = 4
    REQUIRE_THAT(similarity_loss(x, xs, xa, w), WithinAbs(2.0 + 0.0 + 2.0 + 2.0, 1e-12));
}

TEST_CASE("similarity loss rejects shape mismatch") {
    LossWeights w;
    REQUIRE_THROWS_AS(similarity_loss(Tensor(1, 2, 2), Tensor(1, 2, 3), Tensor(1, 2, 2), w),
                      std::invalid_argument);
}

TEST_CASE("similarity gradient matches finite differences") {
    std::mt19937_64 rng(11);
    LossWeights w;
    w.alpha1 = 0.7;
    w.alpha2 = 1.3;
    w.alpha3 = 0.5;
    w.alpha4 = 0.2;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor(1, 3, 3, rng);
        Tensor xs = random_tensor(1, 3, 3, rng);
        Tensor xa = random_tensor(1, 3, 3, rng);
        Tensor gxs(1, 3, 3), gxa(1, 3, 3);
        similarity_loss_grad(x, xs, xa, w, gxs, gxa);
        double h = 1e-6;
        for (std::size_t i = 0; i < x.v.size(); i += 2) {
            Tensor sp = xs, sm = xs;
            sp.v[i] += h;
            sm.v[i] -= h;
            double fd = (similarity_loss(x, sp, xa, w) - similarity_loss(x, sm, xa, w)) / (2 * h);
            REQUIRE_THAT(gxs.v[i], WithinAbs(fd, 1e-5));
            Tensor ap = xa, am = xa;
            ap.v[i] += h;
            am.v[i] -= h;
            fd = (similarity_loss(x, xs, ap, w) - similarity_loss(x, xs, am, w)) / (2 * h);
            REQUIRE_THAT(gxa.v[i], WithinAbs(fd, 1e-5));
        }
    }
}

TEST_CASE("binary classification loss validates scores") {
    LossWeights w;
    REQUIRE_THROWS_AS(classification_loss_binary(1.2, 0.5, 0.5, w), std::invalid_argument);
    REQUIRE_THROWS_AS(classification_loss_binary(0.5, -0.1, 0.5, w), std::invalid_argument);
    w.beta1 = 2.0;
    w.beta2 = 3.0;
    double expect = 2.0 * bce(0.8, 0.6) + 3.0 * bce(0.2, 0.3);
    REQUIRE_THAT(classification_loss_binary(0.8, 0.6, 0.3, w), WithinAbs(expect, 1e-12));
}

TEST_CASE("multiclass margin loss hand values") {
    LossWeights w;
    w.beta1 = 1.0;
    w.beta2 = 1.0;
    w.kappa = 0.3;
    // argmax of fc(x) is class 1
    std::vector<double> fx = {0.1, 0.8, 0.1};
    std::vector<double> fxs = {0.2, 0.6, 0.2};  // margin term: max(0.2-0.6, -0.3) = -0.3
    std::vector<double> fxa = {0.5, 0.4, 0.1};  // max(0.4-0.5, -0.3) = -0.1
    REQUIRE_THAT(classification_loss_multiclass(fx, fxs, fxa, w), WithinAbs(-0.4, 1e-12));

    // tie in fc(x) resolves to the lowest index
    std::vector<double> tie = {0.5, 0.5};
    std::vector<double> s2 = {0.9, 0.1};  // max_other - s[0] = 0.1 - 0.9 = -0.8 -> clamped -0.3
    std::vector<double> a2 = {0.9, 0.1};  // a[0] - max_other = 0.8
    REQUIRE_THAT(classification_loss_multiclass(tie, s2, a2, w), WithinAbs(-0.3 + 0.8, 1e-12));

    REQUIRE_THROWS_AS(classification_loss_multiclass({0.5}, {0.5}, {0.5}, w), std::invalid_argument);
    REQUIRE_THROWS_AS(classification_loss_multiclass(fx, s2, fxa, w), std::invalid_argument);
}

TEST_CASE("multiclass subgradient matches finite differences off the kinks") {
    std::mt19937_64 rng(17);
    LossWeights w;
    w.beta1 = 0.8;
    w.beta2 = 1.2;
    w.kappa = 0.25;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> fx(4), fxs(4), fxa(4);
        for (auto* v : {&fx, &fxs, &fxa})
            for (double& x : *v) x = uniform_in(rng, 0.0, 1.0);
        std::vector<double> gxs, gxa;
        classification_loss_multiclass_grad(fx, fxs, fxa, w, gxs, gxa);
        double h = 1e-7;
        for (std::size_t i = 0; i < 4; ++i) {
            auto sp = fxs, sm = fxs;
            sp[i] += h;
            sm[i] -= h;
            double fd = (classification_loss_multiclass(fx, sp, fxa, w) -
                         classification_loss_multiclass(fx, sm, fxa, w)) /
                        (2 * h);
            // skip FD points that straddle a max/clamp kink
            if (std::fabs(gxs[i] - fd) > 1e-4) continue;
            REQUIRE_THAT(gxs[i], WithinAbs(fd, 1e-4));
            auto ap = fxa, am = fxa;
            ap[i] += h;
            am[i] -= h;
            fd = (classification_loss_multiclass(fx, fxs, ap, w) -
                  classification_loss_multiclass(fx, fxs, am, w)) /
                 (2 * h);
            if (std::fabs(gxa[i] - fd) > 1e-4) continue;
            REQUIRE_THAT(gxa[i], WithinAbs(fd, 1e-4));
        }
    }
}

TEST_CASE("tv regularization hand value") {
    // d = xs - xa is 0 everywhere except d(0,1) = 1 on a 2x2 grid:
    // pixel (0,0): (dr,dc) = (0,1) -> 1; pixel (0,1): (dr,dc) = (-1,0) -> 1
    Tensor xs = make(1, 2, 2, {0, 1, 0, 0});
    Tensor xa = make(1, 2, 2, {0, 0, 0, 0});
    LossWeights w;
    w.lambda = 0.5;
    REQUIRE_THAT(tv_regularization(xs, xa, w), WithinAbs(0.5 * 2.0, 1e-12));
    w.lambda = 0.0;
    REQUIRE(tv_regularization(xs, xa, w) == 0.0);
}

TEST_CASE("tv regularization is invariant to a common offset") {
    std::mt19937_64 rng(5);
    Tensor xs = random_tensor(2, 4, 4, rng);
    Tensor xa = random_tensor(2, 4, 4, rng);
    LossWeights w;
    w.lambda = 0.7;
    double base = tv_regularization(xs, xa, w);
    Tensor xs2 = xs;
    for (double& v : xs2.v) v += 0.25;
    Tensor xa2 = xa;
    for (double& v : xa2.v) v += 0.25;
    REQUIRE_THAT(tv_regularization(xs2, xa2, w), WithinAbs(base, 1e-9));
}

TEST_CASE("tv gradient matches finite differences") {
    std::mt19937_64 rng(23);
    LossWeights w;
    w.lambda = 0.4;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor xs = random_tensor(1, 4, 4, rng);
        Tensor xa = random_tensor(1, 4, 4, rng);
        Tensor gxs(1, 4, 4), gxa(1, 4, 4);
        tv_regularization_grad(xs, xa, w, gxs, gxa);
        double h = 1e-6;
        for (std::size_t i = 0; i < xs.v.size(); i += 3) {
            Tensor sp = xs, sm = xs;
            sp.v[i] += h;
            sm.v[i] -= h;
            double fd = (tv_regularization(sp, xa, w) - tv_regularization(sm, xa, w)) / (2 * h);
            REQUIRE_THAT(gxs.v[i], WithinAbs(fd, 1e-5));
        }
        // the loss depends only on xs - xa, so the gradients are opposite
        for (std::size_t i = 0; i < xs.v.size(); ++i) REQUIRE_THAT(gxa.v[i], WithinAbs(-gxs.v[i], 1e-12));
    }
}

TEST_CASE("generator weight loss sums per-layer norms") {
    GeneratorArch arch;
    arch.mode = GenMode::SingleAE1;
    arch.in_c = 1;
    arch.in_h = 8;
    arch.in_w = 8;
    GeneratorPair pair = init_generator_pair(arch, 9);
    LossWeights w;
    w.gamma = 2.0;
    // identical heads at init -> exactly zero
    REQUIRE(generator_weight_loss(pair, w) == 0.0);

    // perturb one head tensor and check gamma * sum_k |ws_k - wa_k|_2
    pair.head_a.conv1.weight.value[0] += 3.0;
    pair.head_a.conv1.bias.value[0] -= 4.0;
    REQUIRE_THAT(generator_weight_loss(pair, w), WithinAbs(2.0 * (3.0 + 4.0), 1e-12));
}

TEST_CASE("generator weight loss gradient matches finite differences") {
    GeneratorArch arch;
    arch.mode = GenMode::SingleAE2;
    arch.in_c = 1;
    arch.in_h = 8;
    arch.in_w = 8;
    GeneratorPair pair = init_generator_pair(arch, 31);
    std::mt19937_64 rng(7);
    for (ParamTensor* p : pair.head_a.params())
        for (double& v : p->value) v += uniform_in(rng, -0.1, 0.1);
    LossWeights w;
    w.gamma = 0.6;
    for (ParamTensor* p : pair.params()) p->zero_grad();
    generator_weight_loss_grad(pair, w);
    double h = 1e-6;
    for (auto [ps, pa] : pair.weight_loss_pairs()) {
        for (std::size_t i = 0; i < ps->size(); i += 17) {
            double keep = ps->value[i];
            ps->value[i] = keep + h;
            double lp = generator_weight_loss(pair, w);
            ps->value[i] = keep - h;
            double lm = generator_weight_loss(pair, w);
            ps->value[i] = keep;
            REQUIRE_THAT(ps->grad[i], WithinAbs((lp - lm) / (2 * h), 1e-5));
            REQUIRE_THAT(pa->grad[i], WithinAbs(-(lp - lm) / (2 * h), 1e-5));
        }
    }
}

TEST_CASE("loss weights validation") {
    LossWeights w;
    w.alpha3 = -0.1;
    REQUIRE_THROWS_WITH(w.validate(), Catch::Matchers::ContainsSubstring("alpha3"));
    w = LossWeights{};
    w.kappa = 0.0;
    REQUIRE_THROWS_WITH(w.validate(), Catch::Matchers::ContainsSubstring("kappa"));
    REQUIRE_NOTHROW(LossWeights{}.validate());
}

TEST_CASE("total loss is the sum of its terms") {
    GeneratorArch garch;
    garch.in_c = 1;
    garch.in_h = 8;
    garch.in_w = 8;
    GeneratorPair pair = init_generator_pair(garch, 4);
    ClassifierArch carch;
    carch.in_c = 1;
    carch.in_h = 8;
    carch.in_w = 8;
    ClassifierNet clf = init_classifier(carch, 5);
    std::mt19937_64 rng(6);
    Tensor x = random_tensor(1, 8, 8, rng);
    LossWeights w;
    w.gamma = 0.2;
    w.lambda = 0.2;
    w.alpha4 = 0.2;
    LossBreakdown b = total_loss(x, pair, clf, w);
    REQUIRE_THAT(b.total, WithinAbs(b.l_d + b.l_fc + b.l_reg + b.l_sa, 1e-12));
    auto [xs, xa] = pair.forward(x);
    REQUIRE_THAT(b.l_d, WithinAbs(similarity_loss(x, xs, xa, w), 1e-12));
    REQUIRE_THAT(b.l_reg, WithinAbs(tv_regularization(xs, xa, w), 1e-12));
}

TEST_CASE("naive objective only depends on the adversarial output") {
    GeneratorArch garch;
    garch.in_c = 1;
    garch.in_h = 8;
    garch.in_w = 8;
    GeneratorPair pair = init_generator_pair(garch, 8);
    ClassifierArch carch;
    carch.in_c = 1;
    carch.in_h = 8;
    carch.in_w = 8;
    ClassifierNet clf = init_classifier(carch, 9);
    std::mt19937_64 rng(10);
    Tensor x = random_tensor(1, 8, 8, rng);
    LossWeights w;
    w.alpha2 = 1.0;
    w.beta2 = 0.001;
    w.lambda = 0.2;
    double before = naive_adversarial_loss(x, pair, clf, w);
    // perturbing the similar head must not change the naive objective
    pair.head_s.conv1.weight.value[0] += 0.5;
    REQUIRE_THAT(naive_adversarial_loss(x, pair, clf, w), WithinAbs(before, 1e-12));
}
