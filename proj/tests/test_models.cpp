#include <catch2/catch_amalgamated.hpp>

#include "dx/models.hpp"
#include "fd_check.hpp"

#include <filesystem>
#include <fstream>

using namespace dx;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

std::size_t total_params(std::vector<ParamTensor*> ps) {
    std::size_t n = 0;
    for (ParamTensor* p : ps) n += p->size();
    return n;
}

fs::path temp_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("dx_models_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("parameter counts match the architecture arithmetic") {
    // classifier 1x32x32, widths 8/16/32:
    //   72+8 + 1152+16 + 4608+32 + 32+1 = 5921
    ClassifierNet clf = init_classifier(ClassifierArch{}, 1);
    REQUIRE(total_params(clf.params()) == 5921);

    // trunk base 8: 80 + 1168 + 4640 + 6928 + 1736 = 14552
    // 1-layer head: 73, 2-layer head: 657
    GeneratorArch a;
    a.mode = GenMode::SingleAE1;
    REQUIRE(total_params(init_generator_pair(a, 1).params()) == 14552 + 2 * 73);
    a.mode = GenMode::SingleAE2;
    REQUIRE(total_params(init_generator_pair(a, 1).params()) == 14552 + 2 * 657);
    a.mode = GenMode::DuoAE;
    REQUIRE(total_params(init_generator_pair(a, 1).params()) == 2 * (14552 + 73));
}

TEST_CASE("arch descriptors round trip") {
    ClassifierArch c;
    c.in_h = 16;
    c.w2 = 24;
    ClassifierArch c2 = ClassifierArch::parse(c.descriptor());
    REQUIRE(c2.descriptor() == c.descriptor());
    REQUIRE_THROWS_AS(ClassifierArch::parse("garbage"), std::runtime_error);

    for (GenMode m : {GenMode::DuoAE, GenMode::SingleAE1, GenMode::SingleAE2}) {
        GeneratorArch g;
        g.mode = m;
        GeneratorArch g2 = GeneratorArch::parse(g.descriptor());
        REQUIRE(g2.descriptor() == g.descriptor());
        REQUIRE(g2.mode == m);
    }
    REQUIRE_THROWS_AS(GeneratorArch::parse("gen-v1 mode=weird in=1x4x4 base=8"), std::runtime_error);
}

TEST_CASE("classifier forward is deterministic and produces probabilities") {
    ClassifierArch arch;
    ClassifierNet a = init_classifier(arch, 7);
    ClassifierNet b = init_classifier(arch, 7);
    ClassifierNet c = init_classifier(arch, 8);
    std::mt19937_64 rng(1);
    Tensor x = fdcheck::random_input(1, 32, 32, rng);
    double sa = a.forward(x);
    REQUIRE(sa == b.forward(x));
    REQUIRE(sa != c.forward(x));
    REQUIRE(sa > 0.0);
    REQUIRE(sa < 1.0);
    REQUIRE_THROWS_AS(a.forward(Tensor(1, 16, 16)), std::invalid_argument);
}

TEST_CASE("generator outputs are images in [0,1] with the input shape") {
    GeneratorArch arch;
    arch.mode = GenMode::SingleAE2;
    GeneratorPair pair = init_generator_pair(arch, 3);
    std::mt19937_64 rng(2);
    Tensor x = fdcheck::random_input(1, 32, 32, rng);
    auto [xs, xa] = pair.forward(x);
    REQUIRE(xs.same_shape(x));
    REQUIRE(xa.same_shape(x));
    for (double v : xs.v) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
    }
    REQUIRE_THROWS_AS(pair.forward(Tensor(1, 16, 16)), std::invalid_argument);
}

TEST_CASE("freshly initialized pair has identical branches") {
    std::mt19937_64 rng(3);
    for (GenMode m : {GenMode::DuoAE, GenMode::SingleAE1, GenMode::SingleAE2}) {
        GeneratorArch arch;
        arch.mode = m;
        GeneratorPair pair = init_generator_pair(arch, 11);
        Tensor x = fdcheck::random_input(1, 32, 32, rng);
        auto [xs, xa] = pair.forward(x);
        REQUIRE(xs.v == xa.v);  // bit exact
    }
}

TEST_CASE("weight loss pairs cover exactly the non-shared tensors") {
    GeneratorArch arch;
    arch.mode = GenMode::SingleAE1;
    GeneratorPair p1 = init_generator_pair(arch, 1);
    REQUIRE(p1.weight_loss_pairs().size() == 2);  // head conv w+b
    arch.mode = GenMode::SingleAE2;
    GeneratorPair p2 = init_generator_pair(arch, 1);
    REQUIRE(p2.weight_loss_pairs().size() == 4);
    arch.mode = GenMode::DuoAE;
    GeneratorPair pd = init_generator_pair(arch, 1);
    REQUIRE(pd.weight_loss_pairs().size() == 10 + 2);  // full trunk + head
}

TEST_CASE("classifier weight IO round trips bit-exactly through float32") {
    fs::path dir = temp_dir("clf_io");
    ClassifierNet net = init_classifier(ClassifierArch{}, 99);
    std::string path = (dir / "c.dxw").string();
    save_classifier(net, path);
    ClassifierNet back = load_classifier(path);
    auto pa = net.params(), pb = back.params();
    for (std::size_t k = 0; k < pa.size(); ++k)
        for (std::size_t i = 0; i < pa[k]->size(); ++i)
            REQUIRE(static_cast<float>(pa[k]->value[i]) == static_cast<float>(pb[k]->value[i]));
    // saved twice -> identical bytes
    save_classifier(back, (dir / "c2.dxw").string());
    std::ifstream f1(path, std::ios::binary), f2(dir / "c2.dxw", std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(s1 == s2);
    fs::remove_all(dir);
}

TEST_CASE("generator weight IO preserves behaviour") {
    fs::path dir = temp_dir("gen_io");
    GeneratorArch arch;
    arch.mode = GenMode::DuoAE;
    GeneratorPair pair = init_generator_pair(arch, 5);
    std::mt19937_64 rng(6);
    fdcheck::perturb_params(pair.params(), rng, 0.05);
    std::string path = (dir / "g.dxw").string();
    save_generator(pair, path);
    GeneratorPair back = load_generator(path);
    REQUIRE(back.arch.descriptor() == pair.arch.descriptor());
    Tensor x = fdcheck::random_input(1, 32, 32, rng);
    auto [xs1, xa1] = pair.forward(x);
    auto [xs2, xa2] = back.forward(x);
    for (std::size_t i = 0; i < xs1.v.size(); ++i) {
        REQUIRE_THAT(xs2.v[i], WithinAbs(xs1.v[i], 1e-6));
        REQUIRE_THAT(xa2.v[i], WithinAbs(xa1.v[i], 1e-6));
    }
    fs::remove_all(dir);
}

TEST_CASE("weight file error paths") {
    fs::path dir = temp_dir("werr");
    REQUIRE_THROWS_WITH(load_classifier((dir / "nope.dxw").string()),
                        Catch::Matchers::ContainsSubstring("cannot open"));
    {
        std::ofstream os(dir / "bad.dxw", std::ios::binary);
        os << "JUNKJUNKJUNK";
    }
    REQUIRE_THROWS_WITH(load_classifier((dir / "bad.dxw").string()),
                        Catch::Matchers::ContainsSubstring("not a weight file"));
    {
        std::ofstream os(dir / "v9.dxw", std::ios::binary);
        os << "DXW9";
        os << std::string(8, '\0');
    }
    REQUIRE_THROWS_WITH(load_classifier((dir / "v9.dxw").string()),
                        Catch::Matchers::ContainsSubstring("unsupported weight file version"));

    // a generator file is not a classifier file
    GeneratorPair pair = init_generator_pair(GeneratorArch{}, 1);
    save_generator(pair, (dir / "g.dxw").string());
    REQUIRE_THROWS_WITH(load_classifier((dir / "g.dxw").string()),
                        Catch::Matchers::ContainsSubstring("architecture mismatch"));
    ClassifierNet net = init_classifier(ClassifierArch{}, 1);
    save_classifier(net, (dir / "c.dxw").string());
    REQUIRE_THROWS_WITH(load_generator((dir / "c.dxw").string()),
                        Catch::Matchers::ContainsSubstring("architecture mismatch"));

    // truncated payload
    {
        std::ifstream is(dir / "c.dxw", std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(is)), {});
        std::ofstream os(dir / "trunc.dxw", std::ios::binary);
        os.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
    }
    REQUIRE_THROWS_WITH(load_classifier((dir / "trunc.dxw").string()),
                        Catch::Matchers::ContainsSubstring("truncated"));
    fs::remove_all(dir);
}

TEST_CASE("param fingerprint detects any change") {
    ClassifierNet net = init_classifier(ClassifierArch{}, 12);
    auto ps = net.params();
    std::vector<const ParamTensor*> cps(ps.begin(), ps.end());
    std::uint64_t f1 = param_fingerprint(cps);
    REQUIRE(f1 == param_fingerprint(cps));
    net.c2.weight.value[100] += 1e-4;
    REQUIRE(f1 != param_fingerprint(cps));
}

TEST_CASE("classifier gradients pass finite-difference checks") {
    for (std::uint64_t seed : {101, 102, 103}) {
        auto s = fdcheck::make_scenario(GenMode::SingleAE1, seed);
        double target = seed % 2 ? 1.0 : 0.25;
        fdcheck::classifier_objective_grads(s.x, s.clf, target);
        double err = fdcheck::max_param_grad_error(
            s.clf.params(), [&] { return fdcheck::classifier_objective(s.x, s.clf, target); }, 7);
        REQUIRE(err <= 1e-3);
        REQUIRE(fdcheck::max_classifier_input_grad_error(s.x, s.clf, target) <= 1e-3);
    }
}

TEST_CASE("generator pair gradients pass finite-difference checks for all modes") {
    std::uint64_t seed = 200;
    for (GenMode m : {GenMode::DuoAE, GenMode::SingleAE1, GenMode::SingleAE2}) {
        auto s = fdcheck::make_scenario(m, ++seed);
        fdcheck::dual_objective_grads(s.x, s.pair, s.clf, s.w);
        double err = fdcheck::max_param_grad_error(
            s.pair.params(), [&] { return fdcheck::dual_objective(s.x, s.pair, s.clf, s.w); }, 23);
        INFO("mode " << gen_mode_name(m));
        REQUIRE(err <= 1e-3);
    }
}

TEST_CASE("naive objective gradients pass finite-difference checks") {
    auto s = fdcheck::make_scenario(GenMode::SingleAE1, 300);
    s.w.gamma = 0.0;
    fdcheck::naive_objective_grads(s.x, s.pair, s.clf, s.w);
    double err = fdcheck::max_param_grad_error(
        s.pair.params(), [&] { return fdcheck::naive_objective(s.x, s.pair, s.clf, s.w); }, 23);
    REQUIRE(err <= 1e-3);
}
