#include <catch2/catch_amalgamated.hpp>

#include "dx/pipeline.hpp"

#include <fstream>
#include <map>

using namespace dx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("dx_pipe_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

RunConfig tiny_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.dataset_spec.count = 60;
    cfg.classifier_train.epochs = 2;
    cfg.generator_train.epochs = 1;
    cfg.classifier_train.batch_size = 8;
    cfg.apply_preset("single-ae1-w-tv");
    cfg.finalize();
    return cfg;
}

std::map<std::string, std::string> dir_bytes(const fs::path& root, const std::vector<std::string>& skip = {}) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::string rel = fs::relative(e.path(), root).string();
        bool skipped = false;
        for (const std::string& s : skip) skipped = skipped || rel.find(s) != std::string::npos;
        if (skipped) continue;
        std::ifstream is(e.path(), std::ios::binary);
        out[rel] = std::string((std::istreambuf_iterator<char>(is)), {});
    }
    return out;
}

struct PipelineRun {
    fs::path root;
    RunConfig cfg;

    explicit PipelineRun(const std::string& tag, std::uint64_t seed) : root(temp_dir(tag)), cfg(tiny_config(seed)) {
        cmd_synth(cfg, (root / "data").string());
        cmd_train_classifier(cfg, (root / "data").string(), (root / "clf").string());
        cmd_train_generators(cfg, (root / "data").string(), (root / "clf/classifier.dxw").string(),
                             (root / "gen").string());
    }
};

}  // namespace

TEST_CASE("synth writes a replayable manifest and identical reruns") {
    RunConfig cfg = tiny_config(31);
    fs::path a = temp_dir("synth_a"), b = temp_dir("synth_b"), c = temp_dir("synth_c");
    cmd_synth(cfg, a.string());
    REQUIRE(fs::exists(a / "index.json"));
    REQUIRE(fs::exists(a / "train/index.json"));
    REQUIRE(fs::exists(a / "val/index.json"));
    REQUIRE(fs::exists(a / "test/index.json"));
    REQUIRE(fs::exists(a / "manifest.json"));

    // rerun with the same config: byte identical
    cmd_synth(cfg, b.string());
    REQUIRE(dir_bytes(a) == dir_bytes(b));

    // replay from the manifest alone: byte identical
    {
        std::ifstream is(a / "manifest.json");
        nlohmann::json m;
        is >> m;
        RunConfig replay = run_config_from_json(m);
        cmd_synth(replay, c.string());
    }
    REQUIRE(dir_bytes(a) == dir_bytes(c));

    Dataset train = load_dataset((a / "train").string());
    Dataset val = load_dataset((a / "val").string());
    Dataset test = load_dataset((a / "test").string());
    REQUIRE(train.size() + val.size() + test.size() == 60);

    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("full pipeline produces maps, evaluations and a report") {
    PipelineRun run("full", 7);
    const fs::path& root = run.root;
    REQUIRE(fs::exists(root / "clf/classifier.dxw"));
    REQUIRE(fs::exists(root / "clf/classifier_history.csv"));
    REQUIRE(fs::exists(root / "gen/generators.dxw"));

    for (std::string kind : {"dual", "naive", "gradient"}) {
        RunConfig ecfg = run.cfg;
        ecfg.explainer = kind;
        cmd_explain(ecfg, (root / "data/test").string(), (root / "clf/classifier.dxw").string(),
                    (root / "gen/generators.dxw").string(), (root / ("maps-" + kind)).string());
        cmd_evaluate((root / ("maps-" + kind)).string(), (root / "data/test").string(),
                     (root / ("eval-" + kind)).string());
        REQUIRE(fs::exists(root / ("eval-" + kind) / "localization_report.json"));
        REQUIRE(fs::exists(root / ("eval-" + kind) / "quality_report.json"));
        REQUIRE(fs::exists(root / ("eval-" + kind) / "tables.txt"));
    }

    // augmented map run with the same seed is reproducible
    RunConfig acfg = run.cfg;
    acfg.explainer = "dual";
    acfg.augment_n = 2;
    cmd_explain(acfg, (root / "data/test").string(), (root / "clf/classifier.dxw").string(),
                (root / "gen/generators.dxw").string(), (root / "maps-dual-aug").string());
    cmd_evaluate((root / "maps-dual-aug").string(), (root / "data/test").string(),
                 (root / "eval-dual-aug").string());

    // quality report numbers exist for generator-backed explainers
    {
        std::ifstream is(root / "eval-dual/quality_report.json");
        nlohmann::json q;
        is >> q;
        REQUIRE(q["available"] == true);
        REQUIRE(q["mean_ssim_xs"].is_number());
    }

    cmd_report(root.string(), false);
    REQUIRE(fs::exists(root / "report.md"));
    std::ifstream is(root / "report.md");
    std::string md((std::istreambuf_iterator<char>(is)), {});
    REQUIRE(md.find("| dual |") != std::string::npos);
    REQUIRE(md.find("| gradient-aug | missing") != std::string::npos);
    REQUIRE_THROWS_WITH(cmd_report(root.string(), true), Catch::Matchers::ContainsSubstring("strict"));

    fs::remove_all(root);
}

TEST_CASE("training commands replay byte-identically from their manifests") {
    PipelineRun run("replay", 13);
    const fs::path& root = run.root;

    // replay classifier training from its manifest
    {
        std::ifstream is(root / "clf/manifest.json");
        nlohmann::json m;
        is >> m;
        RunConfig replay = run_config_from_json(m);
        cmd_train_classifier(replay, (root / "data").string(), (root / "clf2").string());
    }
    auto skip = std::vector<std::string>{"history.csv"};  // wall-clock column
    REQUIRE(dir_bytes(root / "clf", skip) == dir_bytes(root / "clf2", skip));

    {
        std::ifstream is(root / "gen/manifest.json");
        nlohmann::json m;
        is >> m;
        RunConfig replay = run_config_from_json(m);
        cmd_train_generators(replay, (root / "data").string(), (root / "clf2/classifier.dxw").string(),
                             (root / "gen2").string());
    }
    REQUIRE(dir_bytes(root / "gen", skip) == dir_bytes(root / "gen2", skip));

    // explanation maps and evaluation replays, including timing quarantine
    RunConfig ecfg = run.cfg;
    ecfg.explainer = "dual";
    for (const char* out : {"m1", "m2"})
        cmd_explain(ecfg, (root / "data/test").string(), (root / "clf/classifier.dxw").string(),
                    (root / "gen/generators.dxw").string(), (root / out).string());
    auto skip_t = std::vector<std::string>{"timing.csv"};
    REQUIRE(dir_bytes(root / "m1", skip_t) == dir_bytes(root / "m2", skip_t));

    for (const char* out : {"e1", "e2"})
        cmd_evaluate((root / "m1").string(), (root / "data/test").string(), (root / out).string());
    REQUIRE(dir_bytes(root / "e1") == dir_bytes(root / "e2"));

    fs::remove_all(root);
}

TEST_CASE("evaluate names missing pathological maps") {
    PipelineRun run("missing", 3);
    const fs::path& root = run.root;
    RunConfig ecfg = run.cfg;
    ecfg.explainer = "dual";
    cmd_explain(ecfg, (root / "data/test").string(), (root / "clf/classifier.dxw").string(),
                (root / "gen/generators.dxw").string(), (root / "maps").string());

    // delete the map of the first pathological test sample
    Dataset test = load_dataset((root / "data/test").string());
    std::size_t victim = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (test.samples[i].label == 1) {
            victim = i;
            break;
        }
    fs::remove(root / "maps" / (map_stem(victim) + ".f32"));
    REQUIRE_THROWS_WITH(cmd_evaluate((root / "maps").string(), (root / "data/test").string(),
                                     (root / "eval").string()),
                        Catch::Matchers::ContainsSubstring(std::to_string(victim)));
    fs::remove_all(root);
}

TEST_CASE("explain validates the explainer name and weight compatibility") {
    PipelineRun run("badargs", 5);
    const fs::path& root = run.root;
    RunConfig bad = run.cfg;
    bad.explainer = "wat";
    REQUIRE_THROWS_WITH(cmd_explain(bad, (root / "data/test").string(), (root / "clf/classifier.dxw").string(),
                                    (root / "gen/generators.dxw").string(), (root / "x").string()),
                        Catch::Matchers::ContainsSubstring("unknown explainer"));
    fs::remove_all(root);
}

TEST_CASE("DX_THREADS caps the worker count") {
    setenv("DX_THREADS", "1", 1);
    REQUIRE(worker_count() == 1);
    setenv("DX_THREADS", "3", 1);
    REQUIRE(worker_count() <= 3);
    unsetenv("DX_THREADS");
    REQUIRE(worker_count() >= 1);

    // parallel_for visits every index exactly once
    setenv("DX_THREADS", "2", 1);
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) REQUIRE(h == 1);
    unsetenv("DX_THREADS");
}
