#pragma once

#include "dx/config.hpp"
#include "dx/explain.hpp"
#include "dx/metrics.hpp"
#include "dx/trainer.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace dx {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Worker parallelism (DX_THREADS caps it); deterministic by construction:
// every item writes only its own preallocated slot.
// ---------------------------------------------------------------------------

inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("DX_THREADS")) {
        long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    unsigned workers = std::min<std::size_t>(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < count; i += workers) fn(i);
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline void write_manifest(const fs::path& out_dir, const std::string& command, const RunConfig& cfg) {
    fs::create_directories(out_dir);
    json m{{"command", command}, {"config", to_json(cfg)}};
    std::ofstream os(out_dir / "manifest.json");
    os << m.dump(1) << "\n";
    if (!os) throw std::runtime_error("cannot write manifest in " + out_dir.string());
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline void cmd_synth(RunConfig cfg, const std::string& out_dir) {
    cfg.finalize();
    Dataset full = generate_dataset(cfg.dataset_spec);
    auto splits = split_dataset(full, cfg.split_ratios, cfg.seed);
    save_dataset(full, out_dir);
    save_dataset(splits[0], (fs::path(out_dir) / "train").string());
    save_dataset(splits[1], (fs::path(out_dir) / "val").string());
    save_dataset(splits[2], (fs::path(out_dir) / "test").string());
    write_manifest(out_dir, "synth", cfg);
    std::cout << "dataset: " << full.size() << " samples (" << splits[0].size() << " train, " << splits[1].size()
              << " val, " << splits[2].size() << " test), pathological fraction "
              << full.pathological_fraction() << "\n";
}

// ---------------------------------------------------------------------------
// train-classifier / train-generators
// ---------------------------------------------------------------------------

inline void write_checkpoint_sidecar(const fs::path& path, const TrainHistory& hist, const char* metric_name) {
    std::ofstream os(path);
    os.precision(10);
    os << "epochs " << hist.epochs.size() << "\n";
    if (!hist.epochs.empty()) {
        os << "final_lr " << hist.epochs.back().lr << "\n";
        os << metric_name << " " << hist.epochs.back().val_metric << "\n";
    }
}

inline void cmd_train_classifier(RunConfig cfg, const std::string& data_dir, const std::string& out_dir) {
    cfg.finalize();
    Dataset train = load_dataset((fs::path(data_dir) / "train").string());
    Dataset val = load_dataset((fs::path(data_dir) / "val").string());
    fs::create_directories(out_dir);
    TrainHistory hist;
    try {
        auto [net, h] = train_classifier(train, val, cfg.classifier_arch, cfg.classifier_train);
        hist = h;
        save_classifier(net, (fs::path(out_dir) / "classifier.dxw").string());
    } catch (TrainingDiverged& e) {
        std::ofstream os(fs::path(out_dir) / "classifier_history.csv");
        os << e.history.to_csv();
        throw;
    }
    std::ofstream os(fs::path(out_dir) / "classifier_history.csv");
    os << hist.to_csv();
    write_checkpoint_sidecar(fs::path(out_dir) / "classifier.meta.txt", hist, "val_auc");
    write_manifest(out_dir, "train-classifier", cfg);
    std::cout << "classifier trained, " << hist.epochs.size() << " epochs, final val AUC "
              << (hist.epochs.empty() ? 0.0 : hist.epochs.back().val_metric) << "\n";
}

inline void cmd_train_generators(RunConfig cfg, const std::string& data_dir, const std::string& classifier_path,
                                 const std::string& out_dir) {
    cfg.finalize();
    Dataset train = load_dataset((fs::path(data_dir) / "train").string());
    Dataset val = load_dataset((fs::path(data_dir) / "val").string());
    ClassifierNet clf = load_classifier(classifier_path);
    fs::create_directories(out_dir);
    TrainHistory hist;
    try {
        auto [pair, h] = train_generators(clf, train, val, cfg.generator_arch, cfg.generator_train);
        hist = h;
        save_generator(pair, (fs::path(out_dir) / "generators.dxw").string());
    } catch (TrainingDiverged& e) {
        std::ofstream os(fs::path(out_dir) / "generators_history.csv");
        os << e.history.to_csv();
        throw;
    }
    std::ofstream os(fs::path(out_dir) / "generators_history.csv");
    os << hist.to_csv();
    write_checkpoint_sidecar(fs::path(out_dir) / "generators.meta.txt", hist, "val_loss");
    write_manifest(out_dir, "train-generators", cfg);
    std::cout << "generators trained (" << (cfg.preset.empty() ? gen_mode_name(cfg.generator_arch.mode) : cfg.preset)
              << "), " << hist.epochs.size() << " epochs\n";
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

inline std::string map_stem(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "map_%05zu", i);
    return buf;
}

inline void cmd_explain(RunConfig cfg, const std::string& data_dir, const std::string& classifier_path,
                        const std::string& generators_path, const std::string& out_dir) {
    cfg.finalize();
    if (cfg.explainer != "dual" && cfg.explainer != "naive" && cfg.explainer != "gradient")
        throw std::invalid_argument("unknown explainer: " + cfg.explainer);
    Dataset ds = load_dataset(data_dir);
    ClassifierNet clf = load_classifier(classifier_path);
    std::optional<GeneratorPair> pair;
    if (cfg.explainer != "gradient") {
        pair = load_generator(generators_path);
        if (pair->arch.in_c != ds.channels || pair->arch.in_h != ds.height || pair->arch.in_w != ds.width)
            throw std::invalid_argument("generator weights do not match dataset dimensions");
    }
    fs::create_directories(out_dir);

    struct PerImage {
        ExplanationMap map;
        double fx = 0, fxs = -1, fxa = -1;
        double psnr_xs = 0, psnr_xa = 0, psnr_sa = 0, ssim_xs = 0, ssim_xa = 0;
        double seconds = 0;
    };
    std::vector<PerImage> results(ds.size());

    // One classifier clone per worker: backward() caches touch no shared state,
    // but gradient_saliency needs a mutable net.
    unsigned workers = std::max(1u, std::min<unsigned>(worker_count(), static_cast<unsigned>(ds.size())));
    std::vector<ClassifierNet> clf_copies(workers, clf);

    parallel_for(ds.size(), [&](std::size_t i) {
        const Tensor& x = ds.samples[i].image;
        ClassifierNet& my_clf = clf_copies[i % workers];
        Mapper mapper;
        if (cfg.explainer == "dual")
            mapper = [&](const Tensor& img) { return explain(*pair, img); };
        else if (cfg.explainer == "naive")
            mapper = [&](const Tensor& img) { return explain_naive(*pair, img); };
        else
            mapper = [&](const Tensor& img) { return gradient_saliency(my_clf, img); };

        auto t0 = std::chrono::steady_clock::now();
        ExplanationMap m;
        if (cfg.augment_n > 0) {
            AugmentationSpec spec = cfg.augmentation;
            spec.n = cfg.augment_n;
            m = explain_augmented(mapper, x, spec, cfg.seed + 0x9e3779b97f4a7c15ull * (i + 1));
        } else {
            m = mapper(x);
        }
        PerImage& r = results[i];
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.map = std::move(m);
        r.fx = my_clf.forward(x);
        if (pair) {
            auto [xs, xa] = pair->forward(x);
            r.fxs = my_clf.forward(xs);
            r.fxa = my_clf.forward(xa);
            r.psnr_xs = psnr(x, xs);
            r.psnr_xa = psnr(x, xa);
            r.psnr_sa = psnr(xs, xa);
            r.ssim_xs = ssim(x, xs);
            r.ssim_xa = ssim(x, xa);
        }
    });

    json scores = json::array();
    std::ofstream timing(fs::path(out_dir) / "timing.csv");
    timing << "index,seconds\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const PerImage& r = results[i];
        std::string stem = map_stem(i);
        save_map_f32(r.map, (fs::path(out_dir) / (stem + ".f32")).string());
        save_map_pgm(r.map, (fs::path(out_dir) / (stem + ".pgm")).string(),
                     (fs::path(out_dir) / (stem + ".txt")).string());
        json rec{{"index", i}, {"label", ds.samples[i].label}, {"fc_x", r.fx}};
        if (pair) {
            rec["fc_xs"] = r.fxs;
            rec["fc_xa"] = r.fxa;
            rec["psnr_xs"] = std::isfinite(r.psnr_xs) ? json(r.psnr_xs) : json("inf");
            rec["psnr_xa"] = std::isfinite(r.psnr_xa) ? json(r.psnr_xa) : json("inf");
            rec["psnr_sa"] = std::isfinite(r.psnr_sa) ? json(r.psnr_sa) : json("inf");
            rec["ssim_xs"] = r.ssim_xs;
            rec["ssim_xa"] = r.ssim_xa;
        }
        scores.push_back(rec);
        timing << i << "," << r.seconds << "\n";
    }
    json summary{{"explainer", cfg.explainer},
                 {"augment_n", cfg.augment_n},
                 {"count", ds.size()},
                 {"height", ds.height},
                 {"width", ds.width},
                 {"scores", scores}};
    std::ofstream os(fs::path(out_dir) / "scores.json");
    os << summary.dump(1) << "\n";
    write_manifest(out_dir, "explain", cfg);
    std::cout << "explained " << ds.size() << " images (" << cfg.explainer
              << (cfg.augment_n > 0 ? ", augmented N=" + std::to_string(cfg.augment_n) : "") << ")\n";
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline std::string format_localization_table(const LocalizationReport& rep) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << "Percentile ";
    for (int p : kIouPercentiles) os << "    " << p;
    os << "\nmean IoU   ";
    for (int p : kIouPercentiles) os << " " << rep.mean_iou.at(p);
    os << "\nTotal AUC_Loc   " << rep.total_auc << "\nPartial AUC_Loc " << rep.partial_auc << "\n";
    os << "evaluated " << rep.evaluated << ", skipped (no ground truth) " << rep.skipped_empty_gt << "\n";
    return os.str();
}

inline void cmd_evaluate(const std::string& maps_dir, const std::string& data_dir, const std::string& out_dir) {
    Dataset ds = load_dataset(data_dir);

    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.samples[i].label == 1 && !fs::exists(fs::path(maps_dir) / (map_stem(i) + ".f32")))
            missing.push_back(i);
    if (!missing.empty()) {
        std::string ids;
        for (std::size_t i : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(i);
        throw std::invalid_argument("missing explanation map for pathological sample(s): " + ids);
    }

    std::vector<ExplanationMap> maps;
    std::vector<std::vector<BBox>> boxes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        fs::path f = fs::path(maps_dir) / (map_stem(i) + ".f32");
        maps.push_back(fs::exists(f) ? load_map_f32(f.string(), ds.height, ds.width)
                                     : ExplanationMap(ds.height, ds.width));
        boxes.push_back(ds.samples[i].boxes);
    }
    LocalizationReport rep = evaluate_localization(maps, boxes, ds.height, ds.width);

    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "localization_report.json");
        os << localization_report_to_json(rep).dump(1) << "\n";
    }

    // Generator quality, from the scores recorded at explanation time.
    json quality{{"available", false}};
    fs::path scores_path = fs::path(maps_dir) / "scores.json";
    if (fs::exists(scores_path)) {
        std::ifstream is(scores_path);
        json summary;
        is >> summary;
        if (summary.contains("scores") && !summary["scores"].empty() && summary["scores"][0].contains("fc_xs")) {
            double mean_psnr_xs = 0, mean_psnr_xa = 0, mean_psnr_sa = 0, mean_ssim_xs = 0, mean_ssim_xa = 0;
            std::size_t n = 0, n_psnr_xs = 0, n_psnr_xa = 0, n_psnr_sa = 0;
            std::vector<int> labels_s, labels_a;
            std::vector<double> fxs, fxa;
            for (const auto& rec : summary["scores"]) {
                // +inf PSNR (identical images) is excluded from the means.
                auto add_psnr = [&rec](const char* key, double& acc, std::size_t& cnt) {
                    if (rec[key].is_number()) {
                        acc += rec[key].get<double>();
                        ++cnt;
                    }
                };
                add_psnr("psnr_xs", mean_psnr_xs, n_psnr_xs);
                add_psnr("psnr_xa", mean_psnr_xa, n_psnr_xa);
                add_psnr("psnr_sa", mean_psnr_sa, n_psnr_sa);
                mean_ssim_xs += rec["ssim_xs"].get<double>();
                mean_ssim_xa += rec["ssim_xa"].get<double>();
                ++n;
                double fx = rec["fc_x"].get<double>();
                labels_s.push_back(fx >= 0.5 ? 1 : 0);
                labels_a.push_back(1.0 - fx >= 0.5 ? 1 : 0);
                fxs.push_back(rec["fc_xs"].get<double>());
                fxa.push_back(rec["fc_xa"].get<double>());
            }
            quality["available"] = true;
            quality["mean_psnr_xs"] = n_psnr_xs ? mean_psnr_xs / n_psnr_xs : 0.0;
            quality["mean_psnr_xa"] = n_psnr_xa ? mean_psnr_xa / n_psnr_xa : 0.0;
            quality["mean_psnr_sa"] = n_psnr_sa ? mean_psnr_sa / n_psnr_sa : 0.0;
            quality["mean_ssim_xs"] = mean_ssim_xs / n;
            quality["mean_ssim_xa"] = mean_ssim_xa / n;
            try {
                quality["auc_s"] = roc_auc(labels_s, fxs);
            } catch (const std::exception&) {
                quality["auc_s"] = nullptr;  // single rounded class
            }
            try {
                quality["auc_a"] = roc_auc(labels_a, fxa);
            } catch (const std::exception&) {
                quality["auc_a"] = nullptr;
            }
        }
    }
    {
        std::ofstream os(fs::path(out_dir) / "quality_report.json");
        os << quality.dump(1) << "\n";
    }
    {
        std::ofstream os(fs::path(out_dir) / "tables.txt");
        os << format_localization_table(rep);
    }
    std::cout << format_localization_table(rep);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline void cmd_report(const std::string& run_dir, bool strict) {
    const std::vector<std::string> methods = {"dual", "dual-aug", "naive", "naive-aug", "gradient", "gradient-aug"};
    std::ostringstream md;
    md.setf(std::ios::fixed);
    md.precision(3);
    md << "# Explanation benchmark report\n\n";
    md << "## Weak localization\n\n";
    md << "| Method |";
    for (int p : kIouPercentiles) md << " IoU@" << p << " |";
    md << " Total AUC | Partial AUC |\n|---|";
    for (std::size_t i = 0; i < kIouPercentiles.size() + 2; ++i) md << "---|";
    md << "\n";

    bool any_missing = false;
    for (const std::string& m : methods) {
        fs::path rep_path = fs::path(run_dir) / ("eval-" + m) / "localization_report.json";
        md << "| " << m << " |";
        if (!fs::exists(rep_path)) {
            any_missing = true;
            for (std::size_t i = 0; i < kIouPercentiles.size() + 2; ++i) md << " missing |";
            md << "\n";
            continue;
        }
        std::ifstream is(rep_path);
        json j;
        is >> j;
        for (int p : kIouPercentiles) md << " " << j["mean_iou"][std::to_string(p)].get<double>() << " |";
        md << " " << j["total_auc"].get<double>() << " | " << j["partial_auc"].get<double>() << " |\n";
    }

    md << "\n## Generator quality\n\n| Method | SSIM(x,xs) | PSNR(x,xs) | PSNR(x,xa) | PSNR(xs,xa) | AUC_s | AUC_a |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const std::string& m : methods) {
        fs::path q_path = fs::path(run_dir) / ("eval-" + m) / "quality_report.json";
        md << "| " << m << " |";
        json q = json::object();
        if (fs::exists(q_path)) {
            std::ifstream is(q_path);
            is >> q;
        }
        if (!q.value("available", false)) {
            md << " - | - | - | - | - | - |\n";
            continue;
        }
        auto cell = [&](const char* key) {
            if (q.contains(key) && q[key].is_number())
                md << " " << q[key].get<double>() << " |";
            else
                md << " - |";
        };
        cell("mean_ssim_xs");
        cell("mean_psnr_xs");
        cell("mean_psnr_xa");
        cell("mean_psnr_sa");
        cell("auc_s");
        cell("auc_a");
        md << "\n";
    }

    std::uint64_t seed = 0;
    fs::path manifest = fs::path(run_dir) / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream is(manifest);
        json j;
        is >> j;
        if (j.contains("config")) seed = j["config"].value("seed", 0ull);
    }
    md << "\nseed: " << seed << "\n";

    std::ofstream os(fs::path(run_dir) / "report.md");
    os << md.str();
    std::cout << md.str();
    if (strict && any_missing) throw std::runtime_error("report: missing evaluation inputs (strict mode)");
}

}  // namespace dx
