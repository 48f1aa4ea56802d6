#include "dx/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

dx::RunConfig make_config(const std::string& config_path, const std::string& preset, std::uint64_t seed,
                          bool seed_set, int augment, bool augment_set, const std::string& explainer,
                          bool strict) {
    dx::RunConfig cfg;
    if (!config_path.empty()) cfg = dx::load_run_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!preset.empty()) cfg.apply_preset(preset);
    if (augment_set) cfg.augment_n = augment;
    if (!explainer.empty()) cfg.explainer = explainer;
    if (strict) cfg.strict = true;
    cfg.finalize();
    cfg.dataset_spec.validate();
    cfg.classifier_train.validate();
    cfg.generator_train.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-generator visual explanations: synthetic data, training, explanation, evaluation"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir, data_dir, classifier_path, generators_path, maps_dir, run_dir;
    std::string explainer;
    std::uint64_t seed = 0;
    int augment = 0;
    bool strict = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config (or a manifest.json to replay)");
        sub->add_option("--seed", seed, "master seed");
        sub->add_flag("--strict", strict, "treat missing inputs as errors");
    };

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset and its splits");
    add_common(synth);
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* trainc = app.add_subcommand("train-classifier", "train the frozen classifier");
    add_common(trainc);
    trainc->add_option("--data", data_dir, "dataset directory (with train/ and val/)")->required();
    trainc->add_option("--out", out_dir, "output directory")->required();

    auto* traing = app.add_subcommand("train-generators", "train the generator couple");
    add_common(traing);
    traing->add_option("--preset", preset, "generator preset name");
    traing->add_option("--data", data_dir, "dataset directory (with train/ and val/)")->required();
    traing->add_option("--classifier", classifier_path, "classifier weight file")->required();
    traing->add_option("--out", out_dir, "output directory")->required();

    auto* explain = app.add_subcommand("explain", "produce explanation maps for a dataset split");
    add_common(explain);
    explain->add_option("--explainer", explainer, "dual | naive | gradient");
    auto* aug_opt = explain->add_option("--augment", augment, "prediction-time augmentation copies (0 = off)");
    explain->add_option("--data", data_dir, "dataset split directory")->required();
    explain->add_option("--classifier", classifier_path, "classifier weight file")->required();
    explain->add_option("--generators", generators_path, "generator weight file (unused for gradient)");
    explain->add_option("--out", out_dir, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "score explanation maps against ground truth");
    evaluate->add_option("--maps", maps_dir, "explanation output directory")->required();
    evaluate->add_option("--data", data_dir, "dataset split directory")->required();
    evaluate->add_option("--out", out_dir, "output directory")->required();

    auto* report = app.add_subcommand("report", "aggregate evaluations under a run directory");
    report->add_option("--run", run_dir, "run directory containing eval-* subdirectories")->required();
    report->add_flag("--strict", strict, "fail when any evaluation is missing");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            dx::cmd_synth(make_config(config_path, "", seed, synth->count("--seed") > 0, 0, false, "", strict),
                          out_dir);
        } else if (trainc->parsed()) {
            dx::cmd_train_classifier(
                make_config(config_path, "", seed, trainc->count("--seed") > 0, 0, false, "", strict), data_dir,
                out_dir);
        } else if (traing->parsed()) {
            dx::cmd_train_generators(
                make_config(config_path, preset, seed, traing->count("--seed") > 0, 0, false, "", strict),
                data_dir, classifier_path, out_dir);
        } else if (explain->parsed()) {
            dx::RunConfig cfg = make_config(config_path, "", seed, explain->count("--seed") > 0, augment,
                                            aug_opt->count() > 0, explainer, strict);
            if (cfg.explainer != "gradient" && generators_path.empty())
                throw std::invalid_argument("--generators is required for the " + cfg.explainer + " explainer");
            dx::cmd_explain(cfg, data_dir, classifier_path, generators_path, out_dir);
        } else if (evaluate->parsed()) {
            dx::cmd_evaluate(maps_dir, data_dir, out_dir);
        } else if (report->parsed()) {
            dx::cmd_report(run_dir, strict);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
