#pragma once

#include "dx/dataset.hpp"
#include "dx/models.hpp"
#include "dx/trainer.hpp"
#include "dx/warp.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace dx {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON (de)serialization of the component configs
// ---------------------------------------------------------------------------

inline json to_json(const DatasetSpec& s) {
    return json{{"count", s.count},
                {"height", s.height},
                {"width", s.width},
                {"channels", s.channels},
                {"pathological_fraction", s.pathological_fraction},
                {"blob_count_range", {s.blob_count_min, s.blob_count_max}},
                {"blob_radius_range", {s.blob_radius_min, s.blob_radius_max}},
                {"blob_intensity_range", {s.blob_intensity_min, s.blob_intensity_max}},
                {"background_texture_scale", s.background_texture_scale},
                {"seed", s.seed}};
}
inline DatasetSpec dataset_spec_from_json(const json& j) {
    DatasetSpec s;
    s.count = j.value("count", s.count);
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.channels = j.value("channels", s.channels);
    s.pathological_fraction = j.value("pathological_fraction", s.pathological_fraction);
    if (j.contains("blob_count_range")) {
        s.blob_count_min = j["blob_count_range"][0];
        s.blob_count_max = j["blob_count_range"][1];
    }
    if (j.contains("blob_radius_range")) {
        s.blob_radius_min = j["blob_radius_range"][0];
        s.blob_radius_max = j["blob_radius_range"][1];
    }
    if (j.contains("blob_intensity_range")) {
        s.blob_intensity_min = j["blob_intensity_range"][0];
        s.blob_intensity_max = j["blob_intensity_range"][1];
    }
    s.background_texture_scale = j.value("background_texture_scale", s.background_texture_scale);
    s.seed = j.value("seed", s.seed);
    return s;
}

inline json to_json(const LossWeights& w) {
    return json{{"alpha1", w.alpha1}, {"alpha2", w.alpha2}, {"alpha3", w.alpha3}, {"alpha4", w.alpha4},
                {"beta1", w.beta1},   {"beta2", w.beta2},   {"gamma", w.gamma},   {"lambda", w.lambda},
                {"kappa", w.kappa}};
}
inline LossWeights loss_weights_from_json(const json& j) {
    LossWeights w;
    w.alpha1 = j.value("alpha1", w.alpha1);
    w.alpha2 = j.value("alpha2", w.alpha2);
    w.alpha3 = j.value("alpha3", w.alpha3);
    w.alpha4 = j.value("alpha4", w.alpha4);
    w.beta1 = j.value("beta1", w.beta1);
    w.beta2 = j.value("beta2", w.beta2);
    w.gamma = j.value("gamma", w.gamma);
    w.lambda = j.value("lambda", w.lambda);
    w.kappa = j.value("kappa", w.kappa);
    return w;
}

inline json to_json(const AugmentationSpec& a) {
    return json{{"rotation_range", {a.rotation_min, a.rotation_max}},
                {"shift_rows_range", {a.shift_rows_min, a.shift_rows_max}},
                {"shift_cols_range", {a.shift_cols_min, a.shift_cols_max}},
                {"zoom_range", {a.zoom_min, a.zoom_max}},
                {"hflip", a.hflip},
                {"vflip", a.vflip},
                {"n", a.n}};
}
inline AugmentationSpec augmentation_from_json(const json& j) {
    AugmentationSpec a;
    auto range = [&j](const char* key, double& lo, double& hi) {
        if (j.contains(key)) {
            lo = j[key][0];
            hi = j[key][1];
        }
    };
    range("rotation_range", a.rotation_min, a.rotation_max);
    range("shift_rows_range", a.shift_rows_min, a.shift_rows_max);
    range("shift_cols_range", a.shift_cols_min, a.shift_cols_max);
    range("zoom_range", a.zoom_min, a.zoom_max);
    a.hflip = j.value("hflip", a.hflip);
    a.vflip = j.value("vflip", a.vflip);
    a.n = j.value("n", a.n);
    return a;
}

inline json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"initial_lr", c.initial_lr},
                {"lr_decay_factor", c.lr_decay_factor},
                {"plateau_patience", c.plateau_patience},
                {"seed", c.seed},
                {"loss_weights", to_json(c.loss_weights)},
                {"augmentation", to_json(c.augmentation)},
                {"augment_training", c.augment_training},
                {"objective", c.objective == TrainObjective::Dual ? "dual" : "naive"}};
}
inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss_weights")) c.loss_weights = loss_weights_from_json(j["loss_weights"]);
    if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j["augmentation"]);
    c.augment_training = j.value("augment_training", c.augment_training);
    c.objective = j.value("objective", "dual") == std::string("naive") ? TrainObjective::Naive : TrainObjective::Dual;
    return c;
}

// ---------------------------------------------------------------------------
// Named presets: the published generator couples plus the naive baseline
// ---------------------------------------------------------------------------

struct GeneratorPreset {
    std::string name;
    GenMode mode;
    TrainObjective objective;
    int batch_size;
    LossWeights weights;
};

inline std::vector<GeneratorPreset> generator_presets() {
    auto lw = [](double a1, double a2, double a3, double a4, double beta, double g, double l) {
        LossWeights w;
        w.alpha1 = a1;
        w.alpha2 = a2;
        w.alpha3 = a3;
        w.alpha4 = a4;
        w.beta1 = w.beta2 = beta;
        w.gamma = g;
        w.lambda = l;
        return w;
    };
    return {
        {"duo-tv", GenMode::DuoAE, TrainObjective::Dual, 4, lw(1, 1, 1, 0, 0.001, 0, 0.2)},
        {"duo-w-tv", GenMode::DuoAE, TrainObjective::Dual, 4, lw(1, 1, 1, 0, 0.001, 0.1, 0.2)},
        {"single-ae1-tv", GenMode::SingleAE1, TrainObjective::Dual, 8, lw(1, 1, 1, 0, 0.001, 0, 0.2)},
        {"single-ae1-w", GenMode::SingleAE1, TrainObjective::Dual, 8, lw(3, 1, 1, 0.2, 0.001, 0.1, 0)},
        {"single-ae1-w-tv", GenMode::SingleAE1, TrainObjective::Dual, 8, lw(1, 1, 1, 0.2, 0.001, 0.1, 0.2)},
        {"single-ae2-w", GenMode::SingleAE2, TrainObjective::Dual, 8, lw(3, 1, 1, 0.2, 0.001, 0.2, 0)},
        {"single-ae2-w-tv", GenMode::SingleAE2, TrainObjective::Dual, 8, lw(3, 1, 1, 0.2, 0.001, 0.2, 0.2)},
        {"adv-ae-tv", GenMode::SingleAE1, TrainObjective::Naive, 8, lw(0, 1, 0, 0, 0.001, 0, 0.2)},
    };
}

inline const GeneratorPreset& find_preset(const std::string& name) {
    static const std::vector<GeneratorPreset> presets = generator_presets();
    for (const auto& p : presets)
        if (p.name == name) return p;
    throw std::invalid_argument("unknown generator preset: " + name);
}

// ---------------------------------------------------------------------------
// RunConfig: everything a command needs, replayable from its manifest
// ---------------------------------------------------------------------------

struct RunConfig {
    std::uint64_t seed = 0;
    DatasetSpec dataset_spec;
    std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
    ClassifierArch classifier_arch;
    TrainConfig classifier_train;
    GeneratorArch generator_arch;
    TrainConfig generator_train;
    std::string preset;  // when set, overrides generator mode/weights/objective/batch
    AugmentationSpec augmentation;
    std::string explainer = "dual";  // dual | naive | gradient
    int augment_n = 0;               // prediction-time copies; 0 disables averaging
    bool strict = false;

    RunConfig() {
        classifier_train.epochs = 50;
        classifier_train.batch_size = 32;
        generator_train.epochs = 70;
        generator_train.batch_size = 8;
    }

    void apply_preset(const std::string& name) {
        const GeneratorPreset& p = find_preset(name);
        preset = name;
        generator_arch.mode = p.mode;
        generator_train.objective = p.objective;
        generator_train.batch_size = p.batch_size;
        generator_train.loss_weights = p.weights;
    }

    /// Propagates the top-level seed and shared augmentation spec downward.
    void finalize() {
        dataset_spec.seed = seed;
        classifier_train.seed = seed;
        generator_train.seed = seed;
        classifier_train.augmentation = augmentation;
        generator_train.augmentation = augmentation;
        if (!preset.empty()) apply_preset(preset);
        generator_arch.in_c = classifier_arch.in_c = dataset_spec.channels;
        generator_arch.in_h = classifier_arch.in_h = dataset_spec.height;
        generator_arch.in_w = classifier_arch.in_w = dataset_spec.width;
    }
};

inline json to_json(const RunConfig& c) {
    return json{{"seed", c.seed},
                {"dataset_spec", to_json(c.dataset_spec)},
                {"split_ratios", {c.split_ratios[0], c.split_ratios[1], c.split_ratios[2]}},
                {"classifier_arch", c.classifier_arch.descriptor()},
                {"classifier_train", to_json(c.classifier_train)},
                {"generator_arch", c.generator_arch.descriptor()},
                {"generator_train", to_json(c.generator_train)},
                {"preset", c.preset},
                {"augmentation", to_json(c.augmentation)},
                {"explainer", c.explainer},
                {"augment_n", c.augment_n},
                {"strict", c.strict}};
}

inline RunConfig run_config_from_json(const json& jin) {
    // Manifests wrap the config; accept both forms.
    const json& j = jin.contains("config") ? jin["config"] : jin;
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset_spec")) c.dataset_spec = dataset_spec_from_json(j["dataset_spec"]);
    if (j.contains("split_ratios"))
        c.split_ratios = {j["split_ratios"][0], j["split_ratios"][1], j["split_ratios"][2]};
    if (j.contains("classifier_arch")) c.classifier_arch = ClassifierArch::parse(j["classifier_arch"]);
    if (j.contains("classifier_train")) c.classifier_train = train_config_from_json(j["classifier_train"]);
    if (j.contains("generator_arch")) c.generator_arch = GeneratorArch::parse(j["generator_arch"]);
    if (j.contains("generator_train")) c.generator_train = train_config_from_json(j["generator_train"]);
    c.preset = j.value("preset", c.preset);
    if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j["augmentation"]);
    c.explainer = j.value("explainer", c.explainer);
    c.augment_n = j.value("augment_n", c.augment_n);
    c.strict = j.value("strict", c.strict);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("malformed config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace dx
