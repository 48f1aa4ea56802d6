#pragma once

#include "dx/dataset.hpp"
#include "dx/losses.hpp"
#include "dx/metrics.hpp"
#include "dx/optimizer.hpp"
#include "dx/warp.hpp"

#include <chrono>
#include <functional>
#include <sstream>

namespace dx {

enum class TrainObjective { Dual, Naive };

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double initial_lr = 1e-4;
    double lr_decay_factor = 3.0;
    int plateau_patience = 3;
    std::uint64_t seed = 0;
    LossWeights loss_weights;
    AugmentationSpec augmentation;
    bool augment_training = true;
    TrainObjective objective = TrainObjective::Dual;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (!(initial_lr > 0.0)) throw std::invalid_argument("train config: initial_lr must be > 0");
        if (!(lr_decay_factor > 1.0)) throw std::invalid_argument("train config: lr_decay_factor must be > 1");
        if (plateau_patience < 1) throw std::invalid_argument("train config: plateau_patience must be >= 1");
        loss_weights.validate();
        augmentation.validate();
    }
};

struct EpochStats {
    double mean_total = 0.0, mean_l_d = 0.0, mean_l_fc = 0.0, mean_l_reg = 0.0, mean_l_sa = 0.0;
    double lr = 0.0;
    double val_metric = 0.0;  // classifier: val AUC; generators: val total loss
    double wall_seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    std::string to_csv() const {
        std::ostringstream os;
        os << "epoch,lr,mean_total,mean_l_d,mean_l_fc,mean_l_reg,mean_l_sa,val_metric,wall_seconds\n";
        os.precision(10);
        for (std::size_t e = 0; e < epochs.size(); ++e) {
            const EpochStats& s = epochs[e];
            os << e + 1 << "," << s.lr << "," << s.mean_total << "," << s.mean_l_d << "," << s.mean_l_fc << ","
               << s.mean_l_reg << "," << s.mean_l_sa << "," << s.val_metric << "," << s.wall_seconds << "\n";
        }
        return os.str();
    }
};

/// Reduce-on-plateau: divide lr by the decay factor each time the best loss
/// has not improved (tolerance 1e-6) for `patience` consecutive epochs.
struct PlateauScheduler {
    double lr;
    double decay;
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int since_improvement = 0;

    PlateauScheduler(double initial_lr, double decay_factor, int patience_epochs)
        : lr(initial_lr), decay(decay_factor), patience(patience_epochs) {}

    double observe(double epoch_loss) {
        if (epoch_loss < best - 1e-6) {
            best = epoch_loss;
            since_improvement = 0;
        } else {
            ++since_improvement;
            if (since_improvement >= patience) {
                lr /= decay;
                since_improvement = 0;
            }
        }
        return lr;
    }
};

/// Called once per optimizer step with the exact objective that was stepped.
using BatchHook =
    std::function<void(int epoch, int batch, const std::vector<std::size_t>& sample_indices, const LossBreakdown&)>;

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[uniform_int_in(rng, 0, static_cast<std::int64_t>(i) - 1)]);
    return idx;
}

inline Tensor maybe_augment(const Tensor& x, const TrainConfig& cfg, std::mt19937_64& aug_rng) {
    if (!cfg.augment_training) return x;
    return apply_transform(sample_transform(cfg.augmentation, aug_rng), x);
}

inline double dataset_auc(const ClassifierNet& net, const Dataset& ds) {
    std::vector<int> labels;
    std::vector<double> scores;
    for (const Sample& s : ds.samples) {
        labels.push_back(s.label);
        scores.push_back(net.forward(s.image));
    }
    return roc_auc(labels, scores);
}

}  // namespace detail

/// Thrown when an objective stops being finite; carries the completed epochs.
struct TrainingDiverged : std::runtime_error {
    TrainHistory history;
    TrainingDiverged(const std::string& what, TrainHistory h) : std::runtime_error(what), history(std::move(h)) {}
};

inline std::pair<ClassifierNet, TrainHistory> train_classifier(const Dataset& train, const Dataset& val,
                                                               const ClassifierArch& arch, const TrainConfig& cfg) {
    cfg.validate();
    if (train.samples.empty() || val.samples.empty())
        throw std::invalid_argument("train_classifier: empty dataset");

    ClassifierNet net = init_classifier(arch, cfg.seed);
    AdamState adam;
    adam.attach(net.params());
    PlateauScheduler sched(cfg.initial_lr, cfg.lr_decay_factor, cfg.plateau_patience);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x73687566666c6531ull);
    std::mt19937_64 aug_rng(cfg.seed ^ 0x6175676d656e7431ull);

    TrainHistory hist;
    double best_auc = -1.0;
    std::vector<double> best_weights;
    auto snapshot = [&net]() {
        std::vector<double> w;
        for (ParamTensor* p : net.params()) w.insert(w.end(), p->value.begin(), p->value.end());
        return w;
    };
    auto restore = [&net](const std::vector<double>& w) {
        std::size_t off = 0;
        for (ParamTensor* p : net.params()) {
            std::copy(w.begin() + off, w.begin() + off + p->size(), p->value.begin());
            off += p->size();
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = sched.lr;
        auto order = detail::shuffled_indices(train.size(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double inv_b = 1.0 / static_cast<double>(end - start);
            for (ParamTensor* p : net.params()) p->zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train.samples[order[k]];
                Tensor x = detail::maybe_augment(s.image, cfg, aug_rng);
                ClassifierTrace tr;
                double score = net.forward_trace(x, tr);
                double loss = bce(s.label, score);
                if (!std::isfinite(loss)) throw TrainingDiverged("classifier loss diverged", hist);
                epoch_loss += loss;
                ++seen;
                net.backward(tr, bce_dpred(s.label, score) * inv_b, true);
            }
            adam_step(net.params(), adam, lr);
        }
        epoch_loss /= static_cast<double>(seen);

        EpochStats st;
        st.mean_total = st.mean_l_fc = epoch_loss;
        st.lr = lr;
        st.val_metric = detail::dataset_auc(net, val);
        st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(st);
        // >= keeps the most-trained checkpoint among ties, which also has the
        // sharpest decision margins
        if (st.val_metric >= best_auc) {
            best_auc = st.val_metric;
            best_weights = snapshot();
        }
        sched.observe(epoch_loss);
    }
    restore(best_weights);
    return {std::move(net), std::move(hist)};
}

inline std::pair<GeneratorPair, TrainHistory> train_generators(ClassifierNet& classifier, const Dataset& train,
                                                               const Dataset& val, const GeneratorArch& arch,
                                                               const TrainConfig& cfg,
                                                               const BatchHook& hook = nullptr) {
    cfg.validate();
    if (train.samples.empty() || val.samples.empty())
        throw std::invalid_argument("train_generators: empty dataset");
    auto clf_params = classifier.params();
    const std::uint64_t clf_before =
        param_fingerprint(std::vector<const ParamTensor*>(clf_params.begin(), clf_params.end()));

    const LossWeights& w = cfg.loss_weights;
    GeneratorPair pair = init_generator_pair(arch, cfg.seed);
    AdamState adam;
    adam.attach(pair.params());
    PlateauScheduler sched(cfg.initial_lr, cfg.lr_decay_factor, cfg.plateau_patience);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x73687566666c6532ull);
    std::mt19937_64 aug_rng(cfg.seed ^ 0x6175676d656e7432ull);

    TrainHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_weights;
    auto snapshot = [&pair]() {
        std::vector<double> out;
        for (ParamTensor* p : pair.params()) out.insert(out.end(), p->value.begin(), p->value.end());
        return out;
    };
    auto restore = [&pair](const std::vector<double>& src) {
        std::size_t off = 0;
        for (ParamTensor* p : pair.params()) {
            std::copy(src.begin() + off, src.begin() + off + p->size(), p->value.begin());
            off += p->size();
        }
    };

    auto val_loss = [&]() {
        double total = 0.0;
        for (const Sample& s : val.samples) {
            total += cfg.objective == TrainObjective::Dual
                         ? total_loss(s.image, pair, classifier, w).total
                         : naive_adversarial_loss(s.image, pair, classifier, w);
        }
        return total / static_cast<double>(val.size());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = sched.lr;
        auto order = detail::shuffled_indices(train.size(), shuffle_rng);
        double ep_total = 0.0, ep_d = 0.0, ep_fc = 0.0, ep_reg = 0.0, ep_sa = 0.0;
        std::size_t steps = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double inv_b = 1.0 / static_cast<double>(end - start);
            for (ParamTensor* p : pair.params()) p->zero_grad();

            LossBreakdown batch;
            std::vector<std::size_t> batch_indices(order.begin() + start, order.begin() + end);
            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train.samples[order[k]];
                Tensor x = detail::maybe_augment(s.image, cfg, aug_rng);
                PairTrace tr;
                pair.forward_trace(x, tr);
                Tensor gxs(x.c, x.h, x.w), gxa(x.c, x.h, x.w);

                double fx = classifier.forward(x);
                ClassifierTrace ts, ta;
                double fs = classifier.forward_trace(tr.xs, ts);
                double fa = classifier.forward_trace(tr.xa, ta);

                if (cfg.objective == TrainObjective::Dual) {
                    batch.l_d += similarity_loss(x, tr.xs, tr.xa, w);
                    batch.l_fc += classification_loss_binary(fx, fs, fa, w);
                    batch.l_reg += tv_regularization(tr.xs, tr.xa, w);
                    similarity_loss_grad(x, tr.xs, tr.xa, w, gxs, gxa);
                    tv_regularization_grad(tr.xs, tr.xa, w, gxs, gxa);
                    Tensor g_clf_s = classifier.backward(ts, w.beta1 * bce_dpred(fx, fs), false);
                    Tensor g_clf_a = classifier.backward(ta, w.beta2 * bce_dpred(1.0 - fx, fa), false);
                    for (std::size_t i = 0; i < gxs.v.size(); ++i) {
                        gxs.v[i] = (gxs.v[i] + g_clf_s.v[i]) * inv_b;
                        gxa.v[i] = (gxa.v[i] + g_clf_a.v[i]) * inv_b;
                    }
                } else {
                    double n2 = 0.0;
                    for (std::size_t i = 0; i < x.v.size(); ++i) {
                        double d = x.v[i] - tr.xa.v[i];
                        n2 += d * d;
                    }
                    n2 = std::sqrt(n2);
                    batch.l_d += w.alpha2 * n2;
                    batch.l_fc += w.beta2 * bce(1.0 - fx, fa);
                    batch.l_reg += tv_regularization(x, tr.xa, w);
                    Tensor gx_dummy(x.c, x.h, x.w);
                    tv_regularization_grad(x, tr.xa, w, gx_dummy, gxa);
                    Tensor g_clf_a = classifier.backward(ta, w.beta2 * bce_dpred(1.0 - fx, fa), false);
                    for (std::size_t i = 0; i < gxa.v.size(); ++i) {
                        double g_sim = n2 > 1e-12 ? w.alpha2 * (tr.xa.v[i] - x.v[i]) / n2 : 0.0;
                        gxa.v[i] = (gxa.v[i] + g_sim + g_clf_a.v[i]) * inv_b;
                    }
                }
                pair.backward(tr, gxs, gxa);
            }
            batch.l_d *= inv_b;
            batch.l_fc *= inv_b;
            batch.l_reg *= inv_b;
            if (cfg.objective == TrainObjective::Dual) {
                batch.l_sa = generator_weight_loss(pair, w);
                generator_weight_loss_grad(pair, w);
            }
            batch.total = batch.l_d + batch.l_fc + batch.l_reg + batch.l_sa;
            if (!std::isfinite(batch.total)) throw TrainingDiverged("generator loss diverged", hist);
            if (hook) hook(epoch, static_cast<int>(steps), batch_indices, batch);

            adam_step(pair.params(), adam, lr);
            ep_total += batch.total;
            ep_d += batch.l_d;
            ep_fc += batch.l_fc;
            ep_reg += batch.l_reg;
            ep_sa += batch.l_sa;
            ++steps;
        }

        EpochStats st;
        double inv_steps = 1.0 / static_cast<double>(steps);
        st.mean_total = ep_total * inv_steps;
        st.mean_l_d = ep_d * inv_steps;
        st.mean_l_fc = ep_fc * inv_steps;
        st.mean_l_reg = ep_reg * inv_steps;
        st.mean_l_sa = ep_sa * inv_steps;
        st.lr = lr;
        st.val_metric = val_loss();
        st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(st);
        if (st.val_metric < best_val) {
            best_val = st.val_metric;
            best_weights = snapshot();
        }
        sched.observe(st.mean_total);
    }
    restore(best_weights);

    const std::uint64_t clf_after =
        param_fingerprint(std::vector<const ParamTensor*>(clf_params.begin(), clf_params.end()));
    if (clf_before != clf_after)
        throw std::logic_error("frozen classifier was mutated during generator training");
    return {std::move(pair), std::move(hist)};
}

}  // namespace dx
