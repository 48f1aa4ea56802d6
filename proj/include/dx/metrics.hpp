#pragma once

#include "dx/dataset.hpp"
#include "dx/explain.hpp"
#include "dx/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dx {

// ---------------------------------------------------------------------------
// Image quality
// ---------------------------------------------------------------------------

/// PSNR in dB with MAX = 1. Identical images return +infinity.
inline double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline double ssim_from_stats(double mu_a, double mu_b, double var_a, double var_b, double cov) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace detail

/// Mean local SSIM over 7x7 uniform windows (global statistics when the image
/// is smaller than the window). Channels are averaged.
inline double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    constexpr int win = 7;
    double total = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        double chan = 0.0;
        if (a.h < win || a.w < win) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            const double n = a.h * a.w;
            for (int r = 0; r < a.h; ++r)
                for (int c = 0; c < a.w; ++c) {
                    double x = a.at(ch, r, c), y = b.at(ch, r, c);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            double mu_a = sa / n, mu_b = sb / n;
            chan = detail::ssim_from_stats(mu_a, mu_b, saa / n - mu_a * mu_a, sbb / n - mu_b * mu_b,
                                           sab / n - mu_a * mu_b);
        } else {
            const double n = win * win;
            long windows = 0;
            for (int r0 = 0; r0 + win <= a.h; ++r0)
                for (int c0 = 0; c0 + win <= a.w; ++c0) {
                    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                    for (int r = r0; r < r0 + win; ++r)
                        for (int c = c0; c < c0 + win; ++c) {
                            double x = a.at(ch, r, c), y = b.at(ch, r, c);
                            sa += x;
                            sb += y;
                            saa += x * x;
                            sbb += y * y;
                            sab += x * y;
                        }
                    double mu_a = sa / n, mu_b = sb / n;
                    chan += detail::ssim_from_stats(mu_a, mu_b, saa / n - mu_a * mu_a, sbb / n - mu_b * mu_b,
                                                    sab / n - mu_a * mu_b);
                    ++windows;
                }
            chan /= static_cast<double>(windows);
        }
        total += chan;
    }
    return total / a.c;
}

// ---------------------------------------------------------------------------
// ROC / fidelity
// ---------------------------------------------------------------------------

/// Mann-Whitney ROC AUC; ties count 1/2.
inline double roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw std::invalid_argument("roc_auc: length mismatch");
    std::size_t n1 = 0;
    for (int l : labels) n1 += l ? 1 : 0;
    std::size_t n0 = labels.size() - n1;
    if (n0 == 0 || n1 == 0) throw std::invalid_argument("roc_auc: undefined, only one class present");

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - static_cast<double>(n1) * (n1 + 1) / 2.0) / (static_cast<double>(n1) * n0);
}

/// AUC_s / AUC_a against the rounded original predictions.
inline std::pair<double, double> fidelity_auc(const ClassifierNet& clf, const GeneratorPair& pair,
                                              const Dataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("fidelity_auc: empty dataset");
    std::vector<int> labels_s, labels_a;
    std::vector<double> scores_s, scores_a;
    for (const Sample& s : ds.samples) {
        double fx = clf.forward(s.image);
        auto [xs, xa] = pair.forward(s.image);
        labels_s.push_back(fx >= 0.5 ? 1 : 0);
        labels_a.push_back(1.0 - fx >= 0.5 ? 1 : 0);
        scores_s.push_back(clf.forward(xs));
        scores_a.push_back(clf.forward(xa));
    }
    return {roc_auc(labels_s, scores_s), roc_auc(labels_a, scores_a)};
}

// ---------------------------------------------------------------------------
// Weak localization
// ---------------------------------------------------------------------------

/// Nearest-rank percentile threshold; mask is 1 where map value >= threshold.
inline BinaryMask threshold_at_percentile(const ExplanationMap& map, int p) {
    if (p < 1 || p > 100) throw std::invalid_argument("percentile must be in 1..100");
    for (double d : map.v)
        if (!std::isfinite(d)) throw std::invalid_argument("threshold_at_percentile: non-finite map");
    std::vector<double> sorted(map.v);
    std::sort(sorted.begin(), sorted.end());
    std::size_t n = sorted.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(static_cast<double>(p) * n / 100.0));
    double thr = sorted[rank - 1];
    BinaryMask m(map.h, map.w);
    for (std::size_t i = 0; i < map.v.size(); ++i) m.v[i] = map.v[i] >= thr ? 1 : 0;
    return m;
}

inline double iou(const BinaryMask& m_e, const BinaryMask& m_gt) {
    if (m_e.h != m_gt.h || m_e.w != m_gt.w) throw std::invalid_argument("iou: shape mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < m_e.v.size(); ++i) {
        bool a = m_e.v[i], b = m_gt.v[i];
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (m_gt.count() == 0) throw std::invalid_argument("iou: undefined for empty ground truth");
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Precision/recall point at one percentile threshold.
struct PrPoint {
    int percentile = 0;
    double precision = 0.0, recall = 0.0;
};

/// Riemann sum of precision over recall, thresholds swept from the given high
/// percentile down (recall increasing), with R_0 = 0.
inline double auc_loc(const ExplanationMap& map, const BinaryMask& m_gt, int p_lo, int p_hi = 100,
                      std::vector<PrPoint>* curve = nullptr) {
    if (m_gt.count() == 0) throw std::invalid_argument("auc_loc: undefined for empty ground truth");
    if (p_lo < 1 || p_hi > 100 || p_lo > p_hi) throw std::invalid_argument("auc_loc: bad percentile range");

    const std::size_t n = map.v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return map.v[a] < map.v[b]; });
    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = map.v[order[i]];
    // suffix counts over the ascending order
    std::vector<std::size_t> gt_suffix(n + 1, 0);
    for (std::size_t i = n; i > 0; --i)
        gt_suffix[i - 1] = gt_suffix[i] + (m_gt.v[order[i - 1]] ? 1 : 0);

    const double gt_total = static_cast<double>(m_gt.count());
    double area = 0.0, r_prev = 0.0;
    for (int p = p_hi; p >= p_lo; --p) {
        std::size_t rank = static_cast<std::size_t>(std::ceil(static_cast<double>(p) * n / 100.0));
        double thr = sorted[rank - 1];
        std::size_t first = static_cast<std::size_t>(
            std::lower_bound(sorted.begin(), sorted.end(), thr) - sorted.begin());
        std::size_t mask_count = n - first;
        std::size_t inter = gt_suffix[first];
        double precision = mask_count == 0 ? 0.0 : static_cast<double>(inter) / mask_count;
        double recall = static_cast<double>(inter) / gt_total;
        area += precision * (recall - r_prev);
        r_prev = recall;
        if (curve) curve->push_back({p, precision, recall});
    }
    return area;
}

constexpr std::array<int, 5> kIouPercentiles = {80, 85, 90, 95, 98};

struct LocalizationReport {
    std::map<int, double> mean_iou;  // keyed by percentile
    double total_auc = 0.0, partial_auc = 0.0;
    std::size_t evaluated = 0, skipped_empty_gt = 0;
    // Per evaluated image: the 100-point precision/recall curve.
    std::vector<std::vector<PrPoint>> curves;
};

/// Dataset-level weak localization. Samples with no ground-truth boxes are
/// skipped and counted.
inline LocalizationReport evaluate_localization(const std::vector<ExplanationMap>& maps,
                                                const std::vector<std::vector<BBox>>& gt_boxes,
                                                int height, int width) {
    if (maps.size() != gt_boxes.size()) throw std::invalid_argument("evaluate_localization: length mismatch");
    LocalizationReport rep;
    for (int p : kIouPercentiles) rep.mean_iou[p] = 0.0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (gt_boxes[i].empty()) {
            ++rep.skipped_empty_gt;
            continue;
        }
        BinaryMask gt = gt_mask(gt_boxes[i], height, width);
        for (int p : kIouPercentiles) rep.mean_iou[p] += iou(threshold_at_percentile(maps[i], p), gt);
        std::vector<PrPoint> curve;
        rep.total_auc += auc_loc(maps[i], gt, 1, 100, &curve);
        rep.partial_auc += auc_loc(maps[i], gt, 80, 100);
        rep.curves.push_back(std::move(curve));
        ++rep.evaluated;
    }
    if (rep.evaluated == 0) throw std::invalid_argument("evaluate_localization: no sample with ground truth");
    for (int p : kIouPercentiles) rep.mean_iou[p] /= static_cast<double>(rep.evaluated);
    rep.total_auc /= static_cast<double>(rep.evaluated);
    rep.partial_auc /= static_cast<double>(rep.evaluated);
    return rep;
}

inline nlohmann::json localization_report_to_json(const LocalizationReport& rep) {
    nlohmann::json j;
    for (const auto& [p, v] : rep.mean_iou) j["mean_iou"][std::to_string(p)] = v;
    j["total_auc"] = rep.total_auc;
    j["partial_auc"] = rep.partial_auc;
    j["evaluated"] = rep.evaluated;
    j["skipped_empty_gt"] = rep.skipped_empty_gt;
    j["curves"] = nlohmann::json::array();
    for (const auto& curve : rep.curves) {
        nlohmann::json jc = nlohmann::json::array();
        for (const PrPoint& pt : curve) jc.push_back({pt.percentile, pt.precision, pt.recall});
        j["curves"].push_back(jc);
    }
    return j;
}

}  // namespace dx
