#include "moe_absa/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace moeabsa {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

ClassMetrics from_counts(long tp, long fp, long fn) {
    ClassMetrics m;
    m.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
    m.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.f1 = f1_of(m.precision, m.recall);
    m.support = tp + fn;
    return m;
}

ClassMetrics weighted_mean(const std::vector<ClassMetrics>& per_class) {
    ClassMetrics w;
    long total = 0;
    for (const auto& m : per_class) total += m.support;
    for (const auto& m : per_class) {
        const double wt = safe_div(static_cast<double>(m.support), static_cast<double>(total));
        w.precision += wt * m.precision;
        w.recall += wt * m.recall;
        w.f1 += wt * m.f1;
    }
    w.support = total;
    return w;
}

}  // namespace

ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int n_classes) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("classification_report: length mismatch");
    if (preds.empty()) throw std::invalid_argument("classification_report: empty input");

    ClassificationReport rep;
    rep.confusion.assign(n_classes, std::vector<long>(n_classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes || preds[i] < 0 || preds[i] >= n_classes)
            throw std::invalid_argument("classification_report: class index out of range");
        ++rep.confusion[labels[i]][preds[i]];
    }
    long tp_total = 0;
    for (int c = 0; c < n_classes; ++c) {
        long tp = rep.confusion[c][c], fp = 0, fn = 0;
        for (int o = 0; o < n_classes; ++o) {
            if (o != c) {
                fp += rep.confusion[o][c];
                fn += rep.confusion[c][o];
            }
        }
        tp_total += tp;
        rep.per_class.push_back(from_counts(tp, fp, fn));
    }
    rep.weighted = weighted_mean(rep.per_class);
    const double acc =
        static_cast<double>(tp_total) / static_cast<double>(preds.size());
    rep.micro = {acc, acc, acc, static_cast<long>(preds.size())};
    return rep;
}

ClassificationReport multilabel_report(const std::vector<std::vector<bool>>& preds,
                                       const std::vector<std::vector<bool>>& labels,
                                       int n_classes) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("multilabel_report: length mismatch");
    if (preds.empty()) throw std::invalid_argument("multilabel_report: empty input");

    ClassificationReport rep;
    long tp_all = 0, fp_all = 0, fn_all = 0;
    for (int c = 0; c < n_classes; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool p = preds[i][c], y = labels[i][c];
            if (p && y) ++tp;
            else if (p && !y) ++fp;
            else if (!p && y) ++fn;
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        rep.per_class.push_back(from_counts(tp, fp, fn));
    }
    rep.weighted = weighted_mean(rep.per_class);
    rep.micro = from_counts(tp_all, fp_all, fn_all);
    rep.micro.support = static_cast<long>(preds.size());
    return rep;
}

std::vector<PrPoint> pr_curve(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("pr_curve: length mismatch");
    long positives = 0;
    for (int y : labels) positives += (y != 0);
    if (positives == 0) throw std::invalid_argument("pr_curve: no positive labels");

    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<PrPoint> curve;
    for (double t : thresholds) {
        long tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (labels[i] != 0) ++tp;
                else ++fp;
            }
        }
        PrPoint pt;
        pt.threshold = t;
        pt.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
        pt.recall = static_cast<double>(tp) / static_cast<double>(positives);
        curve.push_back(pt);
    }
    return curve;
}

}  // namespace moeabsa
