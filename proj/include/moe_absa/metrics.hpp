#pragma once

#include <string>
#include <vector>

namespace moeabsa {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

struct ClassificationReport {
    std::vector<ClassMetrics> per_class;
    ClassMetrics weighted;
    ClassMetrics micro;
    std::vector<std::vector<long>> confusion;  // [true][pred], multiclass only
};

// single-label multiclass; zero-division convention: P or R with an empty
// denominator reports 0
ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int n_classes);

// multi-label binary-per-class (ACD); support = positive count per class
ClassificationReport multilabel_report(const std::vector<std::vector<bool>>& preds,
                                       const std::vector<std::vector<bool>>& labels,
                                       int n_classes);

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// one point per distinct score, thresholds descending; positive iff
// score >= threshold
std::vector<PrPoint> pr_curve(const std::vector<double>& scores,
                              const std::vector<int>& labels);

}  // namespace moeabsa
