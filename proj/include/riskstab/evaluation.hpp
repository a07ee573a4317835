#pragma once

// Performance metrics and the monthly deployment simulator. ROC-AUC is the
// Mann-Whitney statistic (ties credited 0.5); PR-AUC is average precision
// with the rectangle rule, processing tied scores as one threshold group.
// Metrics that are undefined for a group (single class, no positives) are
// reported as absent and excluded from monthly averages.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "riskstab/types.hpp"

namespace riskstab {

inline std::optional<double> roc_auc(const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ConfigError("roc_auc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y != 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks for ties, then the Mann-Whitney U from the positive rank sum.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos -
                     0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline std::optional<double> pr_auc(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ConfigError("pr_auc: length mismatch");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y != 0;
    if (n_pos == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0)
                tp += 1.0;
            else
                fp += 1.0;
        }
        const double recall = tp / static_cast<double>(n_pos);
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct MonthMetrics {
    MonthIndex month;
    std::size_t n_examples = 0;
    std::size_t n_positives = 0;
    std::optional<double> roc_auc;
    std::optional<double> pr_auc;
};

struct MonthlyEvaluation {
    std::vector<MonthMetrics> months;  // ascending by month
    std::optional<double> mean_roc_auc;
    std::optional<double> mean_pr_auc;
    std::size_t roc_auc_months = 0;  // months contributing to each average
    std::size_t pr_auc_months = 0;
};

// Groups a run's records by month. Records are key-sorted, so a stable month
// grouping comes from a single pass.
inline std::map<int, std::vector<std::size_t>> group_by_month(const Run& run) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < run.records.size(); ++i)
        groups[run.records[i].month.value].push_back(i);
    return groups;
}

inline MonthlyEvaluation monthly_evaluate(const Run& run) {
    if (run.records.empty()) throw DataError("monthly_evaluate: empty run");
    MonthlyEvaluation out;
    double roc_sum = 0.0, pr_sum = 0.0;
    for (const auto& [month, idx] : group_by_month(run)) {
        MonthMetrics mm;
        mm.month = MonthIndex{month};
        mm.n_examples = idx.size();
        std::vector<double> scores;
        std::vector<int> labels;
        scores.reserve(idx.size());
        labels.reserve(idx.size());
        for (std::size_t i : idx) {
            scores.push_back(run.records[i].ranking_score());
            labels.push_back(run.records[i].label);
            mm.n_positives += run.records[i].label != 0;
        }
        mm.roc_auc = roc_auc(scores, labels);
        mm.pr_auc = pr_auc(scores, labels);
        if (mm.roc_auc) {
            roc_sum += *mm.roc_auc;
            ++out.roc_auc_months;
        }
        if (mm.pr_auc) {
            pr_sum += *mm.pr_auc;
            ++out.pr_auc_months;
        }
        out.months.push_back(std::move(mm));
    }
    if (out.roc_auc_months)
        out.mean_roc_auc = roc_sum / static_cast<double>(out.roc_auc_months);
    if (out.pr_auc_months)
        out.mean_pr_auc = pr_sum / static_cast<double>(out.pr_auc_months);
    return out;
}

// The K highest-risk patients for one month, ranked by calibrated risk when
// present (raw score otherwise), descending, ties broken by ascending
// PatientId. Returns fewer than k when the month has fewer patients, and an
// empty list for an unknown month.
inline std::vector<PatientId> top_k(const Run& run, MonthIndex month,
                                    std::size_t k) {
    if (k == 0) throw ConfigError("top_k: k must be positive");
    std::vector<std::pair<double, const PatientId*>> candidates;
    for (const auto& rec : run.records)
        if (rec.month == month)
            candidates.emplace_back(rec.ranking_score(), &rec.patient);
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second < *b.second;
    };
    if (candidates.size() > k) {
        std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                         candidates.end(), better);
        candidates.resize(k);
    }
    std::sort(candidates.begin(), candidates.end(), better);
    std::vector<PatientId> out;
    out.reserve(candidates.size());
    for (const auto& [score, id] : candidates) out.push_back(*id);
    return out;
}

// Aggregated (all-months-pooled) metrics for a run.
inline std::pair<std::optional<double>, std::optional<double>> aggregated_auc(
    const Run& run) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(run.records.size());
    labels.reserve(run.records.size());
    for (const auto& rec : run.records) {
        scores.push_back(rec.ranking_score());
        labels.push_back(rec.label);
    }
    return {roc_auc(scores, labels), pr_auc(scores, labels)};
}

}  // namespace riskstab
