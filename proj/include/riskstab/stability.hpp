#pragma once

// Stability metrics over an aligned RunSet: AUC dispersion across runs,
// top-K pairwise Jaccard curves J(K), and Kendall's tau in unweighted (tau-a)
// and hyperbolically weighted forms.
//
// tau is evaluated with per-element concordant/discordant partner counts
// obtained from two binary-indexed-tree sweeps (O(n log n)); the same counts
// serve both the unweighted statistic and the rank-weighted one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "riskstab/evaluation.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

// |a n b| / |a u b|, with the convention that two empty sets are identical.
inline double jaccard_pair(std::vector<PatientId> a, std::vector<PatientId> b) {
    if (a.empty() && b.empty()) return 1.0;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j])
            ++i;
        else if (b[j] < a[i])
            ++j;
        else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) /
                  static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double mean_of(const std::vector<double>& xs) {
    return xs.empty() ? 0.0
                      : std::accumulate(xs.begin(), xs.end(), 0.0) /
                            static_cast<double>(xs.size());
}

// Per-month average Jaccard over all C(N,2) pairs of top-K lists, reported as
// (mean over months, sample std over months).
struct JaccardResult {
    double mean = 0.0;
    double std_over_months = 0.0;
    std::vector<std::pair<MonthIndex, double>> per_month;
};

inline JaccardResult jaccard_topk(const RunSet& rs, std::size_t k) {
    if (rs.runs.size() < 2) throw ConfigError("jaccard_topk: need N >= 2 runs");
    validate_alignment(rs);
    JaccardResult result;
    std::vector<double> monthly;
    for (const auto& [month, idx] : group_by_month(rs.runs.front())) {
        std::vector<std::vector<PatientId>> selections;
        selections.reserve(rs.runs.size());
        for (const auto& run : rs.runs)
            selections.push_back(top_k(run, MonthIndex{month}, k));
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < selections.size(); ++i)
            for (std::size_t j = i + 1; j < selections.size(); ++j) {
                sum += jaccard_pair(selections[i], selections[j]);
                ++pairs;
            }
        const double value = sum / static_cast<double>(pairs);
        monthly.push_back(value);
        result.per_month.emplace_back(MonthIndex{month}, value);
    }
    result.mean = mean_of(monthly);
    result.std_over_months = sample_std(monthly);
    return result;
}

namespace detail {

class Bit {
public:
    explicit Bit(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // Count of inserted values with index < i.
    std::int64_t count_below(std::size_t i) const {
        std::int64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<std::int64_t> tree_;
};

// For each element, the number of concordant and discordant partners over
// all C(n,2) pairs (pairs tied in x or y count in neither).
inline void concordance_counts(const std::vector<double>& x,
                               const std::vector<double>& y,
                               std::vector<std::int64_t>& c,
                               std::vector<std::int64_t>& d) {
    const std::size_t n = x.size();
    c.assign(n, 0);
    d.assign(n, 0);

    // Dense y ranks.
    std::vector<std::size_t> yorder(n);
    std::iota(yorder.begin(), yorder.end(), 0);
    std::sort(yorder.begin(), yorder.end(),
              [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    std::vector<std::size_t> yrank(n);
    std::size_t next_rank = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && y[yorder[i]] != y[yorder[i - 1]]) ++next_rank;
        yrank[yorder[i]] = next_rank;
    }
    const std::size_t m = next_rank + 1;

    std::vector<std::size_t> xorder(n);
    std::iota(xorder.begin(), xorder.end(), 0);
    std::sort(xorder.begin(), xorder.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    // Left sweep: partners with strictly smaller x.
    {
        Bit bit(m);
        std::int64_t inserted = 0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && x[xorder[j]] == x[xorder[i]]) ++j;
            for (std::size_t k = i; k < j; ++k) {
                const std::size_t e = xorder[k];
                const std::int64_t below = bit.count_below(yrank[e]);
                const std::int64_t at_or_below = bit.count_below(yrank[e] + 1);
                c[e] += below;                    // smaller x, smaller y
                d[e] += inserted - at_or_below;   // smaller x, larger y
            }
            for (std::size_t k = i; k < j; ++k) bit.add(yrank[xorder[k]]);
            inserted += static_cast<std::int64_t>(j - i);
            i = j;
        }
    }
    // Right sweep: partners with strictly larger x.
    {
        Bit bit(m);
        std::int64_t inserted = 0;
        std::size_t i = n;
        while (i > 0) {
            std::size_t j = i;
            while (j > 0 && x[xorder[j - 1]] == x[xorder[i - 1]]) --j;
            for (std::size_t k = j; k < i; ++k) {
                const std::size_t e = xorder[k];
                const std::int64_t below = bit.count_below(yrank[e]);
                const std::int64_t at_or_below = bit.count_below(yrank[e] + 1);
                c[e] += inserted - at_or_below;   // larger x, larger y
                d[e] += below;                    // larger x, smaller y
            }
            for (std::size_t k = j; k < i; ++k) bit.add(yrank[xorder[k]]);
            inserted += static_cast<std::int64_t>(i - j);
            i = j;
        }
    }
}

}  // namespace detail

// Kendall's tau-a: (|C| - |D|) / C(n,2); pairs tied in either list count in
// neither C nor D.
inline double kendall_tau(const std::vector<double>& x,
                          const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigError("kendall_tau: length mismatch");
    if (x.size() < 2) throw ConfigError("kendall_tau: need n >= 2");
    std::vector<std::int64_t> c, d;
    detail::concordance_counts(x, y, c, d);
    const double C = 0.5 * static_cast<double>(std::accumulate(c.begin(), c.end(),
                                                               std::int64_t{0}));
    const double D = 0.5 * static_cast<double>(std::accumulate(d.begin(), d.end(),
                                                               std::int64_t{0}));
    const double n = static_cast<double>(x.size());
    return (C - D) / (0.5 * n * (n - 1.0));
}

// 0-based descending ranks by score; ties broken by the caller-supplied keys
// (element index when keys are absent) so every element gets a distinct rank.
template <typename Key>
inline std::vector<std::size_t> dense_ranks_desc(const std::vector<double>& scores,
                                                 const std::vector<Key>& keys) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return keys[a] < keys[b];
    });
    std::vector<std::size_t> rank(scores.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    return rank;
}

// Weighted Kendall's tau with hyperbolic weights: a pair (i, j) carries
// weight 1/(r_i+1) + 1/(r_j+1). The statistic is evaluated once with ranks
// taken from x and once from y, then averaged.
template <typename Key>
inline double weighted_kendall_tau(const std::vector<double>& x,
                                   const std::vector<double>& y,
                                   const std::vector<Key>& tiebreak_keys) {
    if (x.size() != y.size() || x.size() != tiebreak_keys.size())
        throw ConfigError("weighted_kendall_tau: length mismatch");
    if (x.size() < 2) throw ConfigError("weighted_kendall_tau: need n >= 2");
    const std::size_t n = x.size();

    std::vector<std::int64_t> c, d;
    detail::concordance_counts(x, y, c, d);

    auto one_sided = [&](const std::vector<double>& rank_source) {
        const auto ranks = dense_ranks_desc(rank_source, tiebreak_keys);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = 1.0 / static_cast<double>(ranks[i] + 1);
            num += u * static_cast<double>(c[i] - d[i]);
            den += u * static_cast<double>(n - 1);
        }
        return num / den;
    };
    return 0.5 * (one_sided(x) + one_sided(y));
}

inline double weighted_kendall_tau(const std::vector<double>& x,
                                   const std::vector<double>& y) {
    std::vector<std::size_t> keys(x.size());
    std::iota(keys.begin(), keys.end(), 0);
    return weighted_kendall_tau(x, y, keys);
}

// ---------------------------------------------------------------------------
// RunSet-level statistics.

struct AucDispersion {
    double roc_auc_std = 0.0;
    double pr_auc_std = 0.0;
    double roc_auc_mean = 0.0;
    double pr_auc_mean = 0.0;
    std::vector<std::string> excluded_runs;  // runs with an undefined AUC
};

inline AucDispersion auc_dispersion(const RunSet& rs) {
    if (rs.runs.size() < 2) throw ConfigError("auc_dispersion: need N >= 2 runs");
    std::vector<double> rocs, prs;
    AucDispersion out;
    for (const auto& run : rs.runs) {
        auto [roc, pr] = aggregated_auc(run);
        if (!roc || !pr) {
            out.excluded_runs.push_back(run.run_id);
            continue;
        }
        rocs.push_back(*roc);
        prs.push_back(*pr);
    }
    if (rocs.size() < 2)
        throw DataError("auc_dispersion: fewer than 2 runs with defined AUCs");
    out.roc_auc_mean = mean_of(rocs);
    out.pr_auc_mean = mean_of(prs);
    out.roc_auc_std = sample_std(rocs);
    out.pr_auc_std = sample_std(prs);
    return out;
}

struct TauSummary {
    double mean = 0.0;
    double std_over_pairs = 0.0;
    std::vector<double> per_pair;  // ordered by (i, j), i < j
};

// Scores for tau follow the same ranking rule as top_k: calibrated risk when
// present, raw score otherwise.
inline std::pair<TauSummary, TauSummary> tau_over_pairs(const RunSet& rs) {
    if (rs.runs.size() < 2) throw ConfigError("tau_over_pairs: need N >= 2 runs");
    validate_alignment(rs);
    const std::size_t n_rec = rs.runs.front().records.size();
    std::vector<std::string> keys;
    keys.reserve(n_rec);
    for (const auto& rec : rs.runs.front().records)
        keys.push_back(rec.patient + "\x1f" + format_month(rec.month));
    std::vector<std::vector<double>> scores(rs.runs.size());
    for (std::size_t r = 0; r < rs.runs.size(); ++r) {
        scores[r].reserve(n_rec);
        for (const auto& rec : rs.runs[r].records)
            scores[r].push_back(rec.ranking_score());
    }
    TauSummary unweighted, weighted;
    for (std::size_t i = 0; i < rs.runs.size(); ++i)
        for (std::size_t j = i + 1; j < rs.runs.size(); ++j) {
            unweighted.per_pair.push_back(kendall_tau(scores[i], scores[j]));
            weighted.per_pair.push_back(
                weighted_kendall_tau(scores[i], scores[j], keys));
        }
    unweighted.mean = mean_of(unweighted.per_pair);
    unweighted.std_over_pairs = sample_std(unweighted.per_pair);
    weighted.mean = mean_of(weighted.per_pair);
    weighted.std_over_pairs = sample_std(weighted.per_pair);
    return {unweighted, weighted};
}

// Per-month variant of the pairwise tau (mean over pairs within each month,
// then summarized over months).
inline std::pair<TauSummary, TauSummary> tau_per_month(const RunSet& rs) {
    if (rs.runs.size() < 2) throw ConfigError("tau_per_month: need N >= 2 runs");
    validate_alignment(rs);
    TauSummary unweighted, weighted;
    for (const auto& [month, idx] : group_by_month(rs.runs.front())) {
        if (idx.size() < 2) continue;
        std::vector<std::string> keys;
        keys.reserve(idx.size());
        for (std::size_t i : idx) keys.push_back(rs.runs.front().records[i].patient);
        std::vector<std::vector<double>> scores(rs.runs.size());
        for (std::size_t r = 0; r < rs.runs.size(); ++r)
            for (std::size_t i : idx)
                scores[r].push_back(rs.runs[r].records[i].ranking_score());
        double u_sum = 0.0, w_sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < rs.runs.size(); ++i)
            for (std::size_t j = i + 1; j < rs.runs.size(); ++j) {
                u_sum += kendall_tau(scores[i], scores[j]);
                w_sum += weighted_kendall_tau(scores[i], scores[j], keys);
                ++pairs;
            }
        unweighted.per_pair.push_back(u_sum / static_cast<double>(pairs));
        weighted.per_pair.push_back(w_sum / static_cast<double>(pairs));
    }
    unweighted.mean = mean_of(unweighted.per_pair);
    unweighted.std_over_pairs = sample_std(unweighted.per_pair);
    weighted.mean = mean_of(weighted.per_pair);
    weighted.std_over_pairs = sample_std(weighted.per_pair);
    return {unweighted, weighted};
}

struct StabilityReport {
    AucDispersion auc;
    std::map<std::size_t, JaccardResult> jaccard_curve;  // K -> J(K)
    TauSummary tau_unweighted;
    TauSummary tau_weighted;
};

inline StabilityReport compute_stability(const RunSet& rs,
                                         const std::vector<std::size_t>& k_grid,
                                         bool per_month_tau = false) {
    StabilityReport report;
    report.auc = auc_dispersion(rs);
    for (std::size_t k : k_grid) report.jaccard_curve[k] = jaccard_topk(rs, k);
    auto [u, w] = per_month_tau ? tau_per_month(rs) : tau_over_pairs(rs);
    report.tau_unweighted = std::move(u);
    report.tau_weighted = std::move(w);
    return report;
}

}  // namespace riskstab
