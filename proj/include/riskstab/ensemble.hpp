#pragma once

// Ensemble mitigation: arithmetic-mean averaging of M member runs into one
// derived run, and partitioning an N*M member RunSet into N such ensembles.

#include <algorithm>
#include <string>
#include <vector>

#include "riskstab/calibration.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

enum class AverageField : std::uint8_t { calibrated_risk, raw_score };

struct EnsembleSpec {
    std::vector<std::string> member_run_ids;  // M >= 2 distinct run ids
    std::string output_run_id;
    AverageField average_field = AverageField::calibrated_risk;
};

// Per (patient, month), the output score is the arithmetic mean of the member
// scores on the chosen field; labels and attributes are copied through.
// Members are summed in run-id order so the result is independent of the
// order ids were listed in.
inline Run ensemble_mean(const RunSet& rs, const EnsembleSpec& spec) {
    if (spec.member_run_ids.empty())
        throw ConfigError("ensemble_mean: need at least one member run");
    validate_alignment(rs);

    std::vector<std::string> ids = spec.member_run_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ConfigError("ensemble_mean: duplicate member run id");
    std::vector<const Run*> members;
    for (const auto& id : ids) {
        auto it = std::find_if(rs.runs.begin(), rs.runs.end(),
                               [&](const Run& r) { return r.run_id == id; });
        if (it == rs.runs.end())
            throw ConfigError("ensemble_mean: member run '" + id +
                              "' not present in the run set");
        members.push_back(&*it);
    }

    Run out;
    out.run_id = spec.output_run_id;
    out.records = members.front()->records;
    const double m = static_cast<double>(members.size());
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        double sum = 0.0;
        for (const Run* m : members) {
            const PredictionRecord& rec = m->records[i];
            if (spec.average_field == AverageField::calibrated_risk) {
                if (!rec.calibrated_risk)
                    throw DataError("ensemble_mean: run '" + m->run_id +
                                    "' lacks calibrated_risk at (" + rec.patient +
                                    ", " + format_month(rec.month) + ")");
                sum += *rec.calibrated_risk;
            } else {
                sum += rec.raw_score;
            }
        }
        const double mean = sum / m;
        out.records[i].raw_score = mean;
        if (spec.average_field == AverageField::calibrated_risk)
            out.records[i].calibrated_risk = mean;
        else
            out.records[i].calibrated_risk.reset();
    }
    return out;
}

// Re-fits an isotonic calibrator on a run's own (score, label) pairs and
// replaces calibrated_risk with the refit output. Used by the
// `ensemble --recalibrate` path.
inline Run recalibrate_run(const Run& run) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(run.records.size());
    labels.reserve(run.records.size());
    for (const auto& rec : run.records) {
        scores.push_back(rec.ranking_score());
        labels.push_back(rec.label);
    }
    const IsotonicModel calibrator = fit_isotonic(scores, labels);
    Run out = run;
    for (std::size_t i = 0; i < out.records.size(); ++i)
        out.records[i].calibrated_risk = apply_isotonic(calibrator, scores[i]);
    return out;
}

// Splits an N*M member RunSet into N ensembles of M members each; blocks are
// consecutive in run-id order.
inline RunSet build_ensemble_runset(const RunSet& rs, std::size_t n, std::size_t m,
                                    AverageField field = AverageField::calibrated_risk) {
    if (n == 0 || m == 0)
        throw ConfigError("build_ensemble_runset: n and m must be positive");
    if (rs.runs.size() != n * m)
        throw ConfigError("build_ensemble_runset: expected " + std::to_string(n * m) +
                          " member runs, got " + std::to_string(rs.runs.size()));
    if (n == 1 && m == 1) return rs;  // passthrough
    validate_alignment(rs);

    std::vector<std::string> ids;
    for (const auto& run : rs.runs) ids.push_back(run.run_id);
    std::sort(ids.begin(), ids.end());

    RunSet out;
    for (std::size_t g = 0; g < n; ++g) {
        EnsembleSpec spec;
        spec.average_field = field;
        spec.output_run_id = "ensemble_" + std::to_string(g);
        spec.member_run_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(g * m),
                                   ids.begin() + static_cast<std::ptrdiff_t>((g + 1) * m));
        out.runs.push_back(ensemble_mean(rs, spec));
    }
    return out;
}

}  // namespace riskstab
