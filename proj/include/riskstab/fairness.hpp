#pragma once

// Subgroup representation in top-K selections: composition proportions per
// demographic group and their max-minus-min ranges across the N runs.

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "riskstab/evaluation.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

enum class FairnessAttribute : std::uint8_t { gender, race };

inline const char* to_string(FairnessAttribute a) {
    return a == FairnessAttribute::gender ? "gender" : "race";
}

inline std::vector<std::string> attribute_groups(FairnessAttribute a) {
    if (a == FairnessAttribute::gender) return {"female", "male"};
    return {"white", "asian", "black", "hispanic", "native_american", "other"};
}

// Group proportions within a selection. Groups absent from the selection are
// reported as 0, so every group of the attribute appears in the result.
inline std::map<std::string, double> subgroup_composition(
    const std::vector<PatientId>& selection,
    const std::unordered_map<PatientId, DemographicAttributes>& attributes,
    FairnessAttribute attribute) {
    if (selection.empty())
        throw ConfigError("subgroup_composition: empty selection");
    std::map<std::string, double> counts;
    for (const auto& g : attribute_groups(attribute)) counts[g] = 0.0;
    for (const auto& id : selection) {
        auto it = attributes.find(id);
        if (it == attributes.end())
            throw DataError("subgroup_composition: unknown patient " + id);
        const char* group = attribute == FairnessAttribute::gender
                                ? to_string(it->second.gender)
                                : to_string(it->second.race);
        counts[group] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(selection.size());
    for (auto& [group, value] : counts) value *= inv;
    return counts;
}

struct RepresentationRange {
    FairnessAttribute attribute = FairnessAttribute::gender;
    std::string group;
    std::size_t k = 0;
    std::vector<double> per_run_proportions;  // month-averaged, in run order
    double range = 0.0;                       // max - min
};

inline std::unordered_map<PatientId, DemographicAttributes> collect_attributes(
    const Run& run) {
    std::unordered_map<PatientId, DemographicAttributes> attrs;
    for (const auto& rec : run.records) attrs.emplace(rec.patient, rec.attributes);
    return attrs;
}

// For each run: per-month top-K composition, averaged over months; the range
// per group is max - min of those N per-run averages. With per_month = true
// the range is instead taken per month and the largest monthly range is
// reported.
inline std::vector<RepresentationRange> representation_range(
    const RunSet& rs, std::size_t k, FairnessAttribute attribute,
    bool per_month = false) {
    if (rs.runs.empty()) throw ConfigError("representation_range: empty run set");
    validate_alignment(rs);
    const auto attrs = collect_attributes(rs.runs.front());
    const auto groups = attribute_groups(attribute);
    const auto month_groups = group_by_month(rs.runs.front());

    // proportions[run][month_pos][group_pos]
    std::vector<std::vector<std::map<std::string, double>>> proportions(
        rs.runs.size());
    for (std::size_t r = 0; r < rs.runs.size(); ++r) {
        for (const auto& [month, idx] : month_groups) {
            auto selection = top_k(rs.runs[r], MonthIndex{month}, k);
            proportions[r].push_back(
                subgroup_composition(selection, attrs, attribute));
        }
    }

    std::vector<RepresentationRange> out;
    for (const auto& group : groups) {
        RepresentationRange rr;
        rr.attribute = attribute;
        rr.group = group;
        rr.k = k;
        if (per_month) {
            double worst = 0.0;
            for (std::size_t m = 0; m < month_groups.size(); ++m) {
                double lo = 1.0, hi = 0.0;
                for (std::size_t r = 0; r < rs.runs.size(); ++r) {
                    const double p = proportions[r][m].at(group);
                    lo = std::min(lo, p);
                    hi = std::max(hi, p);
                }
                worst = std::max(worst, hi - lo);
            }
            rr.range = worst;
        } else {
            for (std::size_t r = 0; r < rs.runs.size(); ++r) {
                double sum = 0.0;
                for (const auto& by_group : proportions[r]) sum += by_group.at(group);
                rr.per_run_proportions.push_back(
                    sum / static_cast<double>(proportions[r].size()));
            }
            const auto [lo, hi] = std::minmax_element(rr.per_run_proportions.begin(),
                                                      rr.per_run_proportions.end());
            rr.range = *hi - *lo;
        }
        out.push_back(std::move(rr));
    }
    return out;
}

}  // namespace riskstab
