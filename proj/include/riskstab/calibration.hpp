#pragma once

// Isotonic-regression calibration via Pool Adjacent Violators. The fitted
// model is a right-continuous step function: each block's value applies from
// its smallest score up to (not including) the next block's smallest score,
// with constant extrapolation outside the fitted range.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "riskstab/runs_io.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

struct IsotonicModel {
    std::vector<double> knot_scores;  // strictly increasing block starts
    std::vector<double> knot_values;  // nondecreasing values in [0,1]
};

// Least-squares isotonic fit of `targets` against `scores`. Ties in score are
// pre-pooled into a single point carrying the mean target and multiplicity
// weight, then PAVA merges adjacent violating blocks.
inline IsotonicModel fit_isotonic(const std::vector<double>& scores,
                                  const std::vector<double>& targets) {
    if (scores.empty() || scores.size() != targets.size())
        throw ConfigError("fit_isotonic: need equal-length non-empty inputs");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    struct Block {
        double score;  // smallest raw score in the block
        double sum;    // weighted target sum
        double weight;
        double value() const { return sum / weight; }
    };
    std::vector<Block> blocks;
    std::size_t i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        double sum = 0.0, weight = 0.0;
        while (i < order.size() && scores[order[i]] == s) {
            sum += targets[order[i]];
            weight += 1.0;
            ++i;
        }
        blocks.push_back({s, sum, weight});
        // Merge backwards while the monotonicity constraint is violated.
        // Equal-value neighbors are left as separate blocks: the function is
        // unchanged and refitting a fitted function is then exactly stable.
        while (blocks.size() > 1 &&
               blocks[blocks.size() - 2].value() > blocks.back().value()) {
            Block top = blocks.back();
            blocks.pop_back();
            blocks.back().sum += top.sum;
            blocks.back().weight += top.weight;
        }
    }

    IsotonicModel model;
    model.knot_scores.reserve(blocks.size());
    model.knot_values.reserve(blocks.size());
    for (const Block& b : blocks) {
        model.knot_scores.push_back(b.score);
        model.knot_values.push_back(std::clamp(b.value(), 0.0, 1.0));
    }
    return model;
}

inline IsotonicModel fit_isotonic(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
    return fit_isotonic(scores, std::vector<double>(labels.begin(), labels.end()));
}

// Step-function evaluation: the value of the last knot whose score is <= the
// query, clamped to the first knot's value below the fitted range.
inline double apply_isotonic(const IsotonicModel& model, double score) {
    if (model.knot_scores.empty())
        throw ConfigError("apply_isotonic: unfitted model");
    auto it = std::upper_bound(model.knot_scores.begin(), model.knot_scores.end(),
                               score);
    if (it == model.knot_scores.begin()) return model.knot_values.front();
    return model.knot_values[static_cast<std::size_t>(
        std::distance(model.knot_scores.begin(), it) - 1)];
}

inline void save_isotonic(const IsotonicModel& model,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "knot_score,knot_value\n";
    for (std::size_t i = 0; i < model.knot_scores.size(); ++i)
        out << format_score(model.knot_scores[i]) << ','
            << format_score(model.knot_values[i]) << "\n";
}

inline IsotonicModel load_isotonic(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "knot_score,knot_value")
        throw ParseError(path.string() + ": bad calibrator header");
    IsotonicModel model;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 2) throw ParseError(where + ": expected 2 fields");
        model.knot_scores.push_back(parse_score(fields[0], where));
        model.knot_values.push_back(parse_score(fields[1], where));
    }
    return model;
}

}  // namespace riskstab
