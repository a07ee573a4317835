#pragma once

// Prediction file ingestion, cross-run validation and persistence.
//
// File format (one CSV per run):
//   run_id,patient_id,month,raw_score,calibrated_risk,label,gender,race
// UTF-8, '\n' line endings, mandatory header. calibrated_risk is the empty
// string when absent. Scores are written with 17 significant digits so a
// write/load round trip is lossless at binary64 precision.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "riskstab/types.hpp"

namespace riskstab {

inline std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_score(const std::string& field, const std::string& where) {
    double v;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw ParseError(where + ": bad numeric field '" + field + "'");
    if (!std::isfinite(v))
        throw ParseError(where + ": non-finite score '" + field + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline constexpr const char* kPredictionHeader =
    "run_id,patient_id,month,raw_score,calibrated_risk,label,gender,race";

// Loads a single run file. Rejects malformed rows (with line numbers) and
// duplicate (patient, month) keys. Records come back sorted by key.
inline Run load_run(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kPredictionHeader)
        throw ParseError(path.string() + ":1: bad header '" + line + "'");

    Run run;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        auto fields = split_csv_line(line);
        if (fields.size() != 8)
            throw ParseError(where + ": expected 8 fields, got " +
                             std::to_string(fields.size()));

        PredictionRecord rec;
        const std::string& run_id = fields[0];
        if (run.run_id.empty())
            run.run_id = run_id;
        else if (run.run_id != run_id)
            throw ParseError(where + ": mixed run ids '" + run.run_id + "' and '" +
                             run_id + "' in one file");
        rec.patient = fields[1];
        if (rec.patient.empty()) throw ParseError(where + ": empty patient id");
        rec.month = parse_month(fields[2]);
        rec.raw_score = parse_score(fields[3], where);
        if (!fields[4].empty()) {
            double risk = parse_score(fields[4], where);
            if (risk < 0.0 || risk > 1.0)
                throw ParseError(where + ": calibrated_risk " + fields[4] +
                                 " outside [0,1]");
            rec.calibrated_risk = risk;
        }
        if (fields[5] == "0")
            rec.label = 0;
        else if (fields[5] == "1")
            rec.label = 1;
        else
            throw ParseError(where + ": label must be 0 or 1, got '" + fields[5] + "'");
        rec.attributes.gender = parse_gender(fields[6]);
        rec.attributes.race = parse_race(fields[7]);
        run.records.push_back(std::move(rec));
    }

    std::sort(run.records.begin(), run.records.end(), record_key_less);
    for (std::size_t i = 1; i < run.records.size(); ++i) {
        const auto& a = run.records[i - 1];
        const auto& b = run.records[i];
        if (a.patient == b.patient && a.month == b.month)
            throw DataError(path.string() + ": duplicate key (" + a.patient + ", " +
                            format_month(a.month) + ")");
    }
    if (run.run_id.empty()) run.run_id = path.stem().string();
    return run;
}

// Checks the shared-key invariant: every run has the identical sorted
// (patient, month) key list, with identical labels and attributes per key.
inline void validate_alignment(const RunSet& rs) {
    if (rs.runs.empty()) throw DataError("run set is empty");
    const Run& first = rs.runs.front();
    for (std::size_t r = 1; r < rs.runs.size(); ++r) {
        const Run& other = rs.runs[r];
        if (other.records.size() != first.records.size() ||
            !std::equal(first.records.begin(), first.records.end(),
                        other.records.begin(),
                        [](const PredictionRecord& a, const PredictionRecord& b) {
                            return a.patient == b.patient && a.month == b.month;
                        })) {
            // Report the first few offending keys from the symmetric difference.
            std::ostringstream msg;
            msg << "runs '" << first.run_id << "' and '" << other.run_id
                << "' have mismatched (patient, month) key sets; first offenders:";
            int shown = 0;
            std::size_t i = 0, j = 0;
            auto key_str = [](const PredictionRecord& rec) {
                return "(" + rec.patient + ", " + format_month(rec.month) + ")";
            };
            while (shown < 10 &&
                   (i < first.records.size() || j < other.records.size())) {
                if (j >= other.records.size() ||
                    (i < first.records.size() &&
                     record_key_less(first.records[i], other.records[j]))) {
                    msg << " " << key_str(first.records[i++]);
                    ++shown;
                } else if (i >= first.records.size() ||
                           record_key_less(other.records[j], first.records[i])) {
                    msg << " " << key_str(other.records[j++]);
                    ++shown;
                } else {
                    ++i;
                    ++j;
                }
            }
            throw DataError(msg.str());
        }
        for (std::size_t k = 0; k < first.records.size(); ++k) {
            const auto& a = first.records[k];
            const auto& b = other.records[k];
            if (a.label != b.label)
                throw DataError("label disagreement at (" + a.patient + ", " +
                                format_month(a.month) + ") between runs '" +
                                first.run_id + "' and '" + other.run_id + "'");
            if (!(a.attributes == b.attributes))
                throw DataError("attribute disagreement at (" + a.patient + ", " +
                                format_month(a.month) + ") between runs '" +
                                first.run_id + "' and '" + other.run_id + "'");
        }
    }
}

inline RunSet load_runs(const std::vector<std::filesystem::path>& paths) {
    if (paths.size() < 2)
        throw DataError("a run set needs at least 2 prediction files");
    RunSet rs;
    rs.runs.reserve(paths.size());
    for (const auto& p : paths) rs.runs.push_back(load_run(p));
    validate_alignment(rs);
    return rs;
}

inline void write_run(const Run& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << kPredictionHeader << "\n";
    for (const auto& rec : run.records) {
        out << run.run_id << ',' << rec.patient << ',' << format_month(rec.month)
            << ',' << format_score(rec.raw_score) << ',';
        if (rec.calibrated_risk) out << format_score(*rec.calibrated_risk);
        out << ',' << rec.label << ',' << to_string(rec.attributes.gender) << ','
            << to_string(rec.attributes.race) << "\n";
    }
    if (!out) throw DataError("write failed for " + path.string());
}

// Writes one CSV per run into `dir`, named <run_id>.csv. Returns the paths in
// run order so the set can be reloaded with load_runs.
inline std::vector<std::filesystem::path> write_runs(
    const RunSet& rs, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& run : rs.runs) {
        auto p = dir / (run.run_id + ".csv");
        write_run(run, p);
        paths.push_back(p);
    }
    return paths;
}

}  // namespace riskstab
