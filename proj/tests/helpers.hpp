#pragma once

// Shared fixture builders for the unit suite.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "riskstab/rng.hpp"
#include "riskstab/types.hpp"

namespace helpers {

struct RecordSpec {
    std::string patient;
    int month = 0;
    double score = 0.0;
    int label = 0;
    riskstab::Gender gender = riskstab::Gender::female;
    riskstab::Race race = riskstab::Race::white;
    bool calibrated = true;  // store the score as calibrated_risk too
};

inline riskstab::Run make_run(const std::string& run_id,
                              const std::vector<RecordSpec>& specs) {
    riskstab::Run run;
    run.run_id = run_id;
    for (const auto& s : specs) {
        riskstab::PredictionRecord rec;
        rec.patient = s.patient;
        rec.month = riskstab::MonthIndex{s.month};
        rec.raw_score = s.score;
        if (s.calibrated)
            rec.calibrated_risk = std::clamp(s.score, 0.0, 1.0);
        rec.label = s.label;
        rec.attributes = {s.gender, s.race};
        run.records.push_back(std::move(rec));
    }
    std::sort(run.records.begin(), run.records.end(), riskstab::record_key_less);
    return run;
}

// A run over the given patients/months with scores drawn from a seeded
// stream; labels from a fixed 10% rate. All runs built with the same
// patients/months are aligned.
inline riskstab::Run make_random_run(const std::string& run_id, int n_patients,
                                     int n_months, std::uint64_t seed) {
    riskstab::Rng score_rng(riskstab::derive_seed(seed, "scores"));
    std::vector<RecordSpec> specs;
    for (int p = 0; p < n_patients; ++p) {
        riskstab::Rng patient_rng(riskstab::derive_seed(9000, "fixture", p));
        const auto gender = patient_rng.next_bernoulli(0.5) ? riskstab::Gender::female
                                                            : riskstab::Gender::male;
        const auto race = static_cast<riskstab::Race>(patient_rng.next_below(6));
        const int label_seed = patient_rng.next_bernoulli(0.1) ? 1 : 0;
        for (int m = 0; m < n_months; ++m) {
            char id[16];
            std::snprintf(id, sizeof(id), "P%04d", p);
            specs.push_back({id, m, score_rng.next_double(), label_seed, gender, race});
        }
    }
    return make_run(run_id, specs);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("riskstab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace helpers
