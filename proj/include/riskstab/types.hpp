#pragma once

// Core domain types shared by every module: patients, months, demographics,
// prediction records and aligned run sets.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace riskstab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using PatientId = std::string;

// Months are counted from 2009-01 (month index 0).
struct MonthIndex {
    int value = 0;

    auto operator<=>(const MonthIndex&) const = default;
};

inline constexpr int kEpochYear = 2009;
inline constexpr int kEpochMonth = 1;

// Parses "YYYY-MM" into a MonthIndex relative to 2009-01.
inline MonthIndex parse_month(const std::string& text) {
    if (text.size() != 7 || text[4] != '-')
        throw ParseError("bad month '" + text + "', expected YYYY-MM");
    for (int i : {0, 1, 2, 3, 5, 6})
        if (text[i] < '0' || text[i] > '9')
            throw ParseError("bad month '" + text + "', expected YYYY-MM");
    int year = std::stoi(text.substr(0, 4));
    int month = std::stoi(text.substr(5, 2));
    if (month < 1 || month > 12)
        throw ParseError("bad month '" + text + "': month out of range");
    int idx = (year - kEpochYear) * 12 + (month - kEpochMonth);
    if (idx < 0)
        throw ParseError("month '" + text + "' precedes epoch 2009-01");
    return MonthIndex{idx};
}

inline std::string format_month(MonthIndex m) {
    int year = kEpochYear + m.value / 12;
    int month = kEpochMonth + m.value % 12;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
    return buf;
}

enum class Gender : std::uint8_t { female, male };

enum class Race : std::uint8_t {
    white,
    asian,
    black,
    hispanic,
    native_american,
    other
};

inline constexpr int kNumGenders = 2;
inline constexpr int kNumRaces = 6;

inline const char* to_string(Gender g) {
    return g == Gender::female ? "female" : "male";
}

inline const char* to_string(Race r) {
    switch (r) {
        case Race::white: return "white";
        case Race::asian: return "asian";
        case Race::black: return "black";
        case Race::hispanic: return "hispanic";
        case Race::native_american: return "native_american";
        case Race::other: return "other";
    }
    return "other";
}

inline Gender parse_gender(const std::string& s) {
    if (s == "female") return Gender::female;
    if (s == "male") return Gender::male;
    throw ParseError("unknown gender '" + s + "'");
}

inline Race parse_race(const std::string& s) {
    if (s == "white") return Race::white;
    if (s == "asian") return Race::asian;
    if (s == "black") return Race::black;
    if (s == "hispanic") return Race::hispanic;
    if (s == "native_american") return Race::native_american;
    if (s == "other") return Race::other;
    throw ParseError("unknown race '" + s + "'");
}

struct DemographicAttributes {
    Gender gender = Gender::female;
    Race race = Race::other;

    bool operator==(const DemographicAttributes&) const = default;
};

struct PredictionRecord {
    PatientId patient;
    MonthIndex month;
    double raw_score = 0.0;
    std::optional<double> calibrated_risk;
    int label = 0;
    DemographicAttributes attributes;

    // Ranking score: calibrated risk when present, else raw score.
    double ranking_score() const {
        return calibrated_risk ? *calibrated_risk : raw_score;
    }
};

// One model run: predictions keyed by (patient, month), kept sorted by key so
// that iteration order (and hence any accumulation order) is deterministic.
struct Run {
    std::string run_id;
    std::vector<PredictionRecord> records;  // sorted by (patient, month)
};

inline bool record_key_less(const PredictionRecord& a, const PredictionRecord& b) {
    if (a.patient != b.patient) return a.patient < b.patient;
    return a.month < b.month;
}

// N runs over an identical (patient, month) key set. Alignment means records
// at the same index across runs refer to the same key with the same label and
// attributes; only scores differ.
struct RunSet {
    std::vector<Run> runs;

    std::size_t size() const { return runs.size(); }
};

}  // namespace riskstab
