#pragma once

// Synthetic cohort generation. Produces a population with demographics, a
// monthly timeline of sparse multi-hot feature vectors (feature_dim slots
// replicated over n_time_buckets time buckets, plus two gender indicator
// slots), rare positive labels from a latent logistic risk, and a per-patient
// train/validation/test split.
//
// Everything is a pure function of (config, seed): each patient owns an
// independent random stream derived from (seed, "patient", index), so
// generation order does not matter.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "riskstab/rng.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

enum class Split : std::uint8_t { train, validation, test };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw ParseError("unknown split '" + s + "'");
}

struct CohortConfig {
    int n_patients = 20000;
    int n_months = 24;
    int feature_dim = 200;
    int n_time_buckets = 4;
    double target_prevalence = 0.0017;
    double female_fraction = 0.5366;
    // white, asian, black, hispanic, native_american, other
    std::array<double, kNumRaces> race_mix = {0.44,   0.1813, 0.0385,
                                              0.0202, 0.0112, 0.3088};
    double split_train = 0.8;
    double split_validation = 0.1;
    double split_test = 0.1;
    double mean_active_features = 20.0;
    // Latent weight placed on the gender indicator slots (+ on female,
    // - on male); makes risk group-correlated for the fairness analysis.
    double group_signal = 0.5;
    std::uint64_t seed = 1;

    int bucketed_slots() const { return feature_dim * n_time_buckets; }
    int total_slots() const { return bucketed_slots() + 2; }
    int female_slot() const { return bucketed_slots(); }
    int male_slot() const { return bucketed_slots() + 1; }

    void validate() const {
        if (n_patients <= 0) throw ConfigError("n_patients must be positive");
        if (n_months <= 0) throw ConfigError("n_months must be positive");
        if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
        if (n_time_buckets <= 0) throw ConfigError("n_time_buckets must be positive");
        if (target_prevalence <= 0.0 || target_prevalence >= 1.0)
            throw ConfigError("target_prevalence must be in (0,1)");
        if (female_fraction < 0.0 || female_fraction > 1.0)
            throw ConfigError("female_fraction must be in [0,1]");
        double race_sum = 0.0;
        for (double p : race_mix) {
            if (p < 0.0) throw ConfigError("race_mix entries must be non-negative");
            race_sum += p;
        }
        if (std::abs(race_sum - 1.0) > 1e-9)
            throw ConfigError("race_mix must sum to 1");
        double split_sum = split_train + split_validation + split_test;
        if (std::abs(split_sum - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
        if (mean_active_features <= 0.0)
            throw ConfigError("mean_active_features must be positive");
    }
};

struct PatientInfo {
    PatientId id;
    DemographicAttributes attributes;
    Split split = Split::train;
};

struct CohortExample {
    std::uint32_t patient_index = 0;
    MonthIndex month;
    int label = 0;
    std::vector<std::uint32_t> features;  // ascending active slot indices
};

struct Cohort {
    CohortConfig config;
    std::vector<PatientInfo> patients;
    std::vector<CohortExample> examples;  // ordered by (patient_index, month)
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// Finds b such that mean(sigmoid(s_i + b)) == target, by bisection; the mean
// is strictly increasing in b so the root is unique.
inline double solve_intercept(const std::vector<double>& latent_scores,
                              double target_prevalence) {
    if (latent_scores.empty()) throw ConfigError("solve_intercept: empty scores");
    if (target_prevalence <= 0.0 || target_prevalence >= 1.0)
        throw ConfigError("solve_intercept: target prevalence must be in (0,1)");
    auto mean_prob = [&](double b) {
        double sum = 0.0;
        for (double s : latent_scores) sum += sigmoid(s + b);
        return sum / static_cast<double>(latent_scores.size());
    };
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double p = mean_prob(mid);
        if (std::abs(p - target_prevalence) <= 1e-12) return mid;
        if (p < target_prevalence)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline PatientId make_patient_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%07d", index);
    return buf;
}

inline Cohort generate_cohort(const CohortConfig& config) {
    config.validate();
    Cohort cohort;
    cohort.config = config;
    cohort.patients.resize(config.n_patients);
    cohort.examples.reserve(static_cast<std::size_t>(config.n_patients) *
                            config.n_months);

    // One latent weight per slot, drawn once per cohort. Scaled by
    // 1/sqrt(mean active) so latent scores have O(1) spread. The gender
    // slots carry a fixed group-correlated weight instead.
    Rng wrng(derive_seed(config.seed, "weights"));
    std::vector<double> latent_weights(config.total_slots());
    double scale = 1.0 / std::sqrt(config.mean_active_features);
    for (double& w : latent_weights) w = wrng.next_normal() * scale;
    latent_weights[config.female_slot()] = config.group_signal;
    latent_weights[config.male_slot()] = -config.group_signal;

    std::array<double, kNumRaces> race_cum{};
    double acc = 0.0;
    for (int r = 0; r < kNumRaces; ++r) {
        acc += config.race_mix[r];
        race_cum[r] = acc;
    }

    std::vector<double> latent_scores;
    std::vector<double> label_uniforms;
    latent_scores.reserve(cohort.examples.capacity());
    label_uniforms.reserve(cohort.examples.capacity());

    for (int p = 0; p < config.n_patients; ++p) {
        Rng rng(derive_seed(config.seed, "patient", static_cast<std::uint64_t>(p)));
        PatientInfo& info = cohort.patients[p];
        info.id = make_patient_id(p);
        info.attributes.gender =
            rng.next_bernoulli(config.female_fraction) ? Gender::female : Gender::male;
        double u_race = rng.next_double();
        info.attributes.race = Race::other;
        for (int r = 0; r < kNumRaces; ++r) {
            if (u_race < race_cum[r]) {
                info.attributes.race = static_cast<Race>(r);
                break;
            }
        }
        double u_split = rng.next_double();
        if (u_split < config.split_train)
            info.split = Split::train;
        else if (u_split < config.split_train + config.split_validation)
            info.split = Split::validation;
        else
            info.split = Split::test;

        std::uint32_t gender_slot = static_cast<std::uint32_t>(
            info.attributes.gender == Gender::female ? config.female_slot()
                                                     : config.male_slot());
        for (int m = 0; m < config.n_months; ++m) {
            CohortExample ex;
            ex.patient_index = static_cast<std::uint32_t>(p);
            ex.month = MonthIndex{m};
            int n_active = rng.next_poisson(config.mean_active_features);
            std::set<std::uint32_t> active;
            while (static_cast<int>(active.size()) < n_active)
                active.insert(static_cast<std::uint32_t>(
                    rng.next_below(static_cast<std::uint64_t>(config.bucketed_slots()))));
            active.insert(gender_slot);
            ex.features.assign(active.begin(), active.end());

            double s = 0.0;
            for (std::uint32_t slot : ex.features) s += latent_weights[slot];
            latent_scores.push_back(s);
            label_uniforms.push_back(rng.next_double());
            cohort.examples.push_back(std::move(ex));
        }
    }

    double intercept = solve_intercept(latent_scores, config.target_prevalence);
    for (std::size_t i = 0; i < cohort.examples.size(); ++i) {
        double p = sigmoid(latent_scores[i] + intercept);
        cohort.examples[i].label = label_uniforms[i] < p ? 1 : 0;
    }
    return cohort;
}

// ---------------------------------------------------------------------------
// Persistence: a cohort directory holds patients.csv, examples.csv and
// meta.csv (the generating config as key=value pairs).

inline void save_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ofstream pf(dir / "patients.csv", std::ios::binary);
    if (!pf) throw DataError("cannot write " + (dir / "patients.csv").string());
    pf << "patient_id,gender,race,split\n";
    for (const auto& p : cohort.patients)
        pf << p.id << ',' << to_string(p.attributes.gender) << ','
           << to_string(p.attributes.race) << ',' << to_string(p.split) << "\n";

    std::ofstream ef(dir / "examples.csv", std::ios::binary);
    if (!ef) throw DataError("cannot write " + (dir / "examples.csv").string());
    ef << "patient_id,month,label,features\n";
    for (const auto& ex : cohort.examples) {
        ef << cohort.patients[ex.patient_index].id << ',' << format_month(ex.month)
           << ',' << ex.label << ',';
        for (std::size_t i = 0; i < ex.features.size(); ++i) {
            if (i) ef << ' ';
            ef << ex.features[i];
        }
        ef << "\n";
    }

    std::ofstream mf(dir / "meta.csv", std::ios::binary);
    if (!mf) throw DataError("cannot write " + (dir / "meta.csv").string());
    const CohortConfig& c = cohort.config;
    mf << "n_patients=" << c.n_patients << "\n";
    mf << "n_months=" << c.n_months << "\n";
    mf << "feature_dim=" << c.feature_dim << "\n";
    mf << "n_time_buckets=" << c.n_time_buckets << "\n";
    mf << "target_prevalence=" << format_score(c.target_prevalence) << "\n";
    mf << "female_fraction=" << format_score(c.female_fraction) << "\n";
    const char* race_keys[kNumRaces] = {"race_white",    "race_asian",
                                        "race_black",    "race_hispanic",
                                        "race_native_american", "race_other"};
    for (int r = 0; r < kNumRaces; ++r)
        mf << race_keys[r] << '=' << format_score(c.race_mix[r]) << "\n";
    mf << "split_train=" << format_score(c.split_train) << "\n";
    mf << "split_validation=" << format_score(c.split_validation) << "\n";
    mf << "split_test=" << format_score(c.split_test) << "\n";
    mf << "mean_active_features=" << format_score(c.mean_active_features) << "\n";
    mf << "group_signal=" << format_score(c.group_signal) << "\n";
    mf << "seed=" << c.seed << "\n";
}

// key=value config parser (also reads the meta.csv written above). Lines
// starting with '#' or ';' are comments.
inline CohortConfig parse_cohort_config_text(std::istream& in,
                                             const std::string& where) {
    CohortConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        if (line[start] == '#' || line[start] == ';' || line[start] == '[') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(where + ":" + std::to_string(line_no) +
                             ": expected key=value");
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t");
            std::size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "n_patients") c.n_patients = std::stoi(value);
            else if (key == "n_months") c.n_months = std::stoi(value);
            else if (key == "feature_dim") c.feature_dim = std::stoi(value);
            else if (key == "n_time_buckets") c.n_time_buckets = std::stoi(value);
            else if (key == "target_prevalence") c.target_prevalence = std::stod(value);
            else if (key == "female_fraction") c.female_fraction = std::stod(value);
            else if (key == "race_white") c.race_mix[0] = std::stod(value);
            else if (key == "race_asian") c.race_mix[1] = std::stod(value);
            else if (key == "race_black") c.race_mix[2] = std::stod(value);
            else if (key == "race_hispanic") c.race_mix[3] = std::stod(value);
            else if (key == "race_native_american") c.race_mix[4] = std::stod(value);
            else if (key == "race_other") c.race_mix[5] = std::stod(value);
            else if (key == "split_train") c.split_train = std::stod(value);
            else if (key == "split_validation") c.split_validation = std::stod(value);
            else if (key == "split_test") c.split_test = std::stod(value);
            else if (key == "mean_active_features")
                c.mean_active_features = std::stod(value);
            else if (key == "group_signal") c.group_signal = std::stod(value);
            else if (key == "seed") c.seed = std::stoull(value);
            else
                throw ConfigError(where + ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ParseError(where + ":" + std::to_string(line_no) +
                             ": bad value '" + value + "' for " + key);
        }
    }
    return c;
}

inline CohortConfig load_cohort_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    CohortConfig c = parse_cohort_config_text(in, path.string());
    c.validate();
    return c;
}

inline Cohort load_cohort(const std::filesystem::path& dir) {
    Cohort cohort;
    cohort.config = load_cohort_config(dir / "meta.csv");

    std::ifstream pf(dir / "patients.csv", std::ios::binary);
    if (!pf) throw DataError("cannot open " + (dir / "patients.csv").string());
    std::string line;
    std::getline(pf, line);
    std::unordered_map<std::string, std::uint32_t> index_of;
    while (std::getline(pf, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw ParseError((dir / "patients.csv").string() + ": bad row '" + line + "'");
        PatientInfo info;
        info.id = fields[0];
        info.attributes.gender = parse_gender(fields[1]);
        info.attributes.race = parse_race(fields[2]);
        info.split = parse_split(fields[3]);
        index_of[info.id] = static_cast<std::uint32_t>(cohort.patients.size());
        cohort.patients.push_back(std::move(info));
    }

    std::ifstream ef(dir / "examples.csv", std::ios::binary);
    if (!ef) throw DataError("cannot open " + (dir / "examples.csv").string());
    std::getline(ef, line);
    while (std::getline(ef, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw ParseError((dir / "examples.csv").string() + ": bad row '" + line + "'");
        CohortExample ex;
        auto it = index_of.find(fields[0]);
        if (it == index_of.end())
            throw DataError("examples.csv references unknown patient " + fields[0]);
        ex.patient_index = it->second;
        ex.month = parse_month(fields[1]);
        ex.label = std::stoi(fields[2]);
        std::istringstream fs(fields[3]);
        std::uint32_t slot;
        while (fs >> slot) ex.features.push_back(slot);
        cohort.examples.push_back(std::move(ex));
    }
    return cohort;
}

}  // namespace riskstab
