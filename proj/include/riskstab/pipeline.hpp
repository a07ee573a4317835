#pragma once

// End-to-end orchestration: synth -> train x N -> calibrate -> evaluate ->
// stability -> ensemble -> fairness, with every intermediate artifact
// materialized to disk and a single report.json at the end.
//
// All randomness is derived from one root seed: the cohort uses
// derive_seed(root, "cohort") and run r of stage S uses
// derive_seed(root, S, r), so the whole pipeline is a pure function of its
// config.

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "riskstab/calibration.hpp"
#include "riskstab/cohort.hpp"
#include "riskstab/ensemble.hpp"
#include "riskstab/evaluation.hpp"
#include "riskstab/fairness.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/stability.hpp"
#include "riskstab/trainer.hpp"

namespace riskstab {

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error("stage '" + stage_name + "' failed: " + what),
          stage(std::move(stage_name)) {}
};

struct PipelineConfig {
    CohortConfig cohort;
    TrainConfig train;
    ModelKind model = ModelKind::mlp;
    int n_runs = 10;
    int ensemble_groups = 0;   // 0 disables the ensemble stage
    int ensemble_members = 0;
    bool recalibrate_ensembles = false;
    std::vector<std::size_t> k_grid = {10, 30, 100, 300, 1000};
    int jobs = 1;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;

    void validate() const {
        cohort.validate();
        train.validate();
        if (n_runs < 2) throw ConfigError("n_runs must be at least 2");
        if (k_grid.empty()) throw ConfigError("k_grid must be non-empty");
        std::size_t prev = 0;
        for (std::size_t k : k_grid) {
            if (k == 0) throw ConfigError("k_grid entries must be positive");
            if (k <= prev && prev != 0)
                throw ConfigError("k_grid must be strictly ascending");
            prev = k;
        }
        if ((ensemble_groups == 0) != (ensemble_members == 0))
            throw ConfigError("ensemble groups and members must be set together");
        if (ensemble_groups < 0 || ensemble_members < 0)
            throw ConfigError("ensemble sizes must be non-negative");
        if (jobs < 1) throw ConfigError("jobs must be at least 1");
        if (out_dir.empty()) throw ConfigError("output directory is required");
    }
};

namespace detail {

inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::min<int>(jobs, static_cast<int>(n));
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Test-split example keys used to build prediction records.
struct PredictionFrame {
    std::vector<PatientId> patients;
    std::vector<MonthIndex> months;
    std::vector<int> labels;
    std::vector<DemographicAttributes> attributes;
    Dataset features;  // aligned with the vectors above
};

inline PredictionFrame make_frame(const Cohort& cohort, Split split) {
    PredictionFrame f;
    f.features.input_dim = cohort.config.total_slots();
    for (const auto& ex : cohort.examples) {
        const auto& p = cohort.patients[ex.patient_index];
        if (p.split != split) continue;
        f.patients.push_back(p.id);
        f.months.push_back(ex.month);
        f.labels.push_back(ex.label);
        f.attributes.push_back(p.attributes);
        f.features.features.push_back(ex.features);
        f.features.labels.push_back(ex.label);
    }
    return f;
}

// Trains one seeded model, fits its calibrator on the validation split and
// emits calibrated test predictions as a Run.
inline Run train_and_predict(ModelKind kind, const Dataset& train_ds,
                             const PredictionFrame& validation,
                             const PredictionFrame& test,
                             const TrainConfig& base_config, std::uint64_t seed,
                             const std::string& run_id,
                             const std::filesystem::path& model_path,
                             const std::filesystem::path& calibrator_path) {
    TrainConfig config = base_config;
    config.seed = seed;
    Model model = kind == ModelKind::logistic
                      ? train_logistic(train_ds, validation.features, config)
                      : train_mlp(train_ds, validation.features, config);
    if (!model_path.empty()) save_model(model, model_path);

    const auto validation_scores = predict(model, validation.features);
    IsotonicModel calibrator = fit_isotonic(validation_scores, validation.labels);
    if (!calibrator_path.empty()) save_isotonic(calibrator, calibrator_path);

    const auto test_scores = predict(model, test.features);
    Run run;
    run.run_id = run_id;
    run.records.reserve(test.patients.size());
    for (std::size_t i = 0; i < test.patients.size(); ++i) {
        PredictionRecord rec;
        rec.patient = test.patients[i];
        rec.month = test.months[i];
        rec.raw_score = test_scores[i];
        rec.calibrated_risk = apply_isotonic(calibrator, test_scores[i]);
        rec.label = test.labels[i];
        rec.attributes = test.attributes[i];
        run.records.push_back(std::move(rec));
    }
    std::sort(run.records.begin(), run.records.end(), record_key_less);
    return run;
}

// Trains `n_runs` seeded models of one family and returns the aligned RunSet.
// Runs execute concurrently up to `jobs`; the result does not depend on
// scheduling because each run only touches its own slot.
inline RunSet train_family(ModelKind kind, const Cohort& cohort,
                           const Dataset& train_ds, const PredictionFrame& validation,
                           const PredictionFrame& test, const TrainConfig& base_config,
                           std::uint64_t root_seed, const std::string& stage,
                           int n_runs, int jobs, const std::filesystem::path& out_dir) {
    (void)cohort;
    std::filesystem::create_directories(out_dir / "models");
    std::filesystem::create_directories(out_dir / "calibrators");
    std::filesystem::create_directories(out_dir / "runs");
    RunSet rs;
    rs.runs.resize(static_cast<std::size_t>(n_runs));
    detail::parallel_for(static_cast<std::size_t>(n_runs), jobs, [&](std::size_t r) {
        char suffix[8];
        std::snprintf(suffix, sizeof(suffix), "%02zu", r);
        const std::string run_id = stage + "_" + suffix;
        rs.runs[r] = train_and_predict(
            kind, train_ds, validation, test, base_config,
            derive_seed(root_seed, stage, r), run_id,
            out_dir / "models" / (run_id + ".model"),
            out_dir / "calibrators" / (run_id + ".csv"));
        write_run(rs.runs[r], out_dir / "runs" / (run_id + ".csv"));
    });
    validate_alignment(rs);
    return rs;
}

// ---------------------------------------------------------------------------
// JSON report assembly. nlohmann::json keeps keys sorted, so serialized
// reports are byte-stable for identical inputs.

inline nlohmann::json jaccard_to_json(const JaccardResult& j) {
    return {{"mean", j.mean}, {"std_over_months", j.std_over_months}};
}

inline nlohmann::json stability_to_json(const StabilityReport& report) {
    nlohmann::json curve = nlohmann::json::object();
    for (const auto& [k, jr] : report.jaccard_curve)
        curve[std::to_string(k)] = jaccard_to_json(jr);
    return {
        {"roc_auc_mean", report.auc.roc_auc_mean},
        {"roc_auc_std", report.auc.roc_auc_std},
        {"pr_auc_mean", report.auc.pr_auc_mean},
        {"pr_auc_std", report.auc.pr_auc_std},
        {"excluded_runs", report.auc.excluded_runs},
        {"jaccard", curve},
        {"tau_unweighted",
         {{"mean", report.tau_unweighted.mean},
          {"std_over_pairs", report.tau_unweighted.std_over_pairs}}},
        {"tau_weighted",
         {{"mean", report.tau_weighted.mean},
          {"std_over_pairs", report.tau_weighted.std_over_pairs}}},
    };
}

inline nlohmann::json evaluation_to_json(const Run& run) {
    auto [roc, pr] = aggregated_auc(run);
    const auto monthly = monthly_evaluate(run);
    nlohmann::json agg = nlohmann::json::object();
    agg["roc_auc"] = roc ? nlohmann::json(*roc) : nlohmann::json();
    agg["pr_auc"] = pr ? nlohmann::json(*pr) : nlohmann::json();
    nlohmann::json months = nlohmann::json::array();
    for (const auto& mm : monthly.months) {
        nlohmann::json m = {{"month", format_month(mm.month)},
                            {"n_examples", mm.n_examples},
                            {"n_positives", mm.n_positives}};
        m["roc_auc"] = mm.roc_auc ? nlohmann::json(*mm.roc_auc) : nlohmann::json();
        m["pr_auc"] = mm.pr_auc ? nlohmann::json(*mm.pr_auc) : nlohmann::json();
        months.push_back(std::move(m));
    }
    nlohmann::json mj = nlohmann::json::object();
    mj["mean_roc_auc"] =
        monthly.mean_roc_auc ? nlohmann::json(*monthly.mean_roc_auc) : nlohmann::json();
    mj["mean_pr_auc"] =
        monthly.mean_pr_auc ? nlohmann::json(*monthly.mean_pr_auc) : nlohmann::json();
    mj["roc_auc_months"] = monthly.roc_auc_months;
    mj["pr_auc_months"] = monthly.pr_auc_months;
    mj["months"] = std::move(months);
    return {{"run_id", run.run_id}, {"aggregated", agg}, {"monthly", mj}};
}

inline nlohmann::json fairness_to_json(const std::vector<RepresentationRange>& rrs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& rr : rrs)
        out.push_back({{"attribute", to_string(rr.attribute)},
                       {"group", rr.group},
                       {"k", rr.k},
                       {"per_run_proportions", rr.per_run_proportions},
                       {"range", rr.range}});
    return out;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// J(K) curve plot data (one row per family/K).
inline void append_jaccard_csv(std::ostream& out, const std::string& family,
                               const StabilityReport& report) {
    for (const auto& [k, jr] : report.jaccard_curve)
        out << family << ',' << k << ',' << format_score(jr.mean) << ','
            << format_score(jr.std_over_months) << "\n";
}

// Pairwise calibrated-risk scatter data for the first run pair.
inline void write_scatter_csv(const RunSet& rs, const std::filesystem::path& path) {
    if (rs.runs.size() < 2) return;
    std::ofstream out(path, std::ios::binary);
    out << "patient_id,month,risk_a,risk_b\n";
    const Run& a = rs.runs[0];
    const Run& b = rs.runs[1];
    for (std::size_t i = 0; i < a.records.size(); ++i)
        out << a.records[i].patient << ',' << format_month(a.records[i].month) << ','
            << format_score(a.records[i].ranking_score()) << ','
            << format_score(b.records[i].ranking_score()) << "\n";
}

// Per-group min/max composition vs K (one row per family/attribute/group/K).
inline void append_fairness_csv(std::ostream& out, const std::string& family,
                                const std::vector<RepresentationRange>& rrs) {
    for (const auto& rr : rrs) {
        double lo = 0.0, hi = 0.0;
        if (!rr.per_run_proportions.empty()) {
            const auto [mn, mx] = std::minmax_element(rr.per_run_proportions.begin(),
                                                      rr.per_run_proportions.end());
            lo = *mn;
            hi = *mx;
        }
        out << family << ',' << to_string(rr.attribute) << ',' << rr.group << ','
            << rr.k << ',' << format_score(lo) << ',' << format_score(hi) << ','
            << format_score(rr.range) << "\n";
    }
}

// Stability + fairness + per-run evaluation for one model family.
inline nlohmann::json analyze_family(const RunSet& rs,
                                     const std::vector<std::size_t>& k_grid,
                                     std::vector<RepresentationRange>& fairness_out,
                                     StabilityReport& stability_out) {
    stability_out = compute_stability(rs, k_grid);
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : rs.runs) runs.push_back(evaluation_to_json(run));
    fairness_out.clear();
    nlohmann::json fairness = nlohmann::json::object();
    for (auto attribute : {FairnessAttribute::gender, FairnessAttribute::race}) {
        nlohmann::json per_k = nlohmann::json::object();
        for (std::size_t k : k_grid) {
            auto rrs = representation_range(rs, k, attribute);
            per_k[std::to_string(k)] = fairness_to_json(rrs);
            fairness_out.insert(fairness_out.end(), rrs.begin(), rrs.end());
        }
        fairness[to_string(attribute)] = std::move(per_k);
    }
    return {{"runs", runs},
            {"stability", stability_to_json(stability_out)},
            {"fairness", fairness}};
}

inline nlohmann::json pipeline_config_to_json(const PipelineConfig& c) {
    return {{"model", c.model == ModelKind::logistic ? "lr" : "mlp"},
            {"n_runs", c.n_runs},
            {"ensemble_groups", c.ensemble_groups},
            {"ensemble_members", c.ensemble_members},
            {"k_grid", c.k_grid},
            {"seed", c.seed},
            {"cohort",
             {{"n_patients", c.cohort.n_patients},
              {"n_months", c.cohort.n_months},
              {"feature_dim", c.cohort.feature_dim},
              {"n_time_buckets", c.cohort.n_time_buckets},
              {"target_prevalence", c.cohort.target_prevalence},
              {"group_signal", c.cohort.group_signal}}},
            {"train",
             {{"hidden", c.train.hidden},
              {"dropout_rate", c.train.dropout_rate},
              {"batch_size", c.train.batch_size},
              {"learning_rate", c.train.learning_rate},
              {"lr_decay", c.train.lr_decay},
              {"l1", c.train.l1},
              {"l2", c.train.l2},
              {"epochs", c.train.epochs},
              {"optimizer", c.train.optimizer == Optimizer::adam ? "adam" : "sgd"}}}};
}

struct PipelineResult {
    StabilityReport stability;
    StabilityReport ensemble_stability;  // populated when the stage ran
    bool has_ensemble = false;
    nlohmann::json report;
};

// Runs the full single-family pipeline (plus the optional ensemble stage) and
// writes report.json and plot CSVs under config.out_dir. On failure a FAILED
// marker naming the stage is left next to whatever artifacts completed.
inline PipelineResult run_pipeline(const PipelineConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    std::string stage = "config";
    try {
        PipelineResult result;
        const std::string family =
            config.model == ModelKind::logistic ? "lr" : "mlp";

        stage = "synth";
        CohortConfig cohort_config = config.cohort;
        cohort_config.seed = derive_seed(config.seed, "cohort");
        const Cohort cohort = generate_cohort(cohort_config);
        save_cohort(cohort, config.out_dir / "cohort");

        stage = "train";
        const Dataset train_ds = make_dataset(cohort, Split::train);
        const PredictionFrame validation = make_frame(cohort, Split::validation);
        const PredictionFrame test = make_frame(cohort, Split::test);
        const bool with_ensemble = config.ensemble_groups > 0;
        const int n_members =
            with_ensemble ? config.ensemble_groups * config.ensemble_members
                          : config.n_runs;
        RunSet members =
            train_family(config.model, cohort, train_ds, validation, test,
                         config.train, config.seed, "train-" + family, n_members,
                         config.jobs, config.out_dir);
        RunSet singles;
        singles.runs.assign(members.runs.begin(),
                            members.runs.begin() + std::min<std::ptrdiff_t>(
                                                       config.n_runs,
                                                       static_cast<std::ptrdiff_t>(
                                                           members.runs.size())));

        stage = "stability";
        nlohmann::json report;
        report["schema_version"] = 1;
        report["config"] = pipeline_config_to_json(config);
        std::vector<RepresentationRange> fairness;
        report["families"] = nlohmann::json::object();
        report["families"][family] =
            analyze_family(singles, config.k_grid, fairness, result.stability);

        if (with_ensemble) {
            stage = "ensemble";
            RunSet ensembles = build_ensemble_runset(
                members, static_cast<std::size_t>(config.ensemble_groups),
                static_cast<std::size_t>(config.ensemble_members));
            if (config.recalibrate_ensembles)
                for (auto& run : ensembles.runs) run = recalibrate_run(run);
            std::filesystem::create_directories(config.out_dir / "ensemble_runs");
            write_runs(ensembles, config.out_dir / "ensemble_runs");
            std::vector<RepresentationRange> ensemble_fairness;
            report["families"]["ensemble_" + family] = analyze_family(
                ensembles, config.k_grid, ensemble_fairness,
                result.ensemble_stability);
            result.has_ensemble = true;
        }

        stage = "report";
        {
            std::ofstream jc(config.out_dir / "jaccard_curve.csv", std::ios::binary);
            jc << "family,k,mean,std_over_months\n";
            append_jaccard_csv(jc, family, result.stability);
            if (result.has_ensemble)
                append_jaccard_csv(jc, "ensemble_" + family, result.ensemble_stability);
        }
        write_scatter_csv(singles, config.out_dir / "pairwise_risk_scatter.csv");
        {
            std::ofstream fc(config.out_dir / "fairness_composition.csv",
                             std::ios::binary);
            fc << "family,attribute,group,k,min_proportion,max_proportion,range\n";
            append_fairness_csv(fc, family, fairness);
        }
        write_json(config.out_dir / "report.json", report);
        result.report = std::move(report);
        return result;
    } catch (const std::exception& e) {
        std::error_code ec;
        std::filesystem::create_directories(config.out_dir, ec);
        std::ofstream marker(config.out_dir / "FAILED");
        marker << stage << "\n" << e.what() << "\n";
        if (dynamic_cast<const ConfigError*>(&e) ||
            dynamic_cast<const DataError*>(&e) ||
            dynamic_cast<const ParseError*>(&e))
            throw;
        throw StageError(stage, e.what());
    }
}

// Side-by-side LR vs MLP vs ensembled-MLP comparison on the identical cohort
// and derived seeds. Families that fail to train are reported with a failure
// note instead of aborting the whole comparison.
inline nlohmann::json compare_architectures(const PipelineConfig& config) {
    PipelineConfig c = config;
    if (c.ensemble_groups == 0) {
        c.ensemble_groups = c.n_runs;
        c.ensemble_members = c.n_runs;
    }
    c.validate();
    std::filesystem::create_directories(c.out_dir);

    CohortConfig cohort_config = c.cohort;
    cohort_config.seed = derive_seed(c.seed, "cohort");
    const Cohort cohort = generate_cohort(cohort_config);
    save_cohort(cohort, c.out_dir / "cohort");

    const Dataset train_ds = make_dataset(cohort, Split::train);
    const PredictionFrame validation = make_frame(cohort, Split::validation);
    const PredictionFrame test = make_frame(cohort, Split::test);

    nlohmann::json report;
    report["schema_version"] = 1;
    report["config"] = pipeline_config_to_json(c);
    report["families"] = nlohmann::json::object();

    std::ofstream jc(c.out_dir / "jaccard_curve.csv", std::ios::binary);
    jc << "family,k,mean,std_over_months\n";
    std::ofstream fc(c.out_dir / "fairness_composition.csv", std::ios::binary);
    fc << "family,attribute,group,k,min_proportion,max_proportion,range\n";

    // LR family.
    try {
        RunSet lr = train_family(ModelKind::logistic, cohort, train_ds, validation,
                                 test, c.train, c.seed, "train-lr", c.n_runs,
                                 c.jobs, c.out_dir);
        std::vector<RepresentationRange> fairness;
        StabilityReport stability;
        report["families"]["lr"] = analyze_family(lr, c.k_grid, fairness, stability);
        append_jaccard_csv(jc, "lr", stability);
        append_fairness_csv(fc, "lr", fairness);
    } catch (const std::exception& e) {
        report["families"]["lr"] = {{"error", e.what()}};
    }

    // MLP members double as the single-MLP runs (first n_runs of them).
    try {
        RunSet members = train_family(
            ModelKind::mlp, cohort, train_ds, validation, test, c.train, c.seed,
            "train-mlp", c.ensemble_groups * c.ensemble_members, c.jobs, c.out_dir);
        RunSet singles;
        singles.runs.assign(members.runs.begin(), members.runs.begin() + c.n_runs);
        {
            std::vector<RepresentationRange> fairness;
            StabilityReport stability;
            report["families"]["mlp"] =
                analyze_family(singles, c.k_grid, fairness, stability);
            append_jaccard_csv(jc, "mlp", stability);
            append_fairness_csv(fc, "mlp", fairness);
        }
        RunSet ensembles = build_ensemble_runset(
            members, static_cast<std::size_t>(c.ensemble_groups),
            static_cast<std::size_t>(c.ensemble_members));
        std::filesystem::create_directories(c.out_dir / "ensemble_runs");
        write_runs(ensembles, c.out_dir / "ensemble_runs");
        {
            std::vector<RepresentationRange> fairness;
            StabilityReport stability;
            report["families"]["ensemble_mlp"] =
                analyze_family(ensembles, c.k_grid, fairness, stability);
            append_jaccard_csv(jc, "ensemble_mlp", stability);
            append_fairness_csv(fc, "ensemble_mlp", fairness);
        }
    } catch (const std::exception& e) {
        report["families"]["mlp"] = {{"error", e.what()}};
    }

    write_json(c.out_dir / "report.json", report);
    return report;
}

}  // namespace riskstab
