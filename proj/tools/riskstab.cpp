// riskstab command line: generate synthetic cohorts, train seeded models,
// calibrate, evaluate, and run the stability / ensemble / fairness analyses.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "riskstab/calibration.hpp"
#include "riskstab/cohort.hpp"
#include "riskstab/ensemble.hpp"
#include "riskstab/evaluation.hpp"
#include "riskstab/fairness.hpp"
#include "riskstab/pipeline.hpp"
#include "riskstab/runs_io.hpp"
#include "riskstab/stability.hpp"
#include "riskstab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> to_paths(const std::vector<std::string>& ss) {
    return {ss.begin(), ss.end()};
}

std::vector<std::size_t> parse_k_grid(const std::string& csv) {
    std::vector<std::size_t> grid;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            grid.push_back(static_cast<std::size_t>(std::stoull(cur)));
            cur.clear();
        }
    };
    for (char c : csv) {
        if (c == ',')
            flush();
        else
            cur.push_back(c);
    }
    flush();
    if (grid.empty()) throw riskstab::ConfigError("empty k grid");
    return grid;
}

struct CommonFlags {
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string out_dir = "out";
};

// Options shared by `pipeline` and `compare`.
struct PipelineFlags {
    std::string cohort_config;
    std::string train_config;
    std::string model = "mlp";
    int n_runs = 10;
    int ensemble_groups = 0;
    int ensemble_members = 0;
    bool recalibrate = false;
    std::string k_grid = "10,30,100,300,1000";
};

riskstab::PipelineConfig build_pipeline_config(const CommonFlags& common,
                                               const PipelineFlags& flags) {
    riskstab::PipelineConfig config;
    if (!flags.cohort_config.empty())
        config.cohort = riskstab::load_cohort_config(flags.cohort_config);
    if (!flags.train_config.empty())
        config.train = riskstab::load_train_config(flags.train_config);
    else
        config.train.hidden = {32, 16, 8};  // desk-scale default
    config.model = flags.model == "lr" ? riskstab::ModelKind::logistic
                                       : riskstab::ModelKind::mlp;
    config.n_runs = flags.n_runs;
    config.ensemble_groups = flags.ensemble_groups;
    config.ensemble_members = flags.ensemble_members;
    config.recalibrate_ensembles = flags.recalibrate;
    config.k_grid = parse_k_grid(flags.k_grid);
    config.seed = common.seed;
    config.jobs = common.jobs;
    config.out_dir = common.out_dir;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-stratification stability toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags common;
    app.add_option("--seed", common.seed, "root seed");
    app.add_option("--jobs", common.jobs, "max concurrent training runs");
    app.add_option("--out-dir", common.out_dir, "output directory");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    std::string synth_config;
    synth->add_option("--config", synth_config, "cohort config file (key=value)");

    // train
    auto* train = app.add_subcommand("train", "train one seeded model");
    std::string train_model = "mlp", train_config_path, train_cohort, train_out;
    train->add_option("--model", train_model, "lr or mlp")
        ->check(CLI::IsMember({"lr", "mlp"}));
    train->add_option("--config", train_config_path, "train config file");
    train->add_option("--cohort", train_cohort, "cohort directory")->required();
    train->add_option("--out", train_out, "model output file")->required();

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "fit an isotonic calibrator");
    std::string cal_predictions, cal_fit_split = "validation", cal_out, cal_apply;
    calibrate->add_option("--predictions", cal_predictions,
                          "prediction CSV to fit on")->required();
    calibrate->add_option("--fit-split", cal_fit_split,
                          "split the fit predictions come from")
        ->check(CLI::IsMember({"validation"}));
    calibrate->add_option("--out", cal_out, "calibrator CSV output")->required();
    calibrate->add_option("--apply", cal_apply,
                          "prediction CSV to calibrate in place");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "AUC metrics for one run");
    std::string eval_predictions, eval_out = "report.json";
    bool eval_monthly = false;
    std::size_t eval_k = 0;
    evaluate->add_option("--predictions", eval_predictions)->required();
    evaluate->add_flag("--monthly", eval_monthly, "include per-month metrics");
    evaluate->add_option("--k", eval_k, "emit per-month top-K selections");
    evaluate->add_option("--out", eval_out, "report JSON path");

    // stability
    auto* stability = app.add_subcommand("stability", "stability metrics over runs");
    std::vector<std::string> stab_runs;
    std::string stab_k_grid = "10,30,100,300,1000", stab_out = "stability.json";
    std::string stab_csv;
    bool stab_per_month_tau = false;
    stability->add_option("--runs", stab_runs, "prediction CSVs")->required();
    stability->add_option("--k-grid", stab_k_grid, "comma-separated K values");
    stability->add_option("--out", stab_out);
    stability->add_option("--csv", stab_csv,
                          "prefix for J(K)-curve and scatter plot data CSVs");
    stability->add_flag("--per-month-tau", stab_per_month_tau,
                        "compute tau within each month instead of globally");

    // ensemble
    auto* ensemble = app.add_subcommand("ensemble", "average member runs");
    std::vector<std::string> ens_runs;
    int ens_members = 0, ens_groups = 0;
    std::string ens_field = "calibrated";
    bool ens_recalibrate = false;
    ensemble->add_option("--runs", ens_runs, "member prediction CSVs")->required();
    ensemble->add_option("--members", ens_members, "members per ensemble")->required();
    ensemble->add_option("--groups", ens_groups, "number of ensembles")->required();
    ensemble->add_option("--field", ens_field, "calibrated or raw")
        ->check(CLI::IsMember({"calibrated", "raw"}));
    ensemble->add_flag("--recalibrate", ens_recalibrate,
                       "re-fit isotonic on each ensemble output");

    // fairness
    auto* fairness = app.add_subcommand("fairness", "subgroup representation ranges");
    std::vector<std::string> fair_runs;
    std::string fair_k_grid = "10,30,100,300,1000", fair_attribute = "gender,race";
    std::string fair_out = "fairness.json", fair_csv;
    bool fair_per_month = false;
    fairness->add_option("--runs", fair_runs)->required();
    fairness->add_option("--k-grid", fair_k_grid);
    fairness->add_option("--attribute", fair_attribute, "gender,race subset");
    fairness->add_option("--out", fair_out);
    fairness->add_option("--csv", fair_csv, "composition-vs-K plot data CSV");
    fairness->add_flag("--per-month", fair_per_month,
                       "report the worst per-month range instead");

    // pipeline / compare
    PipelineFlags pflags;
    auto add_pipeline_flags = [&](CLI::App* cmd) {
        cmd->add_option("--cohort-config", pflags.cohort_config);
        cmd->add_option("--train-config", pflags.train_config);
        cmd->add_option("--model", pflags.model)->check(CLI::IsMember({"lr", "mlp"}));
        cmd->add_option("--n-runs", pflags.n_runs);
        cmd->add_option("--ensemble-groups", pflags.ensemble_groups);
        cmd->add_option("--ensemble-members", pflags.ensemble_members);
        cmd->add_flag("--recalibrate", pflags.recalibrate);
        cmd->add_option("--k-grid", pflags.k_grid);
    };
    auto* pipeline = app.add_subcommand("pipeline", "run the full pipeline");
    add_pipeline_flags(pipeline);
    auto* compare = app.add_subcommand("compare", "LR vs MLP vs ensembled MLP");
    add_pipeline_flags(compare);

    try {
        app.parse(argc, argv);

        if (*synth) {
            riskstab::CohortConfig config;
            if (!synth_config.empty()) config = riskstab::load_cohort_config(synth_config);
            if (app.count("--seed")) config.seed = common.seed;
            config.validate();
            auto cohort = riskstab::generate_cohort(config);
            riskstab::save_cohort(cohort, common.out_dir);
            std::cout << "cohort: " << cohort.patients.size() << " patients, "
                      << cohort.examples.size() << " examples -> " << common.out_dir
                      << "\n";
        } else if (*train) {
            riskstab::TrainConfig config;
            if (!train_config_path.empty())
                config = riskstab::load_train_config(train_config_path);
            if (app.count("--seed")) config.seed = common.seed;
            auto cohort = riskstab::load_cohort(train_cohort);
            auto train_ds = riskstab::make_dataset(cohort, riskstab::Split::train);
            auto val_ds = riskstab::make_dataset(cohort, riskstab::Split::validation);
            auto model = train_model == "lr"
                             ? riskstab::train_logistic(train_ds, val_ds, config)
                             : riskstab::train_mlp(train_ds, val_ds, config);
            riskstab::save_model(model, train_out);
            std::cout << "model saved to " << train_out << " (final train loss "
                      << model.epoch_train_loss.back() << ")\n";
        } else if (*calibrate) {
            auto run = riskstab::load_run(cal_predictions);
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& rec : run.records) {
                scores.push_back(rec.raw_score);
                labels.push_back(rec.label);
            }
            auto model = riskstab::fit_isotonic(scores, labels);
            riskstab::save_isotonic(model, cal_out);
            std::cout << "calibrator with " << model.knot_scores.size()
                      << " knots -> " << cal_out << "\n";
            if (!cal_apply.empty()) {
                auto target = riskstab::load_run(cal_apply);
                for (auto& rec : target.records)
                    rec.calibrated_risk = riskstab::apply_isotonic(model, rec.raw_score);
                riskstab::write_run(target, cal_apply);
                std::cout << "calibrated " << target.records.size()
                          << " predictions in " << cal_apply << "\n";
            }
        } else if (*evaluate) {
            auto run = riskstab::load_run(eval_predictions);
            json report = riskstab::evaluation_to_json(run);
            if (!eval_monthly) report.erase("monthly");
            if (eval_k > 0) {
                json topk = json::object();
                for (const auto& [month, idx] : riskstab::group_by_month(run))
                    topk[riskstab::format_month(riskstab::MonthIndex{month})] =
                        riskstab::top_k(run, riskstab::MonthIndex{month}, eval_k);
                report["top_k"] = {{"k", eval_k}, {"selections", topk}};
            }
            riskstab::write_json(eval_out, report);
            std::cout << "evaluation -> " << eval_out << "\n";
        } else if (*stability) {
            auto rs = riskstab::load_runs(to_paths(stab_runs));
            auto k_grid = parse_k_grid(stab_k_grid);
            auto report = riskstab::compute_stability(rs, k_grid, stab_per_month_tau);
            json j = riskstab::stability_to_json(report);
            j["n_runs"] = rs.runs.size();
            j["tau_grouping"] = stab_per_month_tau ? "per_month" : "global";
            riskstab::write_json(stab_out, j);
            if (!stab_csv.empty()) {
                std::ofstream jc(stab_csv + "_jaccard.csv", std::ios::binary);
                jc << "family,k,mean,std_over_months\n";
                riskstab::append_jaccard_csv(jc, "runs", report);
                riskstab::write_scatter_csv(rs, stab_csv + "_scatter.csv");
            }
            std::cout << "stability -> " << stab_out << "\n";
        } else if (*ensemble) {
            auto rs = riskstab::load_runs(to_paths(ens_runs));
            auto field = ens_field == "raw" ? riskstab::AverageField::raw_score
                                            : riskstab::AverageField::calibrated_risk;
            auto ensembles = riskstab::build_ensemble_runset(
                rs, static_cast<std::size_t>(ens_groups),
                static_cast<std::size_t>(ens_members), field);
            if (ens_recalibrate)
                for (auto& run : ensembles.runs) run = riskstab::recalibrate_run(run);
            auto paths = riskstab::write_runs(ensembles, common.out_dir);
            std::cout << "wrote " << paths.size() << " ensemble runs to "
                      << common.out_dir << "\n";
        } else if (*fairness) {
            auto rs = riskstab::load_runs(to_paths(fair_runs));
            auto k_grid = parse_k_grid(fair_k_grid);
            std::vector<riskstab::FairnessAttribute> attributes;
            if (fair_attribute.find("gender") != std::string::npos)
                attributes.push_back(riskstab::FairnessAttribute::gender);
            if (fair_attribute.find("race") != std::string::npos)
                attributes.push_back(riskstab::FairnessAttribute::race);
            if (attributes.empty())
                throw riskstab::ConfigError("--attribute must name gender and/or race");
            json report = json::object();
            std::vector<riskstab::RepresentationRange> all;
            for (auto attribute : attributes) {
                json per_k = json::object();
                for (std::size_t k : k_grid) {
                    auto rrs = riskstab::representation_range(rs, k, attribute,
                                                              fair_per_month);
                    per_k[std::to_string(k)] = riskstab::fairness_to_json(rrs);
                    all.insert(all.end(), rrs.begin(), rrs.end());
                }
                report[riskstab::to_string(attribute)] = std::move(per_k);
            }
            riskstab::write_json(fair_out, report);
            if (!fair_csv.empty()) {
                std::ofstream fc(fair_csv, std::ios::binary);
                fc << "family,attribute,group,k,min_proportion,max_proportion,range\n";
                riskstab::append_fairness_csv(fc, "runs", all);
            }
            std::cout << "fairness -> " << fair_out << "\n";
        } else if (*pipeline) {
            auto config = build_pipeline_config(common, pflags);
            riskstab::run_pipeline(config);
            std::cout << "pipeline complete -> " << config.out_dir / "report.json"
                      << "\n";
        } else if (*compare) {
            auto config = build_pipeline_config(common, pflags);
            riskstab::compare_architectures(config);
            std::cout << "comparison complete -> " << config.out_dir / "report.json"
                      << "\n";
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const riskstab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const riskstab::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const riskstab::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
