// Command-line front end: demo generation, training, evaluation, gradient
// auditing and cross-run reporting, all driven by a JSON config file
// (comments allowed). Exit codes: 0 success, 1 usage/config error, 2 data
// error, 3 gradient verification failure.

#include "afalab/config.hpp"
#include "afalab/env.hpp"
#include "afalab/gradcheck.hpp"
#include "afalab/metrics.hpp"
#include "afalab/model.hpp"
#include "afalab/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace afalab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

ExperimentConfig load_config(const std::string& path) { return ExperimentConfig::load(path); }

void print_iqm_table(const std::vector<std::pair<std::string, std::map<std::string, double>>>& rows,
                     const std::vector<std::string>& conditions) {
    std::printf("%-16s", "pooling");
    for (const std::string& c : conditions) std::printf("  %12s", c.c_str());
    std::printf("\n");
    for (const auto& [kind, values] : rows) {
        std::printf("%-16s", kind.c_str());
        for (const std::string& c : conditions) {
            auto it = values.find(c);
            if (it == values.end()) std::printf("  %12s", "-");
            else std::printf("  %12.4f", it->second);
        }
        std::printf("\n");
    }
}

int cmd_gen_demos(const std::string& config_path, const std::string& out_dir,
                  std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed_override) cfg.env.demo_seed = *seed_override;
    const SignatureBank bank = SignatureBank::create(cfg.env.grid, cfg.env.dim, cfg.env.master_seed);
    const std::vector<Demonstration> demos =
        generate_demos(cfg.env_config(), bank, cfg.env.demos, cfg.env.horizon, cfg.env.demo_seed);
    save_demos(out_dir, demos, cfg.env_config(), cfg.env.demo_seed, cfg.to_json());

    std::size_t total_steps = 0;
    for (const Demonstration& d : demos) total_steps += d.steps.size();
    std::printf("wrote %zu episodes to %s (mean length %.1f steps)\n", demos.size(), out_dir.c_str(),
                static_cast<double>(total_steps) / demos.size());
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& demo_dir, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    const ExperimentConfig cfg = load_config(config_path);
    const std::vector<Demonstration> demos = load_demos(demo_dir);
    const std::uint64_t seed = seed_override ? *seed_override : cfg.train.seeds.front();

    const TrainResult result = train(cfg, demos, seed);

    fs::create_directories(out_dir);
    save_checkpoint(fs::path(out_dir) / "checkpoint.json", result.model, cfg.to_json(), cfg.model_hash(), seed);
    std::ostringstream csv;
    csv << "step,loss\n";
    csv.precision(17);
    for (const LossPoint& p : result.history) csv << p.step << "," << p.loss << "\n";
    write_text_file(fs::path(out_dir) / "loss.csv", csv.str());
    write_text_file(fs::path(out_dir) / "resolved_config.json", cfg.to_json().dump(2) + "\n");

    std::printf("trained %s head for %d steps (seed %llu): loss %.6f -> %.6f\n",
                to_string(cfg.pooling.kind).c_str(), cfg.train.steps,
                static_cast<unsigned long long>(seed), result.loss_initial, result.loss_final_smoothed);
    std::printf("checkpoint: %s\n", (fs::path(out_dir) / "checkpoint.json").string().c_str());
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path, const std::string& out_dir,
             bool expert, int jobs_override, std::optional<std::uint64_t> seed_override) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed_override) cfg.env.eval_seed = *seed_override;
    if (jobs_override > 0) cfg.eval.jobs = jobs_override;

    std::optional<Checkpoint> ck;
    if (!expert) {
        if (checkpoint_path.empty())
            throw ConfigError("eval requires --checkpoint (or --expert for the scripted oracle)");
        ck = load_checkpoint(checkpoint_path);
        if (ck->config_hash != cfg.model_hash())
            throw ConfigError("checkpoint/config mismatch: checkpoint hash " + ck->config_hash +
                              ", config hash " + cfg.model_hash());
    }

    const SignatureBank bank = SignatureBank::create(cfg.env.grid, cfg.env.dim, cfg.env.master_seed);

    ExperimentReport report;
    report.config_hash = cfg.model_hash();
    report.pooling_kind = expert ? "expert" : to_string(cfg.pooling.kind);
    report.config_dump = cfg.to_json().dump();
    SeedResult sr;
    sr.seed = expert ? 0 : ck->train_seed;
    for (Condition condition : cfg.eval.conditions)
        sr.conditions.push_back(evaluate(expert ? nullptr : &ck->model, bank, cfg, condition,
                                         cfg.eval.episodes, cfg.env.eval_seed, cfg.eval.jobs));
    report.per_seed.push_back(std::move(sr));
    for (Condition condition : cfg.eval.conditions) {
        const std::string name = to_string(condition);
        report.iqm_per_condition.emplace_back(name, iqm({report.per_seed[0].find(name)->success_rate}));
    }

    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "report.json", report.to_json().dump(2) + "\n");
    write_text_file(fs::path(out_dir) / "traces.csv", report.traces_csv());

    std::vector<std::string> condition_names;
    std::map<std::string, double> values;
    for (const auto& [name, value] : report.iqm_per_condition) {
        condition_names.push_back(name);
        values[name] = value;
    }
    print_iqm_table({{report.pooling_kind, values}}, condition_names);
    return kExitOk;
}

int cmd_gradcheck(int seeds) {
    AuditOptions options;
    options.seeds = seeds;
    const std::vector<AuditRow> rows = gradient_audit(options);

    std::printf("%-16s  %8s  %12s  %-18s  %s\n", "component", "values", "max_rel_err", "worst_at", "status");
    for (const AuditRow& r : rows) {
        if (!r.applicable) {
            std::printf("%-16s  %8s  %12s  %-18s  %s\n", r.component.c_str(), "n/a", "n/a", "-",
                        "n/a (no parameters)");
            continue;
        }
        std::printf("%-16s  %8d  %12.3e  %-18s  %s\n", r.component.c_str(), r.checked_values, r.max_rel_err,
                    r.worst_location.c_str(), r.max_rel_err <= 1e-5 ? "ok" : "FAIL");
    }
    if (!audit_passed(rows, 1e-5)) {
        std::fprintf(stderr, "gradient audit FAILED (threshold 1e-5):\n");
        for (const AuditRow& r : rows)
            if (r.applicable && r.max_rel_err > 1e-5)
                std::fprintf(stderr, "  %s: %.3e at %s\n", r.component.c_str(), r.max_rel_err,
                             r.worst_location.c_str());
        return kExitVerification;
    }
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.size() < 3)
        throw ConfigError("report requires at least 3 completed run directories, got " +
                          std::to_string(run_dirs.size()));

    std::vector<ExperimentReport> reports;
    for (const std::string& dir : run_dirs) {
        const fs::path path = fs::path(dir) / "report.json";
        std::ifstream in(path);
        if (!in) throw DataError("missing run report: " + path.string());
        try {
            reports.push_back(ExperimentReport::from_json(nlohmann::json::parse(in)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corrupt run report " + path.string() + ": " + e.what());
        }
    }

    // Fig.4-style table: per pooling kind, IQM over all seeds found per condition
    std::map<std::string, std::map<std::string, std::vector<double>>> rates;  // kind -> condition -> rates
    std::vector<std::string> condition_names;
    std::vector<PredictorSample> samples;
    for (const ExperimentReport& report : reports) {
        for (const SeedResult& s : report.per_seed) {
            for (const ConditionResult& c : s.conditions) {
                rates[report.pooling_kind][c.condition].push_back(c.success_rate);
                if (std::find(condition_names.begin(), condition_names.end(), c.condition) == condition_names.end())
                    condition_names.push_back(c.condition);
                if (c.attention && c.condition != "in_domain") {
                    PredictorSample p;
                    p.run = report.pooling_kind + "/seed" + std::to_string(s.seed);
                    p.kind = pooling_kind_from_string(report.pooling_kind);
                    p.condition = c.condition;
                    p.mass = c.attention->mass;
                    p.entropy = c.attention->entropy;
                    p.ood_success = c.success_rate;
                    samples.push_back(std::move(p));
                }
            }
        }
    }

    std::vector<std::pair<std::string, std::map<std::string, double>>> table;
    for (const auto& [kind, per_condition] : rates) {
        std::map<std::string, double> row;
        for (const auto& [condition, values] : per_condition) row[condition] = iqm(values);
        table.emplace_back(kind, std::move(row));
    }
    std::printf("IQM success rates over %zu run(s):\n", reports.size());
    print_iqm_table(table, condition_names);

    const PredictorReport predictors = predictor_report(samples);
    fs::create_directories(out_dir);
    write_text_file(fs::path(out_dir) / "correlations.json", predictors.to_json().dump(2) + "\n");
    write_text_file(fs::path(out_dir) / "predictors.csv", predictors.scatter_csv());
    std::printf("\npredictors over %zu samples: rho(mass, ood) = %+.4f, rho(entropy, ood) = %+.4f\n",
                predictors.samples.size(), predictors.rho_mass, predictors.rho_entropy);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"behaviour-cloning pooling laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", demo_dir, checkpoint_path;
    std::vector<std::string> run_dirs;
    std::optional<std::uint64_t> seed_override;
    int jobs = 0;
    int audit_seeds = 10;
    bool expert = false;

    CLI::App* gen = app.add_subcommand("gen-demos", "generate expert demonstrations");
    gen->add_option("--config", config_path, "config file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--seed", seed_override, "override the demo seed");

    CLI::App* tr = app.add_subcommand("train", "behaviour-clone a policy from demos");
    tr->add_option("--config", config_path, "config file")->required();
    tr->add_option("--demos", demo_dir, "demonstration directory")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--seed", seed_override, "override the training seed");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint (or the scripted expert)");
    ev->add_option("--config", config_path, "config file")->required();
    ev->add_option("--checkpoint", checkpoint_path, "checkpoint file");
    ev->add_option("--out", out_dir, "output directory")->required();
    ev->add_option("--jobs", jobs, "parallel evaluation threads");
    ev->add_option("--seed", seed_override, "override the eval seed");
    ev->add_flag("--expert", expert, "run the scripted expert instead of a policy");

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit of all gradients");
    gc->add_option("--seeds", audit_seeds, "random seeds per component");

    CLI::App* rp = app.add_subcommand("report", "aggregate runs: IQM table + robustness predictors");
    rp->add_option("runs", run_dirs, "run directories (>= 3)")->required();
    rp->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_demos(config_path, out_dir, seed_override);
        if (tr->parsed()) return cmd_train(config_path, demo_dir, out_dir, seed_override);
        if (ev->parsed()) return cmd_eval(config_path, checkpoint_path, out_dir, expert, jobs, seed_override);
        if (gc->parsed()) return cmd_gradcheck(audit_seeds);
        if (rp->parsed()) return cmd_report(run_dirs, out_dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitUsage;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
