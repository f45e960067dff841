// Command-line front end: dataset generation, mixture construction, single
// training runs, plan sweeps, report emission, dataset stats, and the
// gradient/oracle selftest.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "roida/agent.hpp"
#include "roida/data.hpp"
#include "roida/envs.hpp"
#include "roida/harness.hpp"
#include "roida/selftest.hpp"

namespace fs = std::filesystem;
using namespace roida;

namespace {

envs::BehaviorPolicy policy_by_name(const std::string& s) {
    if (s == "expert") return envs::BehaviorPolicy::expert;
    if (s == "random") return envs::BehaviorPolicy::random;
    if (s == "epsilon_expert") return envs::BehaviorPolicy::epsilon_expert;
    throw UsageError("unknown policy '" + s + "' (expert, random, epsilon_expert)");
}

void cmd_gen_data(const std::string& env, const std::string& policy, int n,
                  std::uint64_t seed, double epsilon, const std::string& out) {
    const auto spec = envs::env_by_name(env);
    const auto kind = policy_by_name(policy);
    const auto label = kind == envs::BehaviorPolicy::expert
                           ? data::Provenance::expert_set
                           : data::Provenance::aux_suboptimal;
    const auto set = data::generate_dataset(spec, kind, n, seed, epsilon, label);
    data::save_dataset_file(set, out);
    std::printf("wrote %zu transitions (%zu trajectories) to %s\n", set.size(),
                set.num_trajectories(), out.c_str());
}

void cmd_mix(const std::string& setting_str, int n_suboptimal,
             const std::string& expert_pool_path, const std::string& sub_pool_path,
             std::uint64_t seed, const std::string& out_e, const std::string& out_o) {
    const auto setting = harness::parse_setting(setting_str, n_suboptimal);
    const auto expert_pool = data::load_dataset_file(expert_pool_path);
    const auto sub_pool = data::load_dataset_file(sub_pool_path);
    auto [d_e, d_o] = data::build_mixture(setting, expert_pool, sub_pool, seed);
    data::save_dataset_file(d_e, out_e);
    data::save_dataset_file(d_o, out_o);
    std::printf("D_E: %zu transitions, D_O: %zu transitions\n", d_e.size(), d_o.size());
}

void cmd_stats(const std::string& path) {
    const auto set = data::load_dataset_file(path);
    std::map<data::Provenance, int> counts;
    for (auto p : set.provenance) ++counts[p];
    std::printf("env: %s  transitions: %zu  trajectories: %zu\n",
                envs::env_name(set.manifest.spec).c_str(), set.size(),
                set.num_trajectories());
    std::printf("anchors: expert_return=%.4f random_return=%.4f\n",
                set.manifest.anchors.expert_return, set.manifest.anchors.random_return);
    for (auto [p, c] : counts)
        std::printf("  %s: %d trajectories\n", data::provenance_name(p), c);
    double ret = 0.0;
    std::vector<double> traj_returns;
    for (std::size_t i = 0; i < set.num_trajectories(); ++i) {
        double r = 0.0;
        for (std::size_t k = set.traj_begin(i); k < set.traj_end(i); ++k)
            r += set.transitions[k].true_reward;
        traj_returns.push_back(r);
        ret += r;
    }
    if (!traj_returns.empty())
        std::printf("mean true-reward return: %.4f (normalized %.2f)\n",
                    ret / traj_returns.size(),
                    envs::normalized_score(set.manifest.anchors,
                                           ret / traj_returns.size()));
}

void cmd_train(const std::string& env, const std::string& d_e_path,
               const std::string& d_o_path, const std::string& config_path,
               const std::string& method,
               const std::vector<std::string>& overrides, const std::string& out_dir) {
    const auto spec = envs::env_by_name(env);
    agent::TrainConfig cfg;
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw ConfigError("cannot open config file: " + config_path);
        std::string line;
        while (std::getline(is, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            if (line.find('=') == std::string::npos) continue;
            const auto eq = line.find('=');
            harness::apply_override(cfg, line.substr(0, eq), line.substr(eq + 1));
        }
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw UsageError("override must be key=value, got '" + ov + "'");
        harness::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
    }
    harness::apply_method(cfg, method);
    cfg.validate();

    const auto d_e = data::load_dataset_file(d_e_path);
    const auto d_o = data::load_dataset_file(d_o_path);
    const auto tr = agent::train_roida(d_e, d_o, cfg, spec);
    harness::write_cell(fs::path(out_dir), tr);
    std::printf("final score: %.2f (curve of %zu evaluations) -> %s\n",
                harness::final_score(tr.eval_curve), tr.eval_curve.size(),
                out_dir.c_str());
}

void cmd_sweep(const std::string& plan_path, bool verbose) {
    const auto plan = harness::load_plan(plan_path);
    const auto report = harness::run_plan(plan, verbose);
    const fs::path out = harness::results_root() / plan.name;
    harness::emit_report(report, out);
    std::printf("plan '%s' complete; report at %s\n", plan.name.c_str(),
                (out / "report.md").c_str());
}

void cmd_report(const std::string& plan_path) {
    const auto plan = harness::load_plan(plan_path);
    harness::ExperimentReport report;
    report.plan = plan;
    const fs::path root = harness::results_root() / plan.name;
    for (const auto& setting : plan.settings) {
        report.cells.emplace_back();
        for (const auto& method : plan.methods) {
            report.cells.back().emplace_back();
            for (const auto seed : plan.seeds)
                report.cells.back().back().push_back(harness::read_cell(
                    root / harness::setting_name(setting) / method /
                    std::to_string(seed)));
        }
    }
    harness::emit_report(report, root);
    std::printf("report at %s\n", (root / "report.md").c_str());
}

int cmd_selftest(int trials) {
    const auto rep = selftest::run_gradient_selftest(trials);
    for (const auto& l : rep.losses)
        std::printf("%-20s trials=%d resamples=%d max_rel_error=%.3g %s\n",
                    l.name.c_str(), l.trials, l.resamples, l.max_rel_error,
                    l.pass ? "PASS" : "FAIL");
    std::printf("selftest %s (max relative error %.3g)\n",
                rep.pass ? "PASS" : "FAIL", rep.max_rel_error);
    return rep.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ROIDA toy-suite experiment runner"};
    app.require_subcommand(1);

    std::string env = "pointmass2d", policy = "expert", out, out_e, out_o;
    std::string setting_str = "5/0", expert_pool, sub_pool, d_e_path, d_o_path;
    std::string config_path, method = "roida", plan_path, dataset_path;
    std::vector<std::string> overrides;
    int n = 5, n_suboptimal = 1000, trials = 100;
    std::uint64_t seed = 0;
    double epsilon = 0.3;
    bool verbose = false;

    auto* gen = app.add_subcommand("gen-data", "generate a scripted-policy dataset");
    gen->add_option("--env", env, "lineworld1d | pointmass2d");
    gen->add_option("--policy", policy, "expert | random | epsilon_expert");
    gen->add_option("--n", n, "number of trajectories");
    gen->add_option("--seed", seed);
    gen->add_option("--epsilon", epsilon, "random-action rate for epsilon_expert");
    gen->add_option("--out", out)->required();

    auto* mix = app.add_subcommand("mix", "build an x/y expert-auxiliary mixture");
    mix->add_option("--setting", setting_str, "x/y: experts in D_E / experts in D_O");
    mix->add_option("--n-suboptimal", n_suboptimal);
    mix->add_option("--expert-pool", expert_pool)->required();
    mix->add_option("--suboptimal-pool", sub_pool)->required();
    mix->add_option("--seed", seed);
    mix->add_option("--out-e", out_e)->required();
    mix->add_option("--out-o", out_o)->required();

    auto* train = app.add_subcommand("train", "train one method on a dataset pair");
    train->add_option("--env", env);
    train->add_option("--d-e", d_e_path)->required();
    train->add_option("--d-o", d_o_path)->required();
    train->add_option("--config", config_path, "flat key=value config file");
    train->add_option("--method", method, "roida | bc_exp | bc_all | roida_* ablations");
    train->add_option("--set", overrides, "config override key=value (repeatable)");
    train->add_option("--out", out)->required();

    auto* sweep = app.add_subcommand("sweep", "run a full experiment plan");
    sweep->add_option("plan", plan_path, "plan file")->required();
    sweep->add_flag("--verbose", verbose);

    auto* rep = app.add_subcommand("report", "re-emit reports from completed cells");
    rep->add_option("plan", plan_path, "plan file")->required();

    auto* stats = app.add_subcommand("stats", "print dataset composition");
    stats->add_option("dataset", dataset_path)->required();

    auto* self = app.add_subcommand("selftest", "gradient and oracle suites");
    self->add_option("--trials", trials, "trials per loss");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) cmd_gen_data(env, policy, n, seed, epsilon, out);
        else if (mix->parsed())
            cmd_mix(setting_str, n_suboptimal, expert_pool, sub_pool, seed, out_e, out_o);
        else if (train->parsed())
            cmd_train(env, d_e_path, d_o_path, config_path, method, overrides, out);
        else if (sweep->parsed()) cmd_sweep(plan_path, verbose);
        else if (rep->parsed()) cmd_report(plan_path);
        else if (stats->parsed()) cmd_stats(dataset_path);
        else if (self->parsed()) return cmd_selftest(trials);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
