#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "roida/agent.hpp"
#include "roida/common.hpp"
#include "roida/data.hpp"
#include "roida/envs.hpp"

// Experiment runner: sweeps over mixture settings x methods x seeds with
// deterministic per-cell seeding, incremental on-disk results (resume skips
// completed cells), IQM aggregation, and CSV/Markdown reports.
namespace roida::harness {

namespace fs = std::filesystem;

// Mean of the last 10 evaluation points.
inline double final_score(const std::vector<double>& curve) {
    if (curve.size() < 10)
        throw ConfigError("final_score: need at least 10 evaluations, got " +
                          std::to_string(curve.size()));
    double sum = 0.0;
    for (std::size_t i = curve.size() - 10; i < curve.size(); ++i) sum += curve[i];
    return sum / 10.0;
}

struct IqmResult {
    double iqm;
    double ci_low;
    double ci_high;
};

inline double iqm_point(std::vector<double> scores) {
    std::sort(scores.begin(), scores.end());
    const std::size_t drop = scores.size() / 4;
    double sum = 0.0;
    for (std::size_t i = drop; i < scores.size() - drop; ++i) sum += scores[i];
    return sum / static_cast<double>(scores.size() - 2 * drop);
}

// Symmetric floor(n/4) truncation; percentile-bootstrap 95% CI.
inline IqmResult iqm(const std::vector<double>& scores, int bootstrap_reps = 2000,
                     std::uint64_t seed = 0) {
    if (scores.size() < 4) throw ConfigError("iqm: need at least 4 scores");
    IqmResult out;
    out.iqm = iqm_point(scores);
    Rng rng(mix_seed(seed, 0x1b00));
    std::vector<double> reps(bootstrap_reps);
    std::vector<double> resample(scores.size());
    for (int r = 0; r < bootstrap_reps; ++r) {
        for (auto& v : resample) v = scores[rng.index(scores.size())];
        reps[r] = iqm_point(resample);
    }
    std::sort(reps.begin(), reps.end());
    auto pct = [&](double q) {
        const double pos = q * (reps.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return lo + 1 < reps.size() ? reps[lo] * (1.0 - frac) + reps[lo + 1] * frac
                                    : reps[lo];
    };
    out.ci_low = pct(0.025);
    out.ci_high = pct(0.975);
    return out;
}

// ---- plans -----------------------------------------------------------------

struct ExperimentPlan {
    std::string name = "plan";
    envs::EnvSpec env = envs::pointmass2d();
    std::vector<data::MixtureSetting> settings;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> overrides;  // onto TrainConfig
    int expert_pool_margin = 10;
    std::uint64_t data_seed = 12345;

    void validate() const {
        if (settings.empty() || methods.empty() || seeds.empty())
            throw ConfigError("plan: settings, methods, and seeds must be non-empty");
    }
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{
        "roida",         "bc_exp",           "bc_all",
        "roida_no_wbc",  "roida_raw_reward", "roida_binary_disc",
        "roida_gt",      "roida_no_td"};
    return m;
}

inline void apply_method(agent::TrainConfig& cfg, const std::string& method) {
    cfg.method = agent::Method::roida;
    if (method == "roida") return;
    if (method == "bc_exp") { cfg.method = agent::Method::bc_exp; return; }
    if (method == "bc_all") { cfg.method = agent::Method::bc_all; return; }
    if (method == "roida_no_wbc") { cfg.no_weighted_bc = true; return; }
    if (method == "roida_raw_reward") { cfg.raw_discriminator_reward = true; return; }
    if (method == "roida_binary_disc") { cfg.binary_classifier_discriminator = true; return; }
    if (method == "roida_gt") { cfg.gt_rewards = true; return; }
    if (method == "roida_no_td") { cfg.no_td = true; return; }
    std::string known;
    for (const auto& m : known_methods()) known += " " + m;
    throw UsageError("unknown method '" + method + "'; known:" + known);
}

inline bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw UsageError("bad boolean value '" + v + "' (use 0/1/true/false)");
}

// Every TrainConfig field is overridable by key=value.
inline void apply_override(agent::TrainConfig& cfg, const std::string& key,
                           const std::string& value) {
    try {
        if (key == "gamma") cfg.gamma = std::stod(value);
        else if (key == "tau_threshold") cfg.tau_threshold = std::stod(value);
        else if (key == "eta") cfg.eta = std::stod(value);
        else if (key == "t_freq") cfg.t_freq = std::stoi(value);
        else if (key == "total_steps") cfg.total_steps = std::stoi(value);
        else if (key == "eval_every") cfg.eval_every = std::stoi(value);
        else if (key == "eval_episodes") cfg.eval_episodes = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "policy_lr") cfg.policy_lr = std::stod(value);
        else if (key == "critic_lr") cfg.critic_lr = std::stod(value);
        else if (key == "disc_lr") cfg.disc_lr = std::stod(value);
        else if (key == "disc_steps") cfg.disc_steps = std::stoi(value);
        else if (key == "policy_weight_decay") cfg.policy_weight_decay = std::stod(value);
        else if (key == "base_alpha") cfg.base_alpha = std::stod(value);
        else if (key == "base_beta") cfg.base_beta = std::stod(value);
        else if (key == "loss_ratio_damp") cfg.loss_ratio_damp = std::stod(value);
        else if (key == "polyak_rho") cfg.polyak_rho = std::stod(value);
        else if (key == "policy_hidden") cfg.policy_hidden = std::stoi(value);
        else if (key == "critic_hidden") cfg.critic_hidden = std::stoi(value);
        else if (key == "disc_hidden") cfg.disc_hidden = std::stoi(value);
        else if (key == "no_weighted_bc") cfg.no_weighted_bc = parse_bool(value);
        else if (key == "raw_discriminator_reward") cfg.raw_discriminator_reward = parse_bool(value);
        else if (key == "binary_classifier_discriminator") cfg.binary_classifier_discriminator = parse_bool(value);
        else if (key == "gt_rewards") cfg.gt_rewards = parse_bool(value);
        else if (key == "no_td") cfg.no_td = parse_bool(value);
        else if (key == "single_critic") cfg.single_critic = parse_bool(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else
            throw UsageError("unknown config key '" + key +
                             "' (see TrainConfig fields in the README)");
    } catch (const std::invalid_argument&) {
        throw UsageError("bad value '" + value + "' for config key '" + key + "'");
    }
}

inline data::MixtureSetting parse_setting(const std::string& s, int n_suboptimal) {
    const auto slash = s.find('/');
    if (slash == std::string::npos)
        throw UsageError("setting must look like x/y, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, slash)), std::stoi(s.substr(slash + 1)),
                n_suboptimal};
    } catch (const std::invalid_argument&) {
        throw UsageError("setting must look like x/y, got '" + s + "'");
    }
}

inline std::string setting_name(const data::MixtureSetting& m) {
    return std::to_string(m.n_expert_in_E) + "-" + std::to_string(m.n_expert_in_O) +
           "-" + std::to_string(m.n_suboptimal_in_O);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

// Plan file: flat key=value lines; '#' starts a comment. Unrecognized keys
// fall through to TrainConfig overrides.
inline ExperimentPlan load_plan(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open plan file: " + path);
    ExperimentPlan plan;
    int n_suboptimal = 1000;
    std::vector<std::string> setting_strs{"5/0", "5/3", "5/5"};
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r'))
            line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected key=value");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "name") plan.name = value;
        else if (key == "env") plan.env = envs::env_by_name(value);
        else if (key == "settings") setting_strs = split(value, ',');
        else if (key == "methods") plan.methods = split(value, ',');
        else if (key == "seeds") {
            plan.seeds.clear();
            for (const auto& s : split(value, ',')) plan.seeds.push_back(std::stoull(s));
        } else if (key == "n_suboptimal") n_suboptimal = std::stoi(value);
        else if (key == "data_seed") plan.data_seed = std::stoull(value);
        else plan.overrides[key] = value;
    }
    for (const auto& s : setting_strs)
        plan.settings.push_back(parse_setting(s, n_suboptimal));
    if (plan.methods.empty()) plan.methods = {"roida", "bc_exp", "bc_all"};
    if (plan.seeds.empty()) plan.seeds = {0, 1, 2, 3, 4};
    // method names validated eagerly so typos fail before hours of training
    for (const auto& m : plan.methods) {
        agent::TrainConfig probe;
        apply_method(probe, m);
    }
    plan.validate();
    return plan;
}

inline agent::TrainConfig cell_config(const ExperimentPlan& plan,
                                      const std::string& method, std::uint64_t seed) {
    agent::TrainConfig cfg;
    for (const auto& [k, v] : plan.overrides) apply_override(cfg, k, v);
    apply_method(cfg, method);
    cfg.seed = seed;
    return cfg;
}

// ---- cell execution --------------------------------------------------------

struct CellResult {
    bool ok = false;
    std::string error;
    std::vector<double> curve;
    double final = 0.0;
};

inline fs::path results_root() {
    if (const char* env = std::getenv("ROIDA_RESULTS_DIR")) return fs::path(env);
    return fs::path("results");
}

inline void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw ConfigError("cannot write " + tmp.string());
        os << content;
    }
    fs::rename(tmp, path);
}

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Builds the datasets for one setting deterministically from the plan's data
// seed and the cell seed (mixture membership varies per seed).
inline std::pair<data::TransitionSet, data::TransitionSet> cell_datasets(
    const ExperimentPlan& plan, const data::MixtureSetting& setting,
    std::uint64_t seed) {
    const int pool_n =
        setting.n_expert_in_E + setting.n_expert_in_O + plan.expert_pool_margin;
    const auto expert_pool = data::generate_dataset(
        plan.env, envs::BehaviorPolicy::expert, pool_n,
        mix_seed(plan.data_seed, 0xe0), 0.0, data::Provenance::expert_set);
    const auto sub_pool = data::generate_dataset(
        plan.env, envs::BehaviorPolicy::random, setting.n_suboptimal_in_O,
        mix_seed(plan.data_seed, 0x50), 0.0, data::Provenance::aux_suboptimal);
    return data::build_mixture(setting, expert_pool, sub_pool, mix_seed(seed, 0x31c));
}

inline void write_cell(const fs::path& dir, const agent::TrainResult& tr) {
    fs::create_directories(dir);
    std::string log = "step,lambda1,lambda2,lambda3,alpha,beta,critic_loss,eval_score\n";
    for (const auto& row : tr.log) {
        log += std::to_string(row.step);
        for (double v : {row.lambda1, row.lambda2, row.lambda3, row.alpha, row.beta,
                         row.critic_loss, row.eval_score})
            log += "," + format_g17(v);
        log += "\n";
    }
    atomic_write(dir / "log.csv", log);
    {
        std::ostringstream os;
        tc::save_model(tr.policy.mean_net, os, "policy", &tr.policy.log_std);
        atomic_write(dir / "policy.ckpt", os.str());
    }
    atomic_write(dir / "final.txt", format_g17(final_score(tr.eval_curve)) + "\n");
}

inline CellResult read_cell(const fs::path& dir) {
    CellResult res;
    if (fs::exists(dir / "failed.txt")) {
        std::ifstream is(dir / "failed.txt");
        std::getline(is, res.error);
        return res;
    }
    if (!fs::exists(dir / "final.txt")) {
        res.error = "missing";
        return res;
    }
    {
        std::ifstream is(dir / "final.txt");
        is >> res.final;
        if (!is) throw IntegrityError("unreadable final.txt in " + dir.string());
    }
    std::ifstream is(dir / "log.csv");
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        const auto cols = split(line, ',');
        if (cols.size() == 8) res.curve.push_back(std::stod(cols[7]));
    }
    res.ok = true;
    return res;
}

struct ExperimentReport {
    ExperimentPlan plan;
    // indexed [setting][method][seed] in plan order
    std::vector<std::vector<std::vector<CellResult>>> cells;
};

// Executes every (setting, method, seed) cell; completed cells on disk are
// skipped, failed cells are recorded and the plan continues.
inline ExperimentReport run_plan(const ExperimentPlan& plan, bool verbose = false) {
    plan.validate();
    const fs::path root = results_root() / plan.name;
    ExperimentReport report;
    report.plan = plan;
    for (std::size_t si = 0; si < plan.settings.size(); ++si) {
        const auto& setting = plan.settings[si];
        report.cells.emplace_back();
        for (const auto& method : plan.methods) {
            report.cells.back().emplace_back();
            for (const auto seed : plan.seeds) {
                const fs::path dir =
                    root / setting_name(setting) / method / std::to_string(seed);
                if (!fs::exists(dir / "final.txt") && !fs::exists(dir / "failed.txt")) {
                    if (verbose)
                        std::fprintf(stderr, "[cell] %s/%s/seed%llu\n",
                                     setting_name(setting).c_str(), method.c_str(),
                                     static_cast<unsigned long long>(seed));
                    try {
                        const auto cfg = cell_config(plan, method, seed);
                        auto [d_e, d_o] = cell_datasets(plan, setting, seed);
                        const auto tr = agent::train_roida(d_e, d_o, cfg, plan.env);
                        write_cell(dir, tr);
                    } catch (const std::exception& e) {
                        fs::create_directories(dir);
                        atomic_write(dir / "failed.txt", std::string(e.what()) + "\n");
                    }
                }
                report.cells.back().back().push_back(read_cell(dir));
            }
        }
    }
    return report;
}

// ---- report emission -------------------------------------------------------

inline std::string format_f2(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// report.csv: one row per (setting, method) with mean, std, per-seed columns.
// report.md: Table-1-style grid plus a cross-setting average row and pooled
// IQM with bootstrap CI per method. Byte-deterministic given the report.
inline void emit_report(const ExperimentReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const auto& plan = report.plan;

    std::string csv = "setting,method,mean,std";
    for (const auto seed : plan.seeds) csv += ",seed" + std::to_string(seed);
    csv += "\n";
    for (std::size_t si = 0; si < plan.settings.size(); ++si) {
        for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
            csv += setting_name(plan.settings[si]) + "," + plan.methods[mi];
            std::vector<double> ok_scores;
            std::string per_seed;
            for (const auto& cell : report.cells[si][mi]) {
                per_seed += cell.ok ? "," + format_f2(cell.final) : ",—";
                if (cell.ok) ok_scores.push_back(cell.final);
            }
            if (ok_scores.empty())
                csv += ",—,—" + per_seed + "\n";
            else
                csv += "," + format_f2(mean_of(ok_scores)) + "," +
                       format_f2(std_of(ok_scores)) + per_seed + "\n";
        }
    }
    atomic_write(out_dir / "report.csv", csv);

    std::string md = "# " + plan.name + " (" + envs::env_name(plan.env) + ")\n\n";
    md += "Mean normalized score (last 10 evaluations, " +
          std::to_string(plan.seeds.size()) + " seeds).\n\n| setting |";
    for (const auto& m : plan.methods) md += " " + m + " |";
    md += "\n|---|";
    for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) md += "---|";
    md += "\n";
    std::vector<std::vector<double>> pooled(plan.methods.size());
    for (std::size_t si = 0; si < plan.settings.size(); ++si) {
        const auto& s = plan.settings[si];
        md += "| " + std::to_string(s.n_expert_in_E) + "/" +
              std::to_string(s.n_expert_in_O) + " |";
        for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
            std::vector<double> ok_scores;
            for (const auto& cell : report.cells[si][mi])
                if (cell.ok) ok_scores.push_back(cell.final);
            if (ok_scores.empty()) {
                md += " — |";
            } else {
                md += " " + format_f2(mean_of(ok_scores)) + " ± " +
                      format_f2(std_of(ok_scores)) + " |";
                for (double v : ok_scores) pooled[mi].push_back(v);
            }
        }
        md += "\n";
    }
    md += "| **average** |";
    for (std::size_t mi = 0; mi < plan.methods.size(); ++mi)
        md += pooled[mi].empty() ? " — |"
                                 : " **" + format_f2(mean_of(pooled[mi])) + "** |";
    md += "\n\n## IQM (pooled per-seed final scores)\n\n| method | IQM | 95% CI |\n|---|---|---|\n";
    for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
        md += "| " + plan.methods[mi] + " | ";
        if (pooled[mi].size() < 4) {
            md += "— | — |\n";
        } else {
            const auto r = iqm(pooled[mi], 2000, plan.data_seed);
            md += format_f2(r.iqm) + " | [" + format_f2(r.ci_low) + ", " +
                  format_f2(r.ci_high) + "] |\n";
        }
    }
    atomic_write(out_dir / "report.md", md);
}

// Convenience: per-(setting, method) mean over completed seeds.
inline double cell_mean(const ExperimentReport& report, std::size_t si,
                        std::size_t mi) {
    std::vector<double> ok;
    for (const auto& cell : report.cells[si][mi])
        if (cell.ok) ok.push_back(cell.final);
    if (ok.empty()) throw ConfigError("cell_mean: no completed seeds");
    return mean_of(ok);
}

}  // namespace roida::harness
