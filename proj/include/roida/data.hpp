#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "roida/common.hpp"
#include "roida/envs.hpp"

// Transition storage, expert/auxiliary mixture construction, batching, and the
// .tset file format (one JSON manifest line + raw little-endian float64 body).
namespace roida::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Transition {
    VectorXd s;
    VectorXd a;
    VectorXd s_next;
    bool done = false;
    double true_reward = 0.0;  // evaluation / GT-reward mode only
};

enum class Provenance { expert_set, aux_expert, aux_suboptimal };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::expert_set: return "expert_set";
        case Provenance::aux_expert: return "aux_expert";
        case Provenance::aux_suboptimal: return "aux_suboptimal";
    }
    return "?";
}

inline Provenance provenance_from_name(const std::string& s) {
    if (s == "expert_set") return Provenance::expert_set;
    if (s == "aux_expert") return Provenance::aux_expert;
    if (s == "aux_suboptimal") return Provenance::aux_suboptimal;
    throw ParseError("unknown provenance label: " + s);
}

struct Manifest {
    envs::EnvSpec spec;
    envs::ScoreAnchors anchors;
    std::vector<std::uint64_t> seeds;
};

struct TransitionSet {
    std::vector<Transition> transitions;
    // cumulative end index per trajectory; strictly increasing, last == size()
    std::vector<std::size_t> trajectory_offsets;
    std::vector<Provenance> provenance;  // one label per trajectory
    Manifest manifest;

    std::size_t size() const { return transitions.size(); }
    std::size_t num_trajectories() const { return trajectory_offsets.size(); }

    std::size_t traj_begin(std::size_t i) const {
        return i == 0 ? 0 : trajectory_offsets[i - 1];
    }
    std::size_t traj_end(std::size_t i) const { return trajectory_offsets[i]; }

    void append_trajectory(const TransitionSet& src, std::size_t traj_idx,
                           Provenance label) {
        for (std::size_t k = src.traj_begin(traj_idx); k < src.traj_end(traj_idx); ++k)
            transitions.push_back(src.transitions[k]);
        trajectory_offsets.push_back(transitions.size());
        provenance.push_back(label);
    }
};

struct MixtureSetting {
    int n_expert_in_E;
    int n_expert_in_O;
    int n_suboptimal_in_O;
};

// Rolls out full episodes of the scripted policy and records every transition.
inline TransitionSet generate_dataset(const envs::EnvSpec& spec,
                                      envs::BehaviorPolicy policy, int n_trajectories,
                                      std::uint64_t seed, double epsilon = 0.3,
                                      Provenance label = Provenance::aux_suboptimal) {
    if (n_trajectories <= 0) throw ConfigError("generate_dataset: n_trajectories <= 0");
    TransitionSet set;
    set.manifest.spec = spec;
    set.manifest.anchors = envs::compute_anchors(spec);
    set.manifest.seeds = {seed};
    for (int i = 0; i < n_trajectories; ++i) {
        const std::uint64_t ep_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        envs::EnvState st = envs::env_reset(spec, ep_seed);
        Rng rng(mix_seed(ep_seed, 0x5eed));
        for (int t = 0; t < spec.horizon; ++t) {
            const VectorXd a = envs::behavior_action(spec, policy, st, rng, epsilon);
            auto res = envs::env_step(spec, st, a);
            set.transitions.push_back(
                {st.position, a, res.next.position, res.done, res.true_reward});
            st = std::move(res.next);
        }
        set.trajectory_offsets.push_back(set.transitions.size());
        set.provenance.push_back(label);
    }
    return set;
}

// Samples trajectories without replacement; expert trajectories placed in D_O
// are disjoint from those in D_E. Provenance is diagnostic only.
inline std::pair<TransitionSet, TransitionSet> build_mixture(
    const MixtureSetting& setting, const TransitionSet& expert_pool,
    const TransitionSet& suboptimal_pool, std::uint64_t seed) {
    if (setting.n_expert_in_E < 1) throw ConfigError("build_mixture: n_expert_in_E < 1");
    const std::size_t need_expert =
        static_cast<std::size_t>(setting.n_expert_in_E + setting.n_expert_in_O);
    if (expert_pool.num_trajectories() < need_expert)
        throw ConfigError("build_mixture: expert pool too small");
    if (suboptimal_pool.num_trajectories() <
        static_cast<std::size_t>(setting.n_suboptimal_in_O))
        throw ConfigError("build_mixture: suboptimal pool too small");

    Rng rng(seed);
    auto draw_without_replacement = [&](std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < k; ++i)
            std::swap(idx[i], idx[i + rng.index(n - i)]);
        idx.resize(k);
        return idx;
    };

    const auto expert_idx =
        draw_without_replacement(expert_pool.num_trajectories(), need_expert);
    const auto sub_idx = draw_without_replacement(
        suboptimal_pool.num_trajectories(),
        static_cast<std::size_t>(setting.n_suboptimal_in_O));

    TransitionSet d_e, d_o;
    d_e.manifest = expert_pool.manifest;
    d_o.manifest = suboptimal_pool.manifest;
    d_e.manifest.seeds.push_back(seed);
    d_o.manifest.seeds.push_back(seed);
    for (int i = 0; i < setting.n_expert_in_E; ++i)
        d_e.append_trajectory(expert_pool, expert_idx[i], Provenance::expert_set);
    for (int i = 0; i < setting.n_expert_in_O; ++i)
        d_o.append_trajectory(expert_pool, expert_idx[setting.n_expert_in_E + i],
                              Provenance::aux_expert);
    for (std::size_t i = 0; i < sub_idx.size(); ++i)
        d_o.append_trajectory(suboptimal_pool, sub_idx[i], Provenance::aux_suboptimal);
    return {std::move(d_e), std::move(d_o)};
}

// Training batch: first `half` columns drawn from D_E, the rest from D_O.
struct Batch {
    MatrixXd s, a, s_next;
    VectorXd done;
    VectorXd true_reward;
    int half = 0;

    int size() const { return static_cast<int>(s.cols()); }
    bool is_expert_origin(int col) const { return col < half; }
};

inline Batch sample_batch(const TransitionSet& d_e, const TransitionSet& d_o,
                          int batch_size, Rng& rng) {
    if (d_e.size() == 0 || d_o.size() == 0)
        throw ConfigError("sample_batch: empty transition set");
    if (batch_size <= 0 || batch_size % 2 != 0)
        throw ConfigError("sample_batch: batch_size must be positive and even");
    const int half = batch_size / 2;
    const auto& spec = d_e.manifest.spec;
    Batch b;
    b.half = half;
    b.s = MatrixXd(spec.state_dim, batch_size);
    b.a = MatrixXd(spec.action_dim, batch_size);
    b.s_next = MatrixXd(spec.state_dim, batch_size);
    b.done = VectorXd(batch_size);
    b.true_reward = VectorXd(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const auto& set = i < half ? d_e : d_o;
        const auto& t = set.transitions[rng.index(set.size())];
        b.s.col(i) = t.s;
        b.a.col(i) = t.a;
        b.s_next.col(i) = t.s_next;
        b.done(i) = t.done ? 1.0 : 0.0;
        b.true_reward(i) = t.true_reward;
    }
    return b;
}

// ---- .tset serialization ---------------------------------------------------

inline void tc_write(std::ostream& os, const VectorXd& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * 8));
}

inline void save_dataset(const TransitionSet& set, std::ostream& os) {
    nlohmann::json m;
    m["env"] = envs::env_name(set.manifest.spec);
    m["state_dim"] = set.manifest.spec.state_dim;
    m["action_dim"] = set.manifest.spec.action_dim;
    m["horizon"] = set.manifest.spec.horizon;
    m["anchors"] = {{"expert_return", set.manifest.anchors.expert_return},
                    {"random_return", set.manifest.anchors.random_return}};
    m["seeds"] = set.manifest.seeds;
    m["trajectory_offsets"] = set.trajectory_offsets;
    std::vector<std::string> prov;
    for (auto p : set.provenance) prov.emplace_back(provenance_name(p));
    m["provenance"] = prov;
    m["n_transitions"] = set.size();
    os << m.dump() << "\n";
    for (const auto& t : set.transitions) {
        tc_write(os, t.s);
        tc_write(os, t.a);
        tc_write(os, t.s_next);
        const double d = t.done ? 1.0 : 0.0;
        os.write(reinterpret_cast<const char*>(&d), 8);
        os.write(reinterpret_cast<const char*>(&t.true_reward), 8);
    }
}

inline TransitionSet load_dataset(std::istream& is) {
    std::string header;
    if (!std::getline(is, header))
        throw ParseError("dataset: missing manifest line at byte 0");
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("dataset: malformed manifest: ") + e.what());
    }
    TransitionSet set;
    set.manifest.spec = envs::env_by_name(m.at("env").get<std::string>());
    if (m.at("state_dim").get<int>() != set.manifest.spec.state_dim ||
        m.at("action_dim").get<int>() != set.manifest.spec.action_dim)
        throw ParseError("dataset: manifest dims disagree with environment '" +
                         m.at("env").get<std::string>() + "'");
    set.manifest.anchors.expert_return = m.at("anchors").at("expert_return").get<double>();
    set.manifest.anchors.random_return = m.at("anchors").at("random_return").get<double>();
    set.manifest.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    set.trajectory_offsets = m.at("trajectory_offsets").get<std::vector<std::size_t>>();
    for (const auto& p : m.at("provenance"))
        set.provenance.push_back(provenance_from_name(p.get<std::string>()));
    const auto n = m.at("n_transitions").get<std::size_t>();
    if (!set.trajectory_offsets.empty() && set.trajectory_offsets.back() != n)
        throw IntegrityError("dataset: trajectory offsets do not cover body");
    if (set.provenance.size() != set.trajectory_offsets.size())
        throw IntegrityError("dataset: provenance/trajectory count mismatch");

    const int sd = set.manifest.spec.state_dim, ad = set.manifest.spec.action_dim;
    const std::size_t rec = static_cast<std::size_t>(2 * sd + ad + 2);
    std::vector<double> buf(rec);
    set.transitions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(rec * 8));
        if (!is)
            throw IntegrityError("dataset: truncated body at record " +
                                 std::to_string(i) + " (byte offset " +
                                 std::to_string(header.size() + 1 + i * rec * 8) + ")");
        Transition t;
        t.s = Eigen::Map<const VectorXd>(buf.data(), sd);
        t.a = Eigen::Map<const VectorXd>(buf.data() + sd, ad);
        t.s_next = Eigen::Map<const VectorXd>(buf.data() + sd + ad, sd);
        t.done = buf[rec - 2] != 0.0;
        t.true_reward = buf[rec - 1];
        set.transitions.push_back(std::move(t));
    }
    return set;
}

inline void save_dataset_file(const TransitionSet& set, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for write: " + path);
    save_dataset(set, os);
}

inline TransitionSet load_dataset_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open for read: " + path);
    return load_dataset(is);
}

}  // namespace roida::data
