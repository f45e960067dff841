#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "roida/common.hpp"

// Deterministic toy continuous-control MDPs with known true rewards and a
// scripted optimal expert. Both tasks reward -distance-to-origin so expert
// states concentrate near the origin.
namespace roida::envs {

using Eigen::VectorXd;

enum class EnvName { lineworld1d, pointmass2d };

struct EnvSpec {
    EnvName name;
    int state_dim;
    int action_dim;
    int horizon;
    double action_bound;  // = 1.0
    double state_bound;
};

inline EnvSpec lineworld1d() { return {EnvName::lineworld1d, 1, 1, 30, 1.0, 10.0}; }
inline EnvSpec pointmass2d() { return {EnvName::pointmass2d, 2, 2, 50, 1.0, 5.0}; }

inline EnvSpec env_by_name(const std::string& s) {
    if (s == "lineworld1d") return lineworld1d();
    if (s == "pointmass2d") return pointmass2d();
    throw ConfigError("unknown environment: " + s);
}

inline std::string env_name(const EnvSpec& s) {
    return s.name == EnvName::lineworld1d ? "lineworld1d" : "pointmass2d";
}

struct EnvState {
    VectorXd position;
    int step_index = 0;
};

struct ScoreAnchors {
    double expert_return;
    double random_return;
};

inline EnvState env_reset(const EnvSpec& spec, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    EnvState st;
    st.position = VectorXd(spec.state_dim);
    st.step_index = 0;
    if (spec.name == EnvName::lineworld1d) {
        // x ~ Uniform[-10,-2] U [2,10]
        const double mag = rng.uniform(2.0, 10.0);
        st.position(0) = rng.unit() < 0.5 ? -mag : mag;
    } else {
        // p uniform (by area) on the annulus 2 <= |p| <= 5
        const double r = std::sqrt(rng.uniform(4.0, 25.0));
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        st.position(0) = r * std::cos(theta);
        st.position(1) = r * std::sin(theta);
    }
    return st;
}

struct StepResult {
    EnvState next;
    double true_reward;
    bool done;
};

inline StepResult env_step(const EnvSpec& spec, const EnvState& state,
                           const VectorXd& action) {
    if (state.step_index >= spec.horizon)
        throw UsageError("env_step: episode already done");
    StepResult out;
    out.next.position = VectorXd(spec.state_dim);
    for (int i = 0; i < spec.state_dim; ++i) {
        const double a = std::clamp(action(i), -spec.action_bound, spec.action_bound);
        out.next.position(i) =
            std::clamp(state.position(i) + a, -spec.state_bound, spec.state_bound);
    }
    out.next.step_index = state.step_index + 1;
    out.true_reward = -out.next.position.norm();
    out.done = out.next.step_index == spec.horizon;
    return out;
}

// Optimal controller for these dynamics: step straight toward the origin.
inline VectorXd expert_action(const EnvSpec& spec, const EnvState& state) {
    VectorXd a(spec.action_dim);
    for (int i = 0; i < spec.action_dim; ++i)
        a(i) = std::clamp(-state.position(i), -spec.action_bound, spec.action_bound);
    return a;
}

inline double normalized_score(const ScoreAnchors& anchors, double return_) {
    if (anchors.expert_return == anchors.random_return)
        throw ConfigError("normalized_score: degenerate anchors");
    return 100.0 * (return_ - anchors.random_return) /
           (anchors.expert_return - anchors.random_return);
}

enum class BehaviorPolicy { expert, random, epsilon_expert };

inline VectorXd behavior_action(const EnvSpec& spec, BehaviorPolicy kind,
                                const EnvState& state, Rng& rng, double epsilon) {
    switch (kind) {
        case BehaviorPolicy::expert: return expert_action(spec, state);
        case BehaviorPolicy::random: {
            VectorXd a(spec.action_dim);
            for (int i = 0; i < spec.action_dim; ++i)
                a(i) = rng.uniform(-spec.action_bound, spec.action_bound);
            return a;
        }
        case BehaviorPolicy::epsilon_expert: {
            if (rng.unit() < epsilon) {
                VectorXd a(spec.action_dim);
                for (int i = 0; i < spec.action_dim; ++i)
                    a(i) = rng.uniform(-spec.action_bound, spec.action_bound);
                return a;
            }
            return expert_action(spec, state);
        }
    }
    throw ConfigError("behavior_action: bad policy");
}

// Undiscounted true-reward return of one scripted episode.
inline double rollout_return(const EnvSpec& spec, BehaviorPolicy kind,
                             std::uint64_t seed, double epsilon = 0.3) {
    EnvState st = env_reset(spec, seed);
    Rng rng(mix_seed(seed, 0x5eed));
    double total = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
        auto res = env_step(spec, st, behavior_action(spec, kind, st, rng, epsilon));
        total += res.true_reward;
        st = std::move(res.next);
    }
    return total;
}

// Anchors computed once per environment, seed-fixed, 1000 episodes each.
inline ScoreAnchors compute_anchors(const EnvSpec& spec, int episodes = 1000,
                                    std::uint64_t seed = 0xa5c0) {
    double exp_sum = 0.0, rnd_sum = 0.0;
    for (int i = 0; i < episodes; ++i) {
        exp_sum += rollout_return(spec, BehaviorPolicy::expert, mix_seed(seed, i));
        rnd_sum += rollout_return(spec, BehaviorPolicy::random,
                                  mix_seed(seed, 100000 + i));
    }
    return {exp_sum / episodes, rnd_sum / episodes};
}

}  // namespace roida::envs
