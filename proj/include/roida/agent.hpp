#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "roida/common.hpp"
#include "roida/data.hpp"
#include "roida/envs.hpp"
#include "roida/reward.hpp"
#include "roida/tensorcore.hpp"

// Policy/critic definitions, the three-term policy objective with dynamic
// alpha/beta scaling, Bellman targets with Polyak-averaged twin target
// critics, and the full training loop with all ablation switches.
namespace roida::agent {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- policy ----------------------------------------------------------------

struct GaussianPolicy {
    tc::MlpModel mean_net;  // tanh output, scaled by action_bound
    VectorXd log_std;       // state-independent, clamped to [-5, 2]
    double action_bound = 1.0;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

inline MatrixXd policy_mean(const GaussianPolicy& p, const MatrixXd& states) {
    return p.action_bound * tc::mlp_forward(p.mean_net, states);
}

// Deterministic action (the mean); used for Q(s, pi(s)) and all evaluations.
inline VectorXd policy_act(const GaussianPolicy& p, const VectorXd& s) {
    return policy_mean(p, MatrixXd(s)).col(0);
}

inline double policy_log_prob(const GaussianPolicy& p, const VectorXd& s,
                              const VectorXd& a) {
    const VectorXd mu = policy_act(p, s);
    double lp = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double sigma = std::exp(p.log_std(i));
        const double z = (a(i) - mu(i)) / sigma;
        lp += -0.5 * std::log(2.0 * M_PI) - p.log_std(i) - 0.5 * z * z;
    }
    return lp;
}

// ---- critics ---------------------------------------------------------------

struct CriticPair {
    tc::MlpModel q1, q2;
    tc::MlpModel q1_target, q2_target;
    double polyak_rho = 0.005;
    bool single = false;  // sensitivity flag: ignore q2 everywhere
};

inline VectorXd critic_values(const tc::MlpModel& q, const MatrixXd& s,
                              const MatrixXd& a) {
    return tc::mlp_forward(q, reward::concat_sa(s, a)).row(0).transpose();
}

inline VectorXd min_q(const CriticPair& c, const MatrixXd& s, const MatrixXd& a,
                      bool use_targets) {
    const VectorXd v1 = critic_values(use_targets ? c.q1_target : c.q1, s, a);
    if (c.single) return v1;
    const VectorXd v2 = critic_values(use_targets ? c.q2_target : c.q2, s, a);
    return v1.cwiseMin(v2);
}

// r~ + gamma*(1-done)*min(Q_target(s', pi(s'))); the expectation over
// pi(a'|s') is realized at the deterministic mean action.
inline VectorXd bellman_targets(const CriticPair& critics, const GaussianPolicy& policy,
                                const VectorXd& rewards, const MatrixXd& s_next,
                                const VectorXd& done, double gamma) {
    const MatrixXd a_next = policy_mean(policy, s_next);
    const VectorXd q_next = min_q(critics, s_next, a_next, /*use_targets=*/true);
    return rewards.array() + gamma * (1.0 - done.array()) * q_next.array();
}

inline double bellman_target(const CriticPair& critics, const GaussianPolicy& policy,
                             double reward, const VectorXd& s_next, bool done,
                             double gamma) {
    VectorXd d(1);
    d(0) = done ? 1.0 : 0.0;
    VectorXd r(1);
    r(0) = reward;
    return bellman_targets(critics, policy, r, MatrixXd(s_next), d, gamma)(0);
}

// MSE against fixed targets, summed over both critics, mean over the batch.
inline double critic_loss(const CriticPair& critics, const MatrixXd& s,
                          const MatrixXd& a, const VectorXd& targets) {
    const VectorXd q1 = critic_values(critics.q1, s, a);
    double loss = (q1 - targets).squaredNorm();
    if (!critics.single) {
        const VectorXd q2 = critic_values(critics.q2, s, a);
        loss += (q2 - targets).squaredNorm();
    }
    return loss / static_cast<double>(targets.size());
}

inline void polyak_update(tc::MlpModel& target, const tc::MlpModel& online, double rho) {
    for (std::size_t i = 0; i < target.layers.size(); ++i) {
        target.layers[i].W = (1.0 - rho) * target.layers[i].W + rho * online.layers[i].W;
        target.layers[i].b = (1.0 - rho) * target.layers[i].b + rho * online.layers[i].b;
    }
}

// ---- configuration ---------------------------------------------------------

enum class Method { roida, bc_exp, bc_all };

enum class RewardMode { learned, raw_discriminator, ground_truth };

struct TrainConfig {
    double gamma = 0.5;
    double tau_threshold = 1.0;
    double eta = 0.5;
    int t_freq = 3;
    int total_steps = 20000;
    int eval_every = 1000;
    int eval_episodes = 10;
    int batch_size = 256;
    double policy_lr = 3e-4;
    double critic_lr = 3e-4;
    double disc_lr = 1e-4;
    int disc_steps = 5000;
    double policy_weight_decay = 0.005;
    double base_alpha = 0.01;
    double base_beta = 0.01;
    double loss_ratio_damp = 7.5;
    double polyak_rho = 0.005;
    int policy_hidden = 256;   // 3-layer MLP
    int critic_hidden = 256;   // 3-layer MLP
    int disc_hidden = 128;     // 4-layer MLP
    Method method = Method::roida;
    // ablation switches
    bool no_weighted_bc = false;             // force alpha = 0
    bool raw_discriminator_reward = false;   // r~ = clipped d, threshold 0.5
    bool binary_classifier_discriminator = false;
    bool gt_rewards = false;
    bool no_td = false;                      // force beta = 0, skip critic
    bool single_critic = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma outside [0,1]");
        if (t_freq < 1) throw ConfigError("t_freq must be >= 1");
        if (gt_rewards && raw_discriminator_reward)
            throw UsageError("gt_rewards and raw_discriminator_reward are exclusive");
        if (gt_rewards && binary_classifier_discriminator)
            throw UsageError("gt_rewards and binary_classifier_discriminator are exclusive");
        if (total_steps < eval_every * 10)
            throw ConfigError("need at least 10 evaluations: total_steps >= 10*eval_every");
    }

    RewardMode reward_mode() const {
        if (gt_rewards) return RewardMode::ground_truth;
        if (raw_discriminator_reward) return RewardMode::raw_discriminator;
        return RewardMode::learned;
    }
};

// alpha = base*(l1/l2)/damp, beta = base*(l1/l3)/damp; absolute values in the
// ratios, zero guards on tiny denominators. Treated as constants (no gradient).
inline std::pair<double, double> dynamic_scaling(double l1, double l2, double l3,
                                                 const TrainConfig& cfg) {
    if (!std::isfinite(l1) || !std::isfinite(l2) || !std::isfinite(l3))
        throw TrainingError("dynamic_scaling: non-finite loss term");
    const double a = std::abs(l2) < 1e-8
                         ? 0.0
                         : cfg.base_alpha * (std::abs(l1) / std::abs(l2)) /
                               cfg.loss_ratio_damp;
    const double b = std::abs(l3) < 1e-8
                         ? 0.0
                         : cfg.base_beta * (std::abs(l1) / std::abs(l3)) /
                               cfg.loss_ratio_damp;
    return {a, b};
}

// ---- reward dispatch -------------------------------------------------------

// Per-mode r~ for a sampled batch, plus the mask threshold in effect.
struct BatchRewards {
    VectorXd r;     // r~ per column
    double tau;     // mask threshold for the weighted-BC term
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median of empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double gt_mask_threshold(const data::TransitionSet& d_e) {
    std::vector<double> r;
    r.reserve(d_e.size());
    for (const auto& t : d_e.transitions) r.push_back(t.true_reward);
    return median(std::move(r));
}

inline BatchRewards batch_rewards(const TrainConfig& cfg,
                                  const reward::RewardModel& model,
                                  const data::Batch& b, double tau_gt) {
    BatchRewards out;
    switch (cfg.reward_mode()) {
        case RewardMode::learned:
            out.r = reward::estimate_rewards(model, b);
            out.tau = cfg.tau_threshold;
            break;
        case RewardMode::raw_discriminator:
            out.r = reward::clipped_d_values(model, b);
            out.tau = 0.5;  // midpoint of the raw d range
            break;
        case RewardMode::ground_truth:
            out.r = b.true_reward;
            out.tau = tau_gt;
            break;
    }
    return out;
}

// Scalar dispatch for a single transition (see the batched form above).
inline double reward_mode_dispatch(const TrainConfig& cfg,
                                   const reward::RewardModel& model,
                                   const data::Transition& t, reward::Origin origin) {
    switch (cfg.reward_mode()) {
        case RewardMode::learned:
            return reward::estimate_reward(model, t.s, t.a, origin);
        case RewardMode::raw_discriminator: {
            if (origin == reward::Origin::E) return model.expert_d_value;
            const double raw = tc::mlp_forward(model.discriminator.net,
                                               reward::concat_sa(MatrixXd(t.s),
                                                                 MatrixXd(t.a)))(0, 0);
            return std::clamp(raw, model.discriminator.clip_lo,
                              model.discriminator.clip_hi);
        }
        case RewardMode::ground_truth:
            return t.true_reward;
    }
    throw ConfigError("reward_mode_dispatch: bad mode");
}

// ---- policy objective ------------------------------------------------------

struct PolicyObjective {
    double total;
    double lambda1;  // BC on the expert half
    double lambda2;  // masked reward-weighted BC on the auxiliary half
    double lambda3;  // -min Q(s, pi(s)) over the full batch
    double alpha;
    double beta;
};

namespace detail {

// Gradient of sum_j w_j * (-log pi(a_j|s_j)) w.r.t. the mean-net output and
// log_std, given per-column weights w.
struct NllGrad {
    MatrixXd mean_out_grad;  // w.r.t. the tanh output of mean_net
    VectorXd log_std_grad;
};

inline NllGrad weighted_nll_grad(const GaussianPolicy& p, const MatrixXd& mu,
                                 const MatrixXd& a, const VectorXd& w) {
    NllGrad g;
    const int dim = static_cast<int>(a.rows());
    g.mean_out_grad = MatrixXd::Zero(dim, a.cols());
    g.log_std_grad = VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) {
        const double sigma = std::exp(p.log_std(i));
        const auto z = (a.row(i).array() - mu.row(i).array()) / sigma;
        // d(-log pi)/d mu_i = -(a-mu)/sigma^2 ; chain mu = bound * tanh_out
        g.mean_out_grad.row(i) =
            (w.transpose().array() * (-z / sigma) * p.action_bound).matrix();
        g.log_std_grad(i) = (w.transpose().array() * (1.0 - z.square())).sum();
    }
    return g;
}

}  // namespace detail

struct PolicyGradients {
    tc::Gradients mean_net;
    VectorXd log_std;
    PolicyObjective objective;
};

// Computes Eq.-6-style total = l1 + alpha*l2 + beta*l3 and its gradient
// w.r.t. the policy parameters. Critic parameters are frozen here.
inline PolicyGradients policy_objective_grads(const GaussianPolicy& policy,
                                              const CriticPair& critics,
                                              const data::Batch& b,
                                              const BatchRewards& br,
                                              const TrainConfig& cfg) {
    const int n = b.size();
    const int half = b.half;
    const int n_o = n - half;
    PolicyGradients out;

    const MatrixXd mean_out = tc::mlp_forward(policy.mean_net, b.s);
    const MatrixXd mu = policy.action_bound * mean_out;

    // per-sample -log pi(a|s)
    VectorXd nll = VectorXd::Zero(n);
    for (int i = 0; i < mu.rows(); ++i) {
        const double sigma = std::exp(policy.log_std(i));
        const auto z = (b.a.row(i).array() - mu.row(i).array()) / sigma;
        nll.array() += (0.5 * std::log(2.0 * M_PI) + policy.log_std(i) +
                        0.5 * z.square())
                           .transpose();
    }

    const double l1 = nll.head(half).mean();
    VectorXd w = VectorXd::Zero(n);
    w.head(half).setConstant(1.0 / static_cast<double>(half));  // lambda1 weights

    double l2 = 0.0;
    if (n_o > 0) {
        for (int j = half; j < n; ++j)
            l2 += nll(j) * br.r(j) * reward::filter_mask(br.r(j), br.tau);
        l2 /= static_cast<double>(n_o);
    }

    // lambda3 and its gradient through the active critic's action input
    const MatrixXd pi_s = policy.action_bound * mean_out;
    double l3 = 0.0;
    MatrixXd dq_da = MatrixXd::Zero(mu.rows(), n);
    const bool use_q = !cfg.no_td && cfg.method == Method::roida;
    if (use_q) {
        const MatrixXd x = reward::concat_sa(b.s, pi_s);
        const MatrixXd q1 = tc::mlp_forward(critics.q1, x);
        MatrixXd q2;
        if (!critics.single) q2 = tc::mlp_forward(critics.q2, x);
        VectorXd qmin(n);
        std::vector<int> active(n, 0);
        for (int j = 0; j < n; ++j) {
            if (critics.single || q1(0, j) <= q2(0, j)) {
                qmin(j) = q1(0, j);
            } else {
                qmin(j) = q2(0, j);
                active[j] = 1;
            }
        }
        l3 = -qmin.mean();
        // input gradients of the active critic per column
        for (int k = 0; k < (critics.single ? 1 : 2); ++k) {
            MatrixXd og = MatrixXd::Zero(1, n);
            bool any = false;
            for (int j = 0; j < n; ++j)
                if (active[j] == k) {
                    og(0, j) = -1.0 / static_cast<double>(n);
                    any = true;
                }
            if (!any) continue;
            MatrixXd in_grad;
            tc::mlp_backward(k == 0 ? critics.q1 : critics.q2, x, og, &in_grad);
            dq_da += in_grad.bottomRows(mu.rows());
        }
    }

    auto [alpha, beta] = dynamic_scaling(l1, l2, l3, cfg);
    if (cfg.no_weighted_bc) alpha = 0.0;
    if (cfg.no_td) beta = 0.0;
    if (cfg.method == Method::bc_exp || cfg.method == Method::bc_all) {
        alpha = 0.0;
        beta = 0.0;
    }

    // weighted-BC weights on the auxiliary half
    if (alpha != 0.0) {
        for (int j = half; j < n; ++j)
            w(j) = alpha * br.r(j) * reward::filter_mask(br.r(j), br.tau) /
                   static_cast<double>(n_o);
    }

    auto nllg = detail::weighted_nll_grad(policy, mu, b.a, w);
    if (beta != 0.0)
        nllg.mean_out_grad += beta * policy.action_bound * dq_da;

    out.mean_net = tc::mlp_backward(policy.mean_net, b.s, nllg.mean_out_grad);
    out.log_std = nllg.log_std_grad;
    out.objective = {l1 + alpha * l2 + beta * l3, l1, l2, l3, alpha, beta};
    return out;
}

inline PolicyObjective policy_objective(const GaussianPolicy& policy,
                                        const CriticPair& critics,
                                        const data::Batch& b, const BatchRewards& br,
                                        const TrainConfig& cfg) {
    return policy_objective_grads(policy, critics, b, br, cfg).objective;
}

// ---- training loop ---------------------------------------------------------

struct LogRow {
    int step;
    double lambda1, lambda2, lambda3;
    double alpha, beta;
    double critic_loss;
    double eval_score;
};

struct TrainResult {
    GaussianPolicy policy;
    std::optional<CriticPair> critics;
    std::optional<reward::RewardModel> reward_model;
    std::vector<LogRow> log;
    std::vector<double> eval_curve;  // mean normalized score per checkpoint
};

inline double evaluate_policy(const GaussianPolicy& policy, const envs::EnvSpec& spec,
                              const envs::ScoreAnchors& anchors, int episodes,
                              std::uint64_t eval_seed) {
    double sum = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        envs::EnvState st = envs::env_reset(spec, mix_seed(eval_seed, ep));
        double ret = 0.0;
        for (int t = 0; t < spec.horizon; ++t) {
            auto res = envs::env_step(spec, st, policy_act(policy, st.position));
            ret += res.true_reward;
            st = std::move(res.next);
        }
        sum += envs::normalized_score(anchors, ret);
    }
    return sum / episodes;
}

inline GaussianPolicy make_policy(const envs::EnvSpec& spec, const TrainConfig& cfg,
                                  Rng& rng) {
    GaussianPolicy p;
    p.mean_net = tc::make_mlp({spec.state_dim, cfg.policy_hidden, cfg.policy_hidden,
                               spec.action_dim},
                              tc::Activation::tanh_act, rng);
    p.log_std = VectorXd::Zero(spec.action_dim);
    p.action_bound = spec.action_bound;
    return p;
}

inline CriticPair make_critics(const envs::EnvSpec& spec, const TrainConfig& cfg,
                               Rng& rng) {
    CriticPair c;
    const std::vector<int> dims{spec.state_dim + spec.action_dim, cfg.critic_hidden,
                                cfg.critic_hidden, 1};
    c.q1 = tc::make_mlp(dims, tc::Activation::identity, rng);
    c.q2 = tc::make_mlp(dims, tc::Activation::identity, rng);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    c.polyak_rho = cfg.polyak_rho;
    c.single = cfg.single_critic;
    return c;
}

// Minimal Adam for the log-std vector (kept out of the weight-decay path).
struct VecAdam {
    VectorXd m, v;
    std::int64_t t = 0;
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    VecAdam(int dim, double lr_) : m(VectorXd::Zero(dim)), v(VectorXd::Zero(dim)), lr(lr_) {}

    void step(VectorXd& theta, const VectorXd& g) {
        ++t;
        m = b1 * m + (1.0 - b1) * g;
        v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        theta -= (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
    }
};

// Uniform draws over D_E u D_O, all columns flagged as the "expert half" so
// plain BC applies unit weights to every sample.
inline data::Batch sample_union_batch(const data::TransitionSet& d_e,
                                      const data::TransitionSet& d_o, int batch_size,
                                      Rng& rng) {
    const auto& spec = d_e.manifest.spec;
    const std::size_t total = d_e.size() + d_o.size();
    data::Batch b;
    b.half = batch_size;
    b.s = MatrixXd(spec.state_dim, batch_size);
    b.a = MatrixXd(spec.action_dim, batch_size);
    b.s_next = MatrixXd(spec.state_dim, batch_size);
    b.done = VectorXd(batch_size);
    b.true_reward = VectorXd(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        std::size_t k = rng.index(total);
        const auto& t = k < d_e.size() ? d_e.transitions[k]
                                       : d_o.transitions[k - d_e.size()];
        b.s.col(i) = t.s;
        b.a.col(i) = t.a;
        b.s_next.col(i) = t.s_next;
        b.done(i) = t.done ? 1.0 : 0.0;
        b.true_reward(i) = t.true_reward;
    }
    return b;
}

// Algorithm: pretrain the discriminator, then T steps of critic TD updates
// with a policy update every t_freq steps, evaluating every eval_every steps.
inline TrainResult train_roida(const data::TransitionSet& d_e,
                               const data::TransitionSet& d_o,
                               const TrainConfig& cfg, const envs::EnvSpec& spec) {
    cfg.validate();
    TrainResult res;
    Rng init_rng(mix_seed(cfg.seed, 0x1417));
    res.policy = make_policy(spec, cfg, init_rng);

    const bool bc_only = cfg.method != Method::roida;
    const bool use_critic = !bc_only && !cfg.no_td;
    const bool use_disc = !bc_only && cfg.reward_mode() != RewardMode::ground_truth;

    if (cfg.gt_rewards) {
        for (const auto& t : d_e.transitions)
            if (!std::isfinite(t.true_reward))
                throw ConfigError("gt_rewards: dataset lacks true rewards");
    }

    reward::RewardModel rm;
    rm.tau = cfg.tau_threshold;
    if (use_disc) {
        reward::DiscTrainConfig dc;
        dc.eta = cfg.eta;
        dc.lr = cfg.disc_lr;
        dc.steps = cfg.disc_steps;
        dc.batch_size = cfg.batch_size;
        dc.hidden = cfg.disc_hidden;
        dc.binary = cfg.binary_classifier_discriminator;
        dc.seed = mix_seed(cfg.seed, 0xd15c0);
        rm.discriminator = reward::train_discriminator(d_e, d_o, dc).discriminator;
        res.reward_model = rm;
    }

    CriticPair critics;
    std::optional<tc::AdamState> adam_q1, adam_q2;
    if (use_critic) {
        critics = make_critics(spec, cfg, init_rng);
        adam_q1 = tc::make_adam(critics.q1, cfg.critic_lr);
        adam_q2 = tc::make_adam(critics.q2, cfg.critic_lr);
    }

    auto adam_policy =
        tc::make_adam(res.policy.mean_net, cfg.policy_lr, cfg.policy_weight_decay);
    VecAdam adam_log_std(spec.action_dim, cfg.policy_lr);

    const double tau_gt = cfg.gt_rewards ? gt_mask_threshold(d_e) : 0.0;
    const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xe7a1);
    Rng batch_rng(mix_seed(cfg.seed, 0xba7c4));

    double last_critic_loss = 0.0;
    PolicyObjective last_obj{0, 0, 0, 0, 0, 0};

    for (int t = 1; t <= cfg.total_steps; ++t) {
        data::Batch b;
        if (cfg.method == Method::bc_exp) {
            b = data::sample_batch(d_e, d_e, cfg.batch_size, batch_rng);
        } else if (cfg.method == Method::bc_all) {
            // plain BC over the union: draws proportional to set sizes
            b = sample_union_batch(d_e, d_o, cfg.batch_size, batch_rng);
        } else {
            b = data::sample_batch(d_e, d_o, cfg.batch_size, batch_rng);
        }

        BatchRewards br;
        if (bc_only) {
            br.r = VectorXd::Zero(b.size());
            br.tau = 0.0;
        } else {
            br = batch_rewards(cfg, rm, b, tau_gt);
        }

        if (use_critic) {
            const VectorXd targets = bellman_targets(critics, res.policy, br.r,
                                                     b.s_next, b.done, cfg.gamma);
            const MatrixXd x = reward::concat_sa(b.s, b.a);
            const double inv_n = 1.0 / static_cast<double>(b.size());
            double closs = 0.0;
            for (int k = 0; k < (critics.single ? 1 : 2); ++k) {
                auto& q = k == 0 ? critics.q1 : critics.q2;
                auto& ad = k == 0 ? *adam_q1 : *adam_q2;
                const MatrixXd qv = tc::mlp_forward(q, x);
                const MatrixXd resid = qv.row(0) - targets.transpose();
                closs += resid.squaredNorm() * inv_n;
                const MatrixXd og = 2.0 * inv_n * resid;
                tc::adam_step(q, ad, tc::mlp_backward(q, x, og));
            }
            if (!std::isfinite(closs))
                throw TrainingError("train_roida: non-finite critic loss at step " +
                                    std::to_string(t));
            last_critic_loss = closs;
            polyak_update(critics.q1_target, critics.q1, critics.polyak_rho);
            if (!critics.single)
                polyak_update(critics.q2_target, critics.q2, critics.polyak_rho);
        }

        if (t % cfg.t_freq == 0) {
            // bc_exp duplicates D_E into both halves; the O-half weights are
            // zero there (alpha forced 0), so only lambda1 acts.
            auto pg = policy_objective_grads(res.policy, critics, b, br, cfg);
            if (!std::isfinite(pg.objective.total))
                throw TrainingError(
                    "train_roida: non-finite policy objective at step " +
                    std::to_string(t) + " (l1=" + std::to_string(pg.objective.lambda1) +
                    " l2=" + std::to_string(pg.objective.lambda2) +
                    " l3=" + std::to_string(pg.objective.lambda3) + ")");
            tc::adam_step(res.policy.mean_net, adam_policy, pg.mean_net);
            adam_log_std.step(res.policy.log_std, pg.log_std);
            for (int i = 0; i < res.policy.log_std.size(); ++i)
                res.policy.log_std(i) =
                    std::clamp(res.policy.log_std(i), kLogStdMin, kLogStdMax);
            last_obj = pg.objective;
        }

        if (t % cfg.eval_every == 0) {
            const double score =
                evaluate_policy(res.policy, spec, d_e.manifest.anchors,
                                cfg.eval_episodes, eval_seed);
            res.eval_curve.push_back(score);
            res.log.push_back({t, last_obj.lambda1, last_obj.lambda2,
                               last_obj.lambda3, last_obj.alpha, last_obj.beta,
                               last_critic_loss, score});
        }
    }

    if (use_critic) res.critics = critics;
    return res;
}

}  // namespace roida::agent
