#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "roida/agent.hpp"
#include "roida/common.hpp"
#include "roida/reward.hpp"
#include "roida/tensorcore.hpp"

// Gradient oracle: every analytic gradient in the reward/agent losses is
// checked against central finite differences (h = 1e-5) on random small
// models. Sampled points sitting on a ReLU kink or a clip/min boundary are
// rejected and redrawn.
namespace roida::selftest {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Smallest |pre-activation| across hidden ReLU layers; used to reject samples
// where finite differences would straddle the kink.
inline double min_relu_margin(const tc::MlpModel& m, const MatrixXd& X) {
    double margin = 1e300;
    MatrixXd h = X;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        MatrixXd z = (m.layers[i].W * h).colwise() + m.layers[i].b;
        if (i + 1 < m.layers.size()) {
            margin = std::min(margin, z.array().abs().minCoeff());
            h = z.array().max(0.0).matrix();
        }
    }
    return margin;
}

inline constexpr double kKinkMargin = 1e-4;

struct LossCheck {
    std::string name;
    int trials = 0;
    int resamples = 0;
    double max_rel_error = 0.0;
    bool pass = false;
};

struct Report {
    std::vector<LossCheck> losses;
    double max_rel_error = 0.0;
    bool pass = false;
};

namespace detail {

inline tc::MlpModel random_net(Rng& rng, int in, int out, tc::Activation act) {
    const int depth = 2 + static_cast<int>(rng.index(3));  // 2-4 weight layers
    const int width = 4 + static_cast<int>(rng.index(9));  // 4-12 (<= 32)
    std::vector<int> dims{in};
    for (int i = 0; i < depth - 1; ++i) dims.push_back(width);
    dims.push_back(out);
    return tc::make_mlp(dims, act, rng);
}

inline MatrixXd random_batch(Rng& rng, int rows, int cols, double lo, double hi) {
    MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
    return m;
}

}  // namespace detail

// Eq.-1 loss through the discriminator.
inline LossCheck check_pu_loss(int trials, std::uint64_t seed, double tol) {
    LossCheck out{"pu_loss", trials};
    Rng rng(mix_seed(seed, 0x9e1));
    const int n = 6;
    for (int t = 0; t < trials; ++t) {
        tc::MlpModel net;
        MatrixXd x;
        for (;;) {
            net = detail::random_net(rng, 3, 1, tc::Activation::sigmoid);
            x = detail::random_batch(rng, 3, 2 * n, -2.0, 2.0);
            const MatrixXd d = tc::mlp_forward(net, x);
            if (min_relu_margin(net, x) > kKinkMargin && d.minCoeff() > 0.02 &&
                d.maxCoeff() < 0.98)
                break;
            ++out.resamples;
        }
        const double eta = rng.uniform(0.2, 0.8);
        const MatrixXd d = tc::mlp_forward(net, x);
        const VectorXd d_e = d.leftCols(n).transpose();
        const VectorXd d_o = d.rightCols(n).transpose();
        const auto lg = reward::pu_loss_with_grads(d_e, d_o, eta);
        MatrixXd og(1, 2 * n);
        og.leftCols(n) = lg.d_expert_grad.transpose();
        og.rightCols(n) = lg.d_unlabeled_grad.transpose();
        const auto analytic = tc::mlp_backward(net, x, og);
        auto loss = [&](const tc::MlpModel& m) {
            const MatrixXd dd = tc::mlp_forward(m, x);
            return reward::pu_loss(dd.leftCols(n).transpose(),
                                   dd.rightCols(n).transpose(), eta);
        };
        const auto res = tc::grad_check(net, loss, analytic, tol);
        out.max_rel_error = std::max(out.max_rel_error, res.max_rel_error);
    }
    out.pass = out.max_rel_error < tol;
    return out;
}

// Masked reward-weighted BC term w.r.t. the policy mean network.
inline LossCheck check_weighted_bc(int trials, std::uint64_t seed, double tol) {
    LossCheck out{"weighted_bc", trials};
    Rng rng(mix_seed(seed, 0x9e2));
    const int sd = 2, ad = 2, n = 6;
    const double tau = 1.0;
    for (int t = 0; t < trials; ++t) {
        agent::GaussianPolicy p;
        MatrixXd s;
        for (;;) {
            p.mean_net = detail::random_net(rng, sd, ad, tc::Activation::tanh_act);
            s = detail::random_batch(rng, sd, n, -2.0, 2.0);
            if (min_relu_margin(p.mean_net, s) > kKinkMargin) break;
            ++out.resamples;
        }
        p.action_bound = 1.0;
        p.log_std = VectorXd(ad);
        for (int i = 0; i < ad; ++i) p.log_std(i) = rng.uniform(-1.0, 0.5);
        const MatrixXd a = detail::random_batch(rng, ad, n, -1.0, 1.0);
        VectorXd r(n), w(n);
        for (int j = 0; j < n; ++j) {
            r(j) = rng.uniform(-2.2, 2.2);
            w(j) = r(j) * reward::filter_mask(r(j), tau) / n;
        }
        const MatrixXd mean_out = tc::mlp_forward(p.mean_net, s);
        const MatrixXd mu = p.action_bound * mean_out;
        const auto g = agent::detail::weighted_nll_grad(p, mu, a, w);
        const auto analytic = tc::mlp_backward(p.mean_net, s, g.mean_out_grad);
        auto loss = [&](const tc::MlpModel& m) {
            agent::GaussianPolicy q = p;
            q.mean_net = m;
            double total = 0.0;
            for (int j = 0; j < n; ++j)
                total += w(j) * -agent::policy_log_prob(q, s.col(j), a.col(j));
            return total;
        };
        const auto res = tc::grad_check(p.mean_net, loss, analytic, tol);
        out.max_rel_error = std::max(out.max_rel_error, res.max_rel_error);
    }
    out.pass = out.max_rel_error < tol;
    return out;
}

// TD regression loss against fixed targets, w.r.t. the critic.
inline LossCheck check_critic_loss(int trials, std::uint64_t seed, double tol) {
    LossCheck out{"critic_loss", trials};
    Rng rng(mix_seed(seed, 0x9e3));
    const int sd = 2, ad = 1, n = 6;
    for (int t = 0; t < trials; ++t) {
        tc::MlpModel q;
        MatrixXd x;
        for (;;) {
            q = detail::random_net(rng, sd + ad, 1, tc::Activation::identity);
            x = detail::random_batch(rng, sd + ad, n, -2.0, 2.0);
            if (min_relu_margin(q, x) > kKinkMargin) break;
            ++out.resamples;
        }
        VectorXd y(n);
        for (int j = 0; j < n; ++j) y(j) = rng.uniform(-3.0, 3.0);
        const MatrixXd qv = tc::mlp_forward(q, x);
        const MatrixXd og = 2.0 / n * (qv.row(0) - y.transpose());
        const auto analytic = tc::mlp_backward(q, x, og);
        auto loss = [&](const tc::MlpModel& m) {
            const MatrixXd v = tc::mlp_forward(m, x);
            return (v.row(0).transpose() - y).squaredNorm() / n;
        };
        const auto res = tc::grad_check(q, loss, analytic, tol);
        out.max_rel_error = std::max(out.max_rel_error, res.max_rel_error);
    }
    out.pass = out.max_rel_error < tol;
    return out;
}

// Full three-term policy objective w.r.t. the policy mean network, with
// alpha/beta frozen at their base-point values.
inline LossCheck check_combined_objective(int trials, std::uint64_t seed, double tol) {
    LossCheck out{"combined_objective", trials};
    Rng rng(mix_seed(seed, 0x9e4));
    const int sd = 2, ad = 2, n = 8, half = 4;
    agent::TrainConfig cfg;
    for (int t = 0; t < trials; ++t) {
        agent::GaussianPolicy p;
        agent::CriticPair critics;
        data::Batch b;
        b.half = half;
        for (;;) {
            p.mean_net = detail::random_net(rng, sd, ad, tc::Activation::tanh_act);
            critics.q1 = detail::random_net(rng, sd + ad, 1, tc::Activation::identity);
            critics.q2 = detail::random_net(rng, sd + ad, 1, tc::Activation::identity);
            b.s = detail::random_batch(rng, sd, n, -2.0, 2.0);
            b.a = detail::random_batch(rng, ad, n, -1.0, 1.0);
            p.action_bound = 1.0;
            const MatrixXd pi_s = p.action_bound * tc::mlp_forward(p.mean_net, b.s);
            const MatrixXd x = reward::concat_sa(b.s, pi_s);
            const MatrixXd q1 = tc::mlp_forward(critics.q1, x);
            const MatrixXd q2 = tc::mlp_forward(critics.q2, x);
            // critic inputs move with the policy parameters, so boundaries on
            // the critic side need a wider berth than direct-parameter kinks
            if (min_relu_margin(p.mean_net, b.s) > kKinkMargin &&
                min_relu_margin(critics.q1, x) > 1e-3 &&
                min_relu_margin(critics.q2, x) > 1e-3 &&
                (q1 - q2).array().abs().minCoeff() > 1e-3)
                break;
            ++out.resamples;
        }
        p.log_std = VectorXd(ad);
        for (int i = 0; i < ad; ++i) p.log_std(i) = rng.uniform(-1.0, 0.5);
        agent::BatchRewards br;
        br.tau = cfg.tau_threshold;
        br.r = VectorXd(n);
        for (int j = 0; j < n; ++j) br.r(j) = rng.uniform(-2.2, 2.2);

        const auto pg = agent::policy_objective_grads(p, critics, b, br, cfg);
        const double alpha = pg.objective.alpha, beta = pg.objective.beta;
        auto loss = [&](const tc::MlpModel& m) {
            agent::GaussianPolicy q = p;
            q.mean_net = m;
            double l1 = 0.0, l2 = 0.0, l3 = 0.0;
            for (int j = 0; j < half; ++j)
                l1 += -agent::policy_log_prob(q, b.s.col(j), b.a.col(j)) / half;
            for (int j = half; j < n; ++j)
                l2 += -agent::policy_log_prob(q, b.s.col(j), b.a.col(j)) * br.r(j) *
                      reward::filter_mask(br.r(j), br.tau) / (n - half);
            const MatrixXd pi_s = q.action_bound * tc::mlp_forward(q.mean_net, b.s);
            const VectorXd qmin = agent::min_q(critics, b.s, pi_s, false);
            l3 = -qmin.mean();
            return l1 + alpha * l2 + beta * l3;
        };
        const auto res = tc::grad_check(p.mean_net, loss, pg.mean_net, tol);
        out.max_rel_error = std::max(out.max_rel_error, res.max_rel_error);
    }
    out.pass = out.max_rel_error < tol;
    return out;
}

inline Report run_gradient_selftest(int trials_per_loss = 100, std::uint64_t seed = 7,
                                    double tol = 1e-4) {
    Report rep;
    rep.losses.push_back(check_pu_loss(trials_per_loss, seed, tol));
    rep.losses.push_back(check_weighted_bc(trials_per_loss, seed, tol));
    rep.losses.push_back(check_critic_loss(trials_per_loss, seed, tol));
    rep.losses.push_back(check_combined_objective(trials_per_loss, seed, tol));
    rep.pass = true;
    for (const auto& l : rep.losses) {
        rep.max_rel_error = std::max(rep.max_rel_error, l.max_rel_error);
        rep.pass = rep.pass && l.pass;
    }
    return rep;
}

}  // namespace roida::selftest
