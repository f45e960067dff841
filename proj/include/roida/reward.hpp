#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "roida/common.hpp"
#include "roida/data.hpp"
#include "roida/tensorcore.hpp"

// PU-learned discriminator and the DICE-style reward ln(d/(1-d)) with
// clipping. The discriminator is pretrained to a fixed budget and frozen
// before policy learning starts.
namespace roida::reward {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Discriminator {
    tc::MlpModel net;  // sigmoid output over [s|a]
    double clip_lo = 0.1;
    double clip_hi = 0.9;
    double eta = 0.5;  // positive class prior
};

struct RewardModel {
    Discriminator discriminator;
    double expert_d_value = 0.9;  // all D_E samples use this d unconditionally
    double tau = 1.0;             // threshold for the weighted-BC mask
};

// Non-negative PU risk, max replaced by softplus:
//   eta*mean(-ln d_E) + softplus( mean(-ln(1-d_O)) - eta*mean(-ln(1-d_E)) )
// Inputs are raw (unclipped) discriminator outputs.
inline double pu_loss(const VectorXd& d_expert, const VectorXd& d_unlabeled,
                      double eta) {
    if (d_expert.size() == 0 || d_unlabeled.size() == 0)
        throw ConfigError("pu_loss: empty batch");
    auto check = [](const VectorXd& v) {
        for (int i = 0; i < v.size(); ++i)
            if (!(v(i) > 0.0 && v(i) < 1.0))
                throw NumericDomainError("pu_loss: d outside (0,1)");
    };
    check(d_expert);
    check(d_unlabeled);
    const double pos_risk = -d_expert.array().log().mean();
    const double neg_on_expert = -(1.0 - d_expert.array()).log().mean();
    const double neg_on_unlabeled = -(1.0 - d_unlabeled.array()).log().mean();
    return eta * pos_risk + tc::softplus(neg_on_unlabeled - eta * neg_on_expert);
}

struct PuLossGrads {
    double loss;
    VectorXd d_expert_grad;    // dL/dd per expert sample
    VectorXd d_unlabeled_grad; // dL/dd per unlabeled sample
};

inline PuLossGrads pu_loss_with_grads(const VectorXd& d_expert,
                                      const VectorXd& d_unlabeled, double eta) {
    PuLossGrads out;
    out.loss = pu_loss(d_expert, d_unlabeled, eta);
    const double n_e = static_cast<double>(d_expert.size());
    const double n_o = static_cast<double>(d_unlabeled.size());
    const double neg_on_expert = -(1.0 - d_expert.array()).log().mean();
    const double neg_on_unlabeled = -(1.0 - d_unlabeled.array()).log().mean();
    const double sp_grad = tc::sigmoid(neg_on_unlabeled - eta * neg_on_expert);
    // d(-ln d)/dd = -1/d ; d(-ln(1-d))/dd = 1/(1-d)
    out.d_expert_grad = (eta * (-1.0 / d_expert.array()) / n_e +
                         sp_grad * (-eta) * (1.0 / (1.0 - d_expert.array())) / n_e)
                            .matrix();
    out.d_unlabeled_grad =
        (sp_grad * (1.0 / (1.0 - d_unlabeled.array())) / n_o).matrix();
    return out;
}

// Plain binary classification loss (all of D_O treated as negatives); the
// "w/o PU learning" ablation.
inline PuLossGrads binary_loss_with_grads(const VectorXd& d_expert,
                                          const VectorXd& d_unlabeled) {
    PuLossGrads out;
    const double n_e = static_cast<double>(d_expert.size());
    const double n_o = static_cast<double>(d_unlabeled.size());
    out.loss = -d_expert.array().log().mean() -
               (1.0 - d_unlabeled.array()).log().mean();
    out.d_expert_grad = ((-1.0 / d_expert.array()) / n_e).matrix();
    out.d_unlabeled_grad = ((1.0 / (1.0 - d_unlabeled.array())) / n_o).matrix();
    return out;
}

inline MatrixXd concat_sa(const MatrixXd& s, const MatrixXd& a) {
    MatrixXd x(s.rows() + a.rows(), s.cols());
    x.topRows(s.rows()) = s;
    x.bottomRows(a.rows()) = a;
    return x;
}

struct DiscTrainConfig {
    double eta = 0.5;
    double lr = 1e-4;  // cosine-annealed to 0
    int steps = 5000;
    int batch_size = 256;
    int hidden = 128;
    int depth = 4;  // weight layers
    bool binary = false;
    std::uint64_t seed = 0;
};

struct DiscTrainResult {
    Discriminator discriminator;
    std::vector<double> loss_curve;
};

// Pretrains the discriminator to the fixed step budget, then it is frozen.
inline DiscTrainResult train_discriminator(const data::TransitionSet& d_e,
                                           const data::TransitionSet& d_o,
                                           const DiscTrainConfig& cfg) {
    const auto& spec = d_e.manifest.spec;
    Rng init_rng(mix_seed(cfg.seed, 0xd15c));
    std::vector<int> dims{spec.state_dim + spec.action_dim};
    for (int i = 0; i < cfg.depth - 1; ++i) dims.push_back(cfg.hidden);
    dims.push_back(1);

    DiscTrainResult res;
    res.discriminator.eta = cfg.eta;
    res.discriminator.net = tc::make_mlp(dims, tc::Activation::sigmoid, init_rng);
    auto& net = res.discriminator.net;
    auto adam = tc::make_adam(net, cfg.lr);

    Rng batch_rng(mix_seed(cfg.seed, 0xba7c));
    const int half = cfg.batch_size / 2;
    for (int t = 0; t < cfg.steps; ++t) {
        const auto b = data::sample_batch(d_e, d_o, cfg.batch_size, batch_rng);
        const MatrixXd x = concat_sa(b.s, b.a);
        const MatrixXd d = tc::mlp_forward(net, x);
        const VectorXd d_e_vals = d.leftCols(half).transpose();
        const VectorXd d_o_vals = d.rightCols(half).transpose();
        const auto lg = cfg.binary ? binary_loss_with_grads(d_e_vals, d_o_vals)
                                   : pu_loss_with_grads(d_e_vals, d_o_vals, cfg.eta);
        if (!std::isfinite(lg.loss))
            throw TrainingError("train_discriminator: non-finite loss at step " +
                                std::to_string(t));
        MatrixXd og(1, cfg.batch_size);
        og.leftCols(half) = lg.d_expert_grad.transpose();
        og.rightCols(half) = lg.d_unlabeled_grad.transpose();
        const auto grads = tc::mlp_backward(net, x, og);
        tc::adam_step(net, adam, grads, tc::cosine_lr(cfg.lr, t, cfg.steps));
        res.loss_curve.push_back(lg.loss);
    }
    return res;
}

enum class Origin { E, O };

inline double log_ratio(double d) { return std::log(d / (1.0 - d)); }

// Eq.-2-style reward. Expert-origin samples use d = expert_d_value
// unconditionally; auxiliary samples use the clipped discriminator output.
inline double estimate_reward(const RewardModel& model, const VectorXd& s,
                              const VectorXd& a, Origin origin) {
    if (origin == Origin::E) return log_ratio(model.expert_d_value);
    const double raw =
        tc::mlp_forward(model.discriminator.net, concat_sa(MatrixXd(s), MatrixXd(a)))(0, 0);
    const double d =
        std::clamp(raw, model.discriminator.clip_lo, model.discriminator.clip_hi);
    return log_ratio(d);
}

// Batched variant following the batch's origin flags.
inline VectorXd estimate_rewards(const RewardModel& model, const data::Batch& b) {
    VectorXd r(b.size());
    const double expert_r = log_ratio(model.expert_d_value);
    const int n_o = b.size() - b.half;
    if (n_o > 0) {
        const MatrixXd x =
            concat_sa(b.s.rightCols(n_o), b.a.rightCols(n_o));
        const MatrixXd d = tc::mlp_forward(model.discriminator.net, x);
        for (int i = 0; i < n_o; ++i) {
            const double c = std::clamp(d(0, i), model.discriminator.clip_lo,
                                        model.discriminator.clip_hi);
            r(b.half + i) = log_ratio(c);
        }
    }
    for (int i = 0; i < b.half; ++i) r(i) = expert_r;
    return r;
}

// Batched raw-discriminator output, clipped (the "w/o modified reward"
// ablation uses this directly as r~).
inline VectorXd clipped_d_values(const RewardModel& model, const data::Batch& b) {
    VectorXd r(b.size());
    const int n_o = b.size() - b.half;
    if (n_o > 0) {
        const MatrixXd x = concat_sa(b.s.rightCols(n_o), b.a.rightCols(n_o));
        const MatrixXd d = tc::mlp_forward(model.discriminator.net, x);
        for (int i = 0; i < n_o; ++i)
            r(b.half + i) = std::clamp(d(0, i), model.discriminator.clip_lo,
                                       model.discriminator.clip_hi);
    }
    for (int i = 0; i < b.half; ++i) r(i) = model.expert_d_value;
    return r;
}

// 1 iff reward strictly exceeds tau.
inline double filter_mask(double reward, double tau) { return reward > tau ? 1.0 : 0.0; }

}  // namespace roida::reward
