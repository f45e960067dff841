#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "roida/agent.hpp"

using namespace roida;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

tc::MlpModel const_net(int in, double value, tc::Activation act) {
    tc::MlpModel m;
    m.output_activation = act;
    m.layers.push_back({MatrixXd::Zero(1, in), VectorXd::Constant(1, value)});
    return m;
}

agent::GaussianPolicy zero_policy(int sd, int ad) {
    agent::GaussianPolicy p;
    tc::MlpModel m;
    m.output_activation = tc::Activation::tanh_act;
    m.layers.push_back({MatrixXd::Zero(ad, sd), VectorXd::Zero(ad)});
    p.mean_net = m;
    p.log_std = VectorXd::Zero(ad);
    return p;
}

agent::CriticPair const_critics(int sd, int ad, double v1, double v2) {
    agent::CriticPair c;
    c.q1 = const_net(sd + ad, v1, tc::Activation::identity);
    c.q2 = const_net(sd + ad, v2, tc::Activation::identity);
    c.q1_target = c.q1;
    c.q2_target = c.q2;
    return c;
}

}  // namespace

TEST_CASE("policy_log_prob Gaussian mode density and 1-sigma shift") {
    auto p = zero_policy(2, 2);  // mean 0, sigma 1
    const VectorXd s = VectorXd::Zero(2);
    VectorXd a = VectorXd::Zero(2);
    CHECK(agent::policy_log_prob(p, s, a) ==
          doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
    a(0) = 1.0;  // +1 sigma in one dim
    CHECK(agent::policy_log_prob(p, s, a) ==
          doctest::Approx(-std::log(2.0 * M_PI) - 0.5).epsilon(1e-12));
}

TEST_CASE("policy_act zero net, bounds, determinism") {
    auto p = zero_policy(2, 2);
    CHECK(agent::policy_act(p, VectorXd::Constant(2, 3.0)).isZero(0.0));

    Rng rng(8);
    agent::GaussianPolicy q;
    q.mean_net = tc::make_mlp({2, 8, 2}, tc::Activation::tanh_act, rng);
    q.log_std = VectorXd::Zero(2);
    q.action_bound = 1.0;
    for (int i = 0; i < 500; ++i) {
        VectorXd s(2);
        s << rng.uniform(-5, 5), rng.uniform(-5, 5);
        const VectorXd a1 = agent::policy_act(q, s);
        CHECK(a1.array().abs().maxCoeff() <= 1.0);
        CHECK(agent::policy_act(q, s) == a1);
    }
}

TEST_CASE("bellman_target arithmetic") {
    const auto critics = const_critics(1, 1, 2.0, 5.0);  // min-target = 2
    const auto p = zero_policy(1, 1);
    const VectorXd sn = VectorXd::Zero(1);
    CHECK(agent::bellman_target(critics, p, 1.0, sn, false, 0.5) ==
          doctest::Approx(2.0).epsilon(1e-15));
    CHECK(agent::bellman_target(critics, p, 1.0, sn, true, 0.5) ==
          doctest::Approx(1.0).epsilon(1e-15));
    const auto big = const_critics(1, 1, 10.0, 12.0);
    CHECK(agent::bellman_target(big, p, 2.19722, sn, false, 0.5) ==
          doctest::Approx(7.19722).epsilon(1e-12));
}

TEST_CASE("critic_loss base cases") {
    auto critics = const_critics(1, 1, 1.0, 1.0);
    const MatrixXd s = MatrixXd::Zero(1, 1), a = MatrixXd::Zero(1, 1);
    CHECK(agent::critic_loss(critics, s, a, VectorXd::Constant(1, 1.0)) ==
          doctest::Approx(0.0));
    // single sample, Q=1, target=3, one critic -> (1-3)^2 = 4
    critics.single = true;
    CHECK(agent::critic_loss(critics, s, a, VectorXd::Constant(1, 3.0)) ==
          doctest::Approx(4.0));
    // twin critics sum: 4 + 4
    critics.single = false;
    CHECK(agent::critic_loss(critics, s, a, VectorXd::Constant(1, 3.0)) ==
          doctest::Approx(8.0));
}

TEST_CASE("bellman targets ignore online-critic perturbations") {
    auto critics = const_critics(1, 1, 2.0, 3.0);
    const auto p = zero_policy(1, 1);
    VectorXd r(2), done(2);
    r << 1.0, -1.0;
    done << 0.0, 0.0;
    const MatrixXd sn = MatrixXd::Zero(1, 2);
    const VectorXd before = agent::bellman_targets(critics, p, r, sn, done, 0.5);
    critics.q1.layers[0].b(0) = 100.0;  // online only
    critics.q2.layers[0].W.setConstant(7.0);
    const VectorXd after = agent::bellman_targets(critics, p, r, sn, done, 0.5);
    CHECK(before == after);
}

TEST_CASE("polyak update converges geometrically, halving near 139 steps") {
    Rng rng(12);
    const auto online = tc::make_mlp({2, 6, 1}, tc::Activation::identity, rng);
    auto target = tc::make_mlp({2, 6, 1}, tc::Activation::identity, rng);
    auto gap = [&] {
        double g = 0.0;
        for (std::size_t i = 0; i < online.layers.size(); ++i)
            g += (target.layers[i].W - online.layers[i].W).norm() +
                 (target.layers[i].b - online.layers[i].b).norm();
        return g;
    };
    const double g0 = gap();
    for (int t = 0; t < 139; ++t) agent::polyak_update(target, online, 0.005);
    // (1-0.005)^139 = 0.4982...
    CHECK(gap() / g0 == doctest::Approx(std::pow(0.995, 139)).epsilon(1e-9));
    CHECK(gap() / g0 == doctest::Approx(0.5).epsilon(2e-2));
}

TEST_CASE("dynamic_scaling formula, guards, absolute values") {
    agent::TrainConfig cfg;
    auto [a1, b1] = agent::dynamic_scaling(0.75, 1.0, 2.0, cfg);
    CHECK(a1 == doctest::Approx(0.001).epsilon(1e-15));
    auto [a2, b2] = agent::dynamic_scaling(3.0, 1.0, 3.0, cfg);
    CHECK(b2 == doctest::Approx(0.01 / 7.5).epsilon(1e-12));
    auto [a3, b3] = agent::dynamic_scaling(1.0, 0.0, 0.0, cfg);
    CHECK(a3 == 0.0);
    CHECK(b3 == 0.0);
    auto [a4, b4] = agent::dynamic_scaling(-0.75, -1.0, 2.0, cfg);
    CHECK(a4 == doctest::Approx(0.001).epsilon(1e-15));
    CHECK_THROWS_AS(
        agent::dynamic_scaling(std::numeric_limits<double>::quiet_NaN(), 1, 1, cfg),
        TrainingError);
}

TEST_CASE("reward_mode_dispatch per mode") {
    agent::TrainConfig cfg;
    reward::RewardModel rm;
    // discriminator with constant output 0.8
    rm.discriminator.net = const_net(2, std::log(4.0), tc::Activation::sigmoid);
    data::Transition t;
    t.s = VectorXd::Zero(1);
    t.a = VectorXd::Zero(1);
    t.s_next = VectorXd::Zero(1);
    t.true_reward = -0.25;

    CHECK(agent::reward_mode_dispatch(cfg, rm, t, reward::Origin::E) ==
          doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(agent::reward_mode_dispatch(cfg, rm, t, reward::Origin::O) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-9));

    cfg.raw_discriminator_reward = true;
    CHECK(agent::reward_mode_dispatch(cfg, rm, t, reward::Origin::O) ==
          doctest::Approx(0.8).epsilon(1e-12));

    cfg.raw_discriminator_reward = false;
    cfg.gt_rewards = true;
    CHECK(agent::reward_mode_dispatch(cfg, rm, t, reward::Origin::O) ==
          doctest::Approx(-0.25));
}

TEST_CASE("config validation") {
    agent::TrainConfig cfg;
    cfg.gt_rewards = true;
    cfg.raw_discriminator_reward = true;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    agent::TrainConfig cfg2;
    cfg2.total_steps = 50;
    cfg2.eval_every = 10;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
    agent::TrainConfig cfg3;
    cfg3.gamma = 1.5;
    CHECK_THROWS_AS(cfg3.validate(), ConfigError);
}

TEST_CASE("gt mask threshold is the median expert true reward") {
    data::TransitionSet set;
    for (double r : {-3.0, -1.0, 0.0, -2.0, -4.0}) {
        data::Transition t;
        t.s = t.a = t.s_next = VectorXd::Zero(1);
        t.true_reward = r;
        set.transitions.push_back(t);
    }
    set.trajectory_offsets = {5};
    set.provenance = {data::Provenance::expert_set};
    CHECK(agent::gt_mask_threshold(set) == doctest::Approx(-2.0));
    CHECK(agent::median({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(2.5));
    CHECK_THROWS_AS(agent::median({}), ConfigError);
}

TEST_CASE("masked-out lambda2 leaves the policy gradient untouched") {
    Rng rng(21);
    agent::GaussianPolicy p;
    p.mean_net = tc::make_mlp({2, 8, 1}, tc::Activation::tanh_act, rng);
    p.log_std = VectorXd::Zero(1);
    auto critics = const_critics(2, 1, 1.0, 2.0);
    data::Batch b;
    b.half = 4;
    b.s = MatrixXd::Random(2, 8);
    b.a = MatrixXd::Random(1, 8);
    b.s_next = b.s;
    b.done = VectorXd::Zero(8);
    b.true_reward = VectorXd::Zero(8);
    agent::BatchRewards br;
    br.tau = 1.0;
    br.r = VectorXd::Constant(8, 0.9);  // all at or below tau -> mask empty

    agent::TrainConfig cfg;
    const auto pg = agent::policy_objective_grads(p, critics, b, br, cfg);
    CHECK(pg.objective.lambda2 == 0.0);
    CHECK(pg.objective.alpha == 0.0);

    agent::TrainConfig cfg2 = cfg;
    cfg2.no_weighted_bc = true;
    const auto pg2 = agent::policy_objective_grads(p, critics, b, br, cfg2);
    for (std::size_t i = 0; i < pg.mean_net.layers.size(); ++i) {
        CHECK(pg.mean_net.layers[i].W == pg2.mean_net.layers[i].W);
        CHECK(pg.mean_net.layers[i].b == pg2.mean_net.layers[i].b);
    }
    CHECK(pg.log_std == pg2.log_std);
}

TEST_CASE("alpha and beta forced to zero reduce the objective to expert BC") {
    Rng rng(22);
    agent::GaussianPolicy p;
    p.mean_net = tc::make_mlp({2, 8, 1}, tc::Activation::tanh_act, rng);
    p.log_std = VectorXd::Zero(1);
    agent::CriticPair empty_critics;
    data::Batch b;
    b.half = 4;
    b.s = MatrixXd::Random(2, 8);
    b.a = MatrixXd::Random(1, 8);
    agent::BatchRewards br;
    br.tau = 1.0;
    br.r = VectorXd::Constant(8, 2.0);

    agent::TrainConfig cfg;
    cfg.method = agent::Method::bc_exp;  // forces alpha = beta = 0, no critic path
    const auto obj = agent::policy_objective(p, empty_critics, b, br, cfg);
    double l1 = 0.0;
    for (int j = 0; j < b.half; ++j)
        l1 += -agent::policy_log_prob(p, b.s.col(j), b.a.col(j)) / b.half;
    CHECK(obj.total == doctest::Approx(l1).epsilon(1e-12));
    CHECK(obj.alpha == 0.0);
    CHECK(obj.beta == 0.0);
}

TEST_CASE("gamma=0 critic converges to r~ pointwise on a 20-transition set") {
    // small-instance oracle: full-batch regression onto the rewards
    auto set = data::generate_dataset(envs::lineworld1d(), envs::BehaviorPolicy::random,
                                      1, 33);
    set.transitions.resize(20);
    set.trajectory_offsets = {20};
    MatrixXd s(1, 20), a(1, 20);
    VectorXd r(20);
    for (int i = 0; i < 20; ++i) {
        s.col(i) = set.transitions[i].s;
        a.col(i) = set.transitions[i].a;
        r(i) = set.transitions[i].true_reward;
    }
    Rng rng(3);
    tc::MlpModel q = tc::make_mlp({2, 64, 64, 1}, tc::Activation::identity, rng);
    auto adam = tc::make_adam(q, 1e-2);
    const MatrixXd x = reward::concat_sa(s, a);
    const int steps = 50000;
    for (int t = 0; t < steps; ++t) {
        const MatrixXd qv = tc::mlp_forward(q, x);
        const MatrixXd og = 2.0 / 20.0 * (qv.row(0) - r.transpose());
        tc::adam_step(q, adam, tc::mlp_backward(q, x, og), tc::cosine_lr(1e-2, t, steps));
    }
    const VectorXd qv = tc::mlp_forward(q, x).row(0).transpose();
    CHECK((qv - r).array().abs().maxCoeff() < 1e-3);
}

TEST_CASE("actor updates happen exactly every t_freq steps") {
    // with t_freq=7 the only policy update in a 10- or 13-step run is at step
    // 7, so both runs must end with bit-identical policies
    const auto expert = data::generate_dataset(envs::lineworld1d(),
                                               envs::BehaviorPolicy::expert, 8, 61,
                                               0.0, data::Provenance::expert_set);
    const auto sub = data::generate_dataset(envs::lineworld1d(),
                                            envs::BehaviorPolicy::random, 20, 62);
    const auto [d_e, d_o] = data::build_mixture({5, 0, 15}, expert, sub, 1);

    agent::TrainConfig cfg;
    cfg.method = agent::Method::roida;
    cfg.t_freq = 7;
    cfg.total_steps = 10;
    cfg.eval_every = 1;
    cfg.eval_episodes = 1;
    cfg.batch_size = 32;
    cfg.policy_hidden = 8;
    cfg.critic_hidden = 8;
    cfg.disc_hidden = 8;
    cfg.disc_steps = 20;
    cfg.seed = 5;
    const auto r10 = agent::train_roida(d_e, d_o, cfg, envs::lineworld1d());
    cfg.total_steps = 13;
    const auto r13 = agent::train_roida(d_e, d_o, cfg, envs::lineworld1d());
    for (std::size_t i = 0; i < r10.policy.mean_net.layers.size(); ++i) {
        CHECK(r10.policy.mean_net.layers[i].W == r13.policy.mean_net.layers[i].W);
        CHECK(r10.policy.mean_net.layers[i].b == r13.policy.mean_net.layers[i].b);
    }
    CHECK(r10.policy.log_std == r13.policy.log_std);
}

TEST_CASE("train_roida is deterministic and logs every eval_every steps") {
    const auto expert = data::generate_dataset(envs::lineworld1d(),
                                               envs::BehaviorPolicy::expert, 8, 71,
                                               0.0, data::Provenance::expert_set);
    const auto sub = data::generate_dataset(envs::lineworld1d(),
                                            envs::BehaviorPolicy::random, 20, 72);
    const auto [d_e, d_o] = data::build_mixture({5, 0, 15}, expert, sub, 2);

    agent::TrainConfig cfg;
    cfg.method = agent::Method::bc_exp;
    cfg.total_steps = 200;
    cfg.eval_every = 20;
    cfg.eval_episodes = 2;
    cfg.batch_size = 64;
    cfg.policy_hidden = 16;
    cfg.seed = 9;
    const auto a = agent::train_roida(d_e, d_o, cfg, envs::lineworld1d());
    const auto b = agent::train_roida(d_e, d_o, cfg, envs::lineworld1d());
    REQUIRE(a.eval_curve.size() == 10);
    CHECK(a.eval_curve == b.eval_curve);
    REQUIRE(a.log.size() == 10);
    CHECK(a.log.front().step == 20);
    CHECK(a.log.back().step == 200);
    for (std::size_t i = 0; i < a.policy.mean_net.layers.size(); ++i)
        CHECK(a.policy.mean_net.layers[i].W == b.policy.mean_net.layers[i].W);
    // bc_exp carries no critics or reward model
    CHECK_FALSE(a.critics.has_value());
    CHECK_FALSE(a.reward_model.has_value());
}

TEST_CASE("log_std stays within its clamp bounds during training") {
    const auto expert = data::generate_dataset(envs::lineworld1d(),
                                               envs::BehaviorPolicy::expert, 8, 81,
                                               0.0, data::Provenance::expert_set);
    const auto sub = data::generate_dataset(envs::lineworld1d(),
                                            envs::BehaviorPolicy::random, 20, 82);
    const auto [d_e, d_o] = data::build_mixture({5, 0, 15}, expert, sub, 3);
    agent::TrainConfig cfg;
    cfg.method = agent::Method::bc_all;
    cfg.total_steps = 300;
    cfg.eval_every = 30;
    cfg.eval_episodes = 1;
    cfg.batch_size = 64;
    cfg.policy_hidden = 16;
    cfg.seed = 4;
    const auto res = agent::train_roida(d_e, d_o, cfg, envs::lineworld1d());
    for (int i = 0; i < res.policy.log_std.size(); ++i) {
        CHECK(res.policy.log_std(i) >= agent::kLogStdMin);
        CHECK(res.policy.log_std(i) <= agent::kLogStdMax);
    }
}
