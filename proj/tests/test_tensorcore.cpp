#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "roida/tensorcore.hpp"

using namespace roida;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

tc::MlpModel scalar_model(double w, double b, tc::Activation act) {
    tc::MlpModel m;
    m.output_activation = act;
    m.layers.push_back({MatrixXd::Constant(1, 1, w), VectorXd::Constant(1, b)});
    return m;
}

}  // namespace

TEST_CASE("mlp_forward identity, tanh, sigmoid base cases") {
    VectorXd x(1);
    x << 3.5;
    CHECK(tc::mlp_forward(scalar_model(1.0, 0.0, tc::Activation::identity), x)(0) ==
          doctest::Approx(3.5));
    CHECK(tc::mlp_forward(scalar_model(0.0, 0.0, tc::Activation::tanh_act), x)(0) ==
          doctest::Approx(0.0));
    CHECK(tc::mlp_forward(scalar_model(0.0, 0.0, tc::Activation::sigmoid), x)(0) ==
          doctest::Approx(0.5));
}

TEST_CASE("mlp_forward rejects dimension mismatch") {
    Rng rng(1);
    const auto m = tc::make_mlp({2, 4, 1}, tc::Activation::identity, rng);
    const VectorXd bad = VectorXd::Zero(3);
    CHECK_THROWS_AS(tc::mlp_forward(m, bad), ConfigError);
}

TEST_CASE("mlp_forward is deterministic") {
    Rng rng(42);
    const auto m = tc::make_mlp({3, 8, 8, 2}, tc::Activation::tanh_act, rng);
    VectorXd x(3);
    x << 0.3, -1.2, 2.0;
    const VectorXd y1 = tc::mlp_forward(m, x);
    const VectorXd y2 = tc::mlp_forward(m, x);
    CHECK(y1 == y2);  // bit-identical
}

TEST_CASE("mlp_backward linear chain rule") {
    const auto m = scalar_model(2.0, 0.0, tc::Activation::identity);
    MatrixXd x(1, 1), og(1, 1);
    x << 3.0;
    og << 1.0;
    const auto g = tc::mlp_backward(m, x, og);
    CHECK(g.layers[0].W(0, 0) == doctest::Approx(3.0));
    CHECK(g.layers[0].b(0) == doctest::Approx(1.0));
}

TEST_CASE("mlp_backward zero upstream gradient gives zero gradients") {
    Rng rng(3);
    const auto m = tc::make_mlp({2, 6, 1}, tc::Activation::sigmoid, rng);
    const MatrixXd x = MatrixXd::Random(2, 4);
    const auto g = tc::mlp_backward(m, x, MatrixXd::Zero(1, 4));
    for (const auto& l : g.layers) {
        CHECK(l.W.isZero(0.0));
        CHECK(l.b.isZero(0.0));
    }
}

TEST_CASE("mlp_backward matches finite differences on a random 2-layer ReLU net") {
    Rng rng(17);
    const auto m = tc::make_mlp({3, 10, 1}, tc::Activation::identity, rng);
    MatrixXd x(3, 5);
    for (int c = 0; c < 5; ++c)
        for (int r = 0; r < 3; ++r) x(r, c) = rng.uniform(-2.0, 2.0);
    // scalar loss: sum of outputs
    const auto analytic = tc::mlp_backward(m, x, MatrixXd::Ones(1, 5));
    auto loss = [&](const tc::MlpModel& mm) { return tc::mlp_forward(mm, x).sum(); };
    const auto res = tc::grad_check(m, loss, analytic, 1e-4);
    CHECK(res.pass);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("adam_step first step moves by ~lr in the gradient direction") {
    auto m = scalar_model(1.0, 0.0, tc::Activation::identity);
    auto s = tc::make_adam(m, 3e-4);
    auto g = tc::zero_gradients(m);
    g.layers[0].W(0, 0) = 0.5;
    const double before = m.layers[0].W(0, 0);
    tc::adam_step(m, s, g);
    const double delta = before - m.layers[0].W(0, 0);
    CHECK(std::abs(delta - 3e-4 * 0.5 / (0.5 + s.epsilon)) < 1e-9);
    CHECK(s.step_count == 1);
}

TEST_CASE("adam_step with zero gradients and zero weight decay is identity") {
    Rng rng(5);
    auto m = tc::make_mlp({2, 4, 1}, tc::Activation::identity, rng);
    const auto saved = m;
    auto s = tc::make_adam(m, 1e-3);
    tc::adam_step(m, s, tc::zero_gradients(m));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CHECK(m.layers[i].W == saved.layers[i].W);
        CHECK(m.layers[i].b == saved.layers[i].b);
    }
}

TEST_CASE("adam_step decay-only substitution") {
    auto m = scalar_model(1.0, 0.0, tc::Activation::identity);
    m.layers[0].b(0) = 0.0;
    auto s = tc::make_adam(m, 3e-4, 0.005);
    tc::adam_step(m, s, tc::zero_gradients(m));
    CHECK(m.layers[0].W(0, 0) == doctest::Approx(0.9999985).epsilon(1e-12));
}

TEST_CASE("adam_step rejects non-finite gradients") {
    auto m = scalar_model(1.0, 0.0, tc::Activation::identity);
    auto s = tc::make_adam(m, 1e-3);
    auto g = tc::zero_gradients(m);
    g.layers[0].W(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(tc::adam_step(m, s, g), TrainingError);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
    CHECK(tc::cosine_lr(1e-4, 0, 100) == doctest::Approx(1e-4));
    CHECK(tc::cosine_lr(1e-4, 100, 100) == doctest::Approx(0.0).epsilon(1e-18));
    CHECK(tc::cosine_lr(1e-4, 50, 100) == doctest::Approx(0.5e-4));
    CHECK_THROWS_AS(tc::cosine_lr(1e-4, 0, 0), ConfigError);
}

TEST_CASE("cosine_lr is monotone non-increasing") {
    double prev = tc::cosine_lr(1e-3, 0, 777);
    for (int s = 1; s <= 777; ++s) {
        const double v = tc::cosine_lr(1e-3, s, 777);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("softplus values") {
    CHECK(tc::softplus(0.0) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(tc::softplus(100.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(tc::softplus(-1.0459) == doctest::Approx(0.30113).epsilon(1e-3));
    CHECK(tc::softplus(-100.0) > 0.0);
}

TEST_CASE("grad_check exact agreement on a linear model with quadratic loss") {
    auto m = scalar_model(1.5, 0.25, tc::Activation::identity);
    MatrixXd x(1, 1);
    x << 2.0;
    // loss = (w*x+b)^2 ; d/dw = 2(wx+b)x, d/db = 2(wx+b)
    const double y = 1.5 * 2.0 + 0.25;
    auto g = tc::zero_gradients(m);
    g.layers[0].W(0, 0) = 2.0 * y * 2.0;
    g.layers[0].b(0) = 2.0 * y;
    auto loss = [&](const tc::MlpModel& mm) {
        const double v = tc::mlp_forward(mm, MatrixXd(x))(0, 0);
        return v * v;
    };
    const auto res = tc::grad_check(m, loss, g, 1e-4);
    CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("checkpoint round-trip preserves parameters bit-exactly") {
    Rng rng(99);
    const auto m = tc::make_mlp({3, 7, 5, 2}, tc::Activation::tanh_act, rng);
    VectorXd ls(2);
    ls << -0.5, 0.25;
    std::stringstream ss;
    tc::save_model(m, ss, "policy", &ls);
    std::string role;
    VectorXd ls2;
    const auto m2 = tc::load_model(ss, &role, &ls2);
    CHECK(role == "policy");
    CHECK(ls2 == ls);
    REQUIRE(m2.layers.size() == m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        CHECK(m2.layers[i].W == m.layers[i].W);
        CHECK(m2.layers[i].b == m.layers[i].b);
    }
    CHECK(m2.output_activation == m.output_activation);
}

TEST_CASE("checkpoint load rejects truncated body") {
    Rng rng(7);
    const auto m = tc::make_mlp({2, 4, 1}, tc::Activation::identity, rng);
    std::stringstream ss;
    tc::save_model(m, ss);
    std::string bytes = ss.str();
    bytes.resize(bytes.size() - 8);
    std::stringstream cut(bytes);
    CHECK_THROWS_AS(tc::load_model(cut), IntegrityError);
}
