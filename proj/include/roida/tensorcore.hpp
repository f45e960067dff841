#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "roida/common.hpp"

// Dense MLP engine: forward/backward passes over sample batches (one column
// per sample), Adam with decoupled weight decay, cosine LR schedule, and a
// central finite-difference gradient checker.
namespace roida::tc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { identity, tanh_act, sigmoid };

struct Layer {
    MatrixXd W;  // out x in
    VectorXd b;  // out
};

struct MlpModel {
    std::vector<Layer> layers;  // hidden activation is always ReLU
    Activation output_activation = Activation::identity;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
};

// Per-parameter arrays mirroring an MlpModel.
struct Gradients {
    std::vector<Layer> layers;

    void add_scaled(const Gradients& g, double c) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].W += c * g.layers[i].W;
            layers[i].b += c * g.layers[i].b;
        }
    }
    bool finite() const {
        for (const auto& l : layers)
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
        return true;
    }
};

inline Gradients zero_gradients(const MlpModel& m) {
    Gradients g;
    g.layers.reserve(m.layers.size());
    for (const auto& l : m.layers)
        g.layers.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()),
                            VectorXd::Zero(l.b.size())});
    return g;
}

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline MlpModel make_mlp(const std::vector<int>& dims, Activation out_act, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("make_mlp: need at least one layer");
    MlpModel m;
    m.output_activation = out_act;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const int in = dims[i], out = dims[i + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Layer l{MatrixXd(out, in), VectorXd(out)};
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) l.W(r, c) = rng.uniform(-bound, bound);
        }
        for (int r = 0; r < out; ++r) l.b(r) = rng.uniform(-bound, bound);
        m.layers.push_back(std::move(l));
    }
    return m;
}

inline double softplus(double x) {
    // overflow-safe: ln(1+e^x) = max(x,0) + ln(1+e^-|x|)
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline MatrixXd apply_output_activation(Activation a, MatrixXd z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh_act: return z.array().tanh().matrix();
        case Activation::sigmoid:
            return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
}

// Forward pass over a batch; X has one sample per column.
inline MatrixXd mlp_forward(const MlpModel& m, const MatrixXd& X) {
    if (X.rows() != m.input_dim())
        throw ConfigError("mlp_forward: input dim " + std::to_string(X.rows()) +
                          " != model input dim " + std::to_string(m.input_dim()));
    MatrixXd h = X;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        MatrixXd z = (m.layers[i].W * h).colwise() + m.layers[i].b;
        if (i + 1 < m.layers.size())
            h = z.array().max(0.0).matrix();  // ReLU; gradient at 0 defined as 0
        else
            h = apply_output_activation(m.output_activation, std::move(z));
    }
    return h;
}

inline VectorXd mlp_forward(const MlpModel& m, const VectorXd& x) {
    return mlp_forward(m, MatrixXd(x)).col(0);
}

// Backward pass: given upstream gradient on the (post-activation) outputs,
// returns parameter gradients summed over the batch. If input_grad is
// non-null it receives d(loss)/d(input) per column.
inline Gradients mlp_backward(const MlpModel& m, const MatrixXd& X,
                              const MatrixXd& output_grad,
                              MatrixXd* input_grad = nullptr) {
    if (X.rows() != m.input_dim())
        throw ConfigError("mlp_backward: input shape mismatch");
    if (output_grad.rows() != m.output_dim() || output_grad.cols() != X.cols())
        throw ConfigError("mlp_backward: output_grad shape mismatch");

    const std::size_t L = m.layers.size();
    std::vector<MatrixXd> acts(L + 1);  // post-activation values per layer
    acts[0] = X;
    for (std::size_t i = 0; i < L; ++i) {
        MatrixXd z = (m.layers[i].W * acts[i]).colwise() + m.layers[i].b;
        if (i + 1 < L)
            acts[i + 1] = z.array().max(0.0).matrix();
        else
            acts[i + 1] = apply_output_activation(m.output_activation, std::move(z));
    }

    Gradients g = zero_gradients(m);
    MatrixXd delta;  // gradient w.r.t. pre-activation of current layer
    const MatrixXd& y = acts[L];
    switch (m.output_activation) {
        case Activation::identity: delta = output_grad; break;
        case Activation::tanh_act:
            delta = (output_grad.array() * (1.0 - y.array().square())).matrix();
            break;
        case Activation::sigmoid:
            delta = (output_grad.array() * y.array() * (1.0 - y.array())).matrix();
            break;
    }
    for (std::size_t i = L; i-- > 0;) {
        g.layers[i].W = delta * acts[i].transpose();
        g.layers[i].b = delta.rowwise().sum();
        if (i > 0) {
            MatrixXd back = m.layers[i].W.transpose() * delta;
            delta = (back.array() * (acts[i].array() > 0.0).cast<double>()).matrix();
        } else if (input_grad) {
            *input_grad = m.layers[i].W.transpose() * delta;
        }
    }
    return g;
}

struct AdamState {
    std::vector<Layer> first_moment;
    std::vector<Layer> second_moment;
    std::int64_t step_count = 0;
    double learning_rate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

inline AdamState make_adam(const MlpModel& m, double lr, double weight_decay = 0.0) {
    AdamState s;
    s.learning_rate = lr;
    s.weight_decay = weight_decay;
    for (const auto& l : m.layers) {
        s.first_moment.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()),
                                  VectorXd::Zero(l.b.size())});
        s.second_moment.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()),
                                   VectorXd::Zero(l.b.size())});
    }
    return s;
}

namespace detail {
template <class Arr>
void adam_update(Arr& theta, Arr& m, Arr& v, const Arr& g, double lr, double b1,
                 double b2, double eps, double wd, std::int64_t t) {
    if (wd > 0.0) theta *= (1.0 - lr * wd);  // decoupled decay before the delta
    m = b1 * m + (1.0 - b1) * g;
    v = (b2 * v.array() + (1.0 - b2) * g.array().square()).matrix();
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    theta -= (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
}
}  // namespace detail

// Bias-corrected Adam with decoupled weight decay. lr_override < 0 means use
// state.learning_rate (schedules pass the annealed rate here).
inline void adam_step(MlpModel& model, AdamState& state, const Gradients& grads,
                      double lr_override = -1.0) {
    if (!grads.finite()) throw TrainingError("adam_step: non-finite gradient");
    const double lr = lr_override >= 0.0 ? lr_override : state.learning_rate;
    ++state.step_count;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        detail::adam_update(model.layers[i].W, state.first_moment[i].W,
                            state.second_moment[i].W, grads.layers[i].W, lr,
                            state.beta1, state.beta2, state.epsilon,
                            state.weight_decay, state.step_count);
        detail::adam_update(model.layers[i].b, state.first_moment[i].b,
                            state.second_moment[i].b, grads.layers[i].b, lr,
                            state.beta1, state.beta2, state.epsilon,
                            state.weight_decay, state.step_count);
    }
    for (const auto& l : model.layers)
        if (!l.W.allFinite() || !l.b.allFinite())
            throw TrainingError("adam_step: parameters diverged");
}

inline double cosine_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
    if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be > 0");
    if (step < 0 || step > total_steps)
        throw ConfigError("cosine_lr: step out of [0, total_steps]");
    const double v = base_lr * 0.5 *
                     (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                     static_cast<double>(total_steps)));
    return v < 0.0 ? 0.0 : v;
}

struct GradCheckResult {
    bool pass = false;
    double max_rel_error = 0.0;
};

// Central finite differences over every parameter of `model`, compared against
// `analytic`. `loss` must be a pure function of the model parameters.
template <class LossFn>
GradCheckResult grad_check(MlpModel model, LossFn&& loss, const Gradients& analytic,
                           double tolerance, double h = 1e-5) {
    GradCheckResult res;
    auto probe = [&](double& p, double ga) {
        const double orig = p;
        p = orig + h;
        const double lp = loss(model);
        p = orig - h;
        const double lm = loss(model);
        p = orig;
        const double gf = (lp - lm) / (2.0 * h);
        // differences below the cancellation noise of (lp - lm) are not
        // resolvable by finite differences at this h; both sides agree to
        // within round-off there
        const double noise = 32.0 * std::numeric_limits<double>::epsilon() *
                             std::max(std::abs(lp), std::abs(lm)) / (2.0 * h);
        if (std::abs(ga - gf) <= noise) return;
        const double rel =
            std::abs(ga - gf) / std::max(1e-8, std::abs(ga) + std::abs(gf));
        if (rel > res.max_rel_error) res.max_rel_error = rel;
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        auto& l = model.layers[i];
        for (int r = 0; r < l.W.rows(); ++r)
            for (int c = 0; c < l.W.cols(); ++c)
                probe(l.W(r, c), analytic.layers[i].W(r, c));
        for (int r = 0; r < l.b.size(); ++r)
            probe(l.b(r), analytic.layers[i].b(r));
    }
    res.pass = res.max_rel_error < tolerance;
    return res;
}

// ---- checkpoint format -----------------------------------------------------
// One UTF-8 manifest line (role, layer dims, output activation, log-std size),
// then parameter arrays as little-endian 64-bit floats in layer order, weights
// row-major then biases, then log-std values if present.

namespace detail {
inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}
inline void read_doubles(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
    if (!is) throw IntegrityError("checkpoint: truncated parameter body");
}
inline const char* act_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh_act: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}
inline Activation act_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh_act;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ParseError("checkpoint: unknown activation '" + s + "'");
}
}  // namespace detail

inline void save_model(const MlpModel& m, std::ostream& os,
                       const std::string& role = "model",
                       const VectorXd* log_std = nullptr) {
    os << "roida-model role=" << role << " act=" << detail::act_name(m.output_activation)
       << " dims=" << m.input_dim();
    for (const auto& l : m.layers) os << "," << l.W.rows();
    os << " logstd=" << (log_std ? log_std->size() : 0) << "\n";
    for (const auto& l : m.layers) {
        // Eigen default storage is column-major; emit row-major explicitly
        for (int r = 0; r < l.W.rows(); ++r)
            for (int c = 0; c < l.W.cols(); ++c) {
                const double v = l.W(r, c);
                detail::write_doubles(os, &v, 1);
            }
        detail::write_doubles(os, l.b.data(), static_cast<std::size_t>(l.b.size()));
    }
    if (log_std)
        detail::write_doubles(os, log_std->data(),
                              static_cast<std::size_t>(log_std->size()));
}

inline MlpModel load_model(std::istream& is, std::string* role_out = nullptr,
                           VectorXd* log_std_out = nullptr) {
    std::string header;
    if (!std::getline(is, header)) throw ParseError("checkpoint: missing manifest line");
    auto field = [&](const std::string& key) {
        const auto pos = header.find(key + "=");
        if (pos == std::string::npos)
            throw ParseError("checkpoint: manifest missing field '" + key + "'");
        const auto start = pos + key.size() + 1;
        const auto end = header.find(' ', start);
        return header.substr(start, end == std::string::npos ? end : end - start);
    };
    if (header.rfind("roida-model", 0) != 0)
        throw ParseError("checkpoint: bad magic");
    if (role_out) *role_out = field("role");
    const Activation act = detail::act_from_name(field("act"));
    std::vector<int> dims;
    {
        std::string d = field("dims");
        std::size_t pos = 0;
        while (pos != std::string::npos) {
            const auto comma = d.find(',', pos);
            dims.push_back(std::stoi(d.substr(pos, comma - pos)));
            pos = comma == std::string::npos ? comma : comma + 1;
        }
    }
    const int nls = std::stoi(field("logstd"));
    MlpModel m;
    m.output_activation = act;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer l{MatrixXd(dims[i + 1], dims[i]), VectorXd(dims[i + 1])};
        for (int r = 0; r < l.W.rows(); ++r)
            for (int c = 0; c < l.W.cols(); ++c) detail::read_doubles(is, &l.W(r, c), 1);
        detail::read_doubles(is, l.b.data(), static_cast<std::size_t>(l.b.size()));
        m.layers.push_back(std::move(l));
    }
    if (nls > 0) {
        VectorXd ls(nls);
        detail::read_doubles(is, ls.data(), static_cast<std::size_t>(nls));
        if (log_std_out) *log_std_out = std::move(ls);
    }
    return m;
}

inline void save_model_file(const MlpModel& m, const std::string& path,
                            const std::string& role = "model",
                            const VectorXd* log_std = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for write: " + path);
    save_model(m, os, role, log_std);
}

inline MlpModel load_model_file(const std::string& path, std::string* role_out = nullptr,
                                VectorXd* log_std_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open for read: " + path);
    return load_model(is, role_out, log_std_out);
}

}  // namespace roida::tc
