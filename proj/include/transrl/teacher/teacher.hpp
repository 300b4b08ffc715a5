#ifndef TRANSRL_TEACHER_TEACHER_HPP
#define TRANSRL_TEACHER_TEACHER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"
#include "transrl/env/routing_env.hpp"
#include "transrl/nn/adam.hpp"
#include "transrl/nn/checkpoint.hpp"
#include "transrl/nn/mlp.hpp"
#include "transrl/nn/simplex.hpp"
#include "transrl/sodta/sodta.hpp"

namespace transrl::teacher {

using nn::Matrix;

/// Gaussian over logit coordinates centred on an imitation of the
/// transportation method's action. In uniform mode the density is the flat
/// (improper) one: log-density 0 with zero gradient everywhere.
class TeacherPolicy {
public:
    TeacherPolicy() = default;
    TeacherPolicy(int obs_dim, nn::SimplexLayout layout, double sigma,
                  std::vector<int> hidden = {64, 64})
        : layout_(std::move(layout)), sigma_(sigma) {
        require(sigma > 0.0, "teacher sigma must be positive");
        std::vector<int> w{obs_dim};
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(std::max(1, nn::layout_logit_dim(layout_)));
        net_ = nn::Mlp(w);
    }

    static TeacherPolicy uniform(int obs_dim, nn::SimplexLayout layout) {
        TeacherPolicy t(obs_dim, std::move(layout), 1.0, {1});
        t.uniform_ = true;
        return t;
    }

    bool is_uniform() const { return uniform_; }
    double sigma() const { return sigma_; }
    void set_sigma(double s) {
        require(s > 0.0, "teacher sigma must be positive");
        sigma_ = s;
    }
    double log_floor() const { return log_floor_; }
    void set_log_floor(double f) { log_floor_ = f; }
    const nn::SimplexLayout& layout() const { return layout_; }
    int dim() const { return nn::layout_logit_dim(layout_); }
    nn::Mlp& net() { return net_; }
    const nn::Mlp& net() const { return net_; }

    Matrix mean(const Matrix& obs) const {
        if (uniform_) return Matrix::Zero(dim(), obs.cols());
        return net_.forward(obs).topRows(dim());
    }

    /// log N(u; mu(obs), sigma^2 I) with each dimension's term floored at
    /// log_floor; floored dimensions contribute zero gradient.
    Eigen::RowVectorXd log_prob(const Matrix& obs, const Matrix& u, Matrix* grad_u = nullptr) const {
        require(u.rows() == dim() && u.cols() == obs.cols(), "teacher log_prob shape mismatch");
        if (uniform_) {
            if (grad_u) *grad_u = Matrix::Zero(u.rows(), u.cols());
            return Eigen::RowVectorXd::Zero(u.cols());
        }
        const Matrix mu = mean(obs);
        const double c = std::log(sigma_) + nn::kHalfLog2Pi;
        const double s2 = sigma_ * sigma_;
        Eigen::ArrayXXd d = (u - mu).array();
        Eigen::ArrayXXd term = -d.square() / (2.0 * s2) - c;
        Eigen::ArrayXXd active = (term > log_floor_).cast<double>();
        term = term.max(log_floor_);
        if (grad_u) *grad_u = (-d / s2 * active).matrix();
        return term.matrix().colwise().sum();
    }

    /// u ~ N(mu(obs), sigma^2 I) mapped onto the simplex.
    std::vector<double> sample(const std::vector<double>& obs, Rng& rng) const {
        Eigen::Map<const Eigen::VectorXd> o(obs.data(), static_cast<Eigen::Index>(obs.size()));
        const Matrix mu = mean(Matrix(o));
        std::normal_distribution<double> n01(0.0, 1.0);
        Matrix u = mu;
        for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, 0) += sigma_ * n01(rng);
        const Matrix a = nn::to_simplex(u, layout_);
        return {a.data(), a.data() + a.size()};
    }

    std::vector<double> mean_action(const std::vector<double>& obs) const {
        Eigen::Map<const Eigen::VectorXd> o(obs.data(), static_cast<Eigen::Index>(obs.size()));
        const Matrix a = nn::to_simplex(mean(Matrix(o)), layout_);
        return {a.data(), a.data() + a.size()};
    }

    void save(const std::string& path) const {
        nn::Checkpoint c;
        c.scalars["sigma"] = sigma_;
        c.scalars["uniform"] = uniform_ ? 1.0 : 0.0;
        c.scalars["log_floor"] = log_floor_;
        c.ints["layout"] = {layout_.begin(), layout_.end()};
        c.ints["widths"] = {net_.widths().begin(), net_.widths().end()};
        c.tensors["params"] = net_.params();
        c.save(path);
    }

    static TeacherPolicy load(const std::string& path) {
        const auto c = nn::Checkpoint::load(path);
        TeacherPolicy t;
        const auto& lay = c.int_list("layout");
        t.layout_.assign(lay.begin(), lay.end());
        t.sigma_ = c.scalar("sigma");
        t.uniform_ = c.scalar("uniform") != 0.0;
        t.log_floor_ = c.scalar("log_floor");
        const auto& w = c.int_list("widths");
        t.net_ = nn::Mlp(std::vector<int>(w.begin(), w.end()));
        require(c.tensor("params").size() == t.net_.size(), "teacher checkpoint shape mismatch");
        t.net_.params() = c.tensor("params");
        return t;
    }

private:
    nn::Mlp net_;
    nn::SimplexLayout layout_;
    double sigma_ = 0.1;
    double log_floor_ = -50.0;
    bool uniform_ = false;
};

/// Mean squared error between net outputs and logit targets, averaged over
/// samples and dimensions; gradient w.r.t. the net parameters.
inline double imitation_loss(const nn::Mlp& net, const Matrix& obs, const Matrix& target,
                             Eigen::VectorXd* grad = nullptr) {
    nn::MlpCache cache;
    const Matrix y = net.forward(obs, grad ? &cache : nullptr);
    const Matrix d = y - target;
    const double n = static_cast<double>(d.size());
    if (grad) {
        grad->setZero(net.size());
        net.backward(cache, (2.0 / n) * d, *grad);
    }
    return d.squaredNorm() / n;
}

struct ImitationData {
    Matrix obs;      // obs_dim x N
    Matrix actions;  // simplex_dim x N
};

struct FitOptions {
    int max_epochs = 10000;
    int batch = 64;
    double lr = 3e-3;
    double final_lr = 3e-5;   // cosine decay target
    double threshold = 1e-3;  // held-out MSE in logit coordinates
    double holdout = 0.2;
    double clip = 1e-4;
    std::uint64_t seed = 1;
};

struct FitReport {
    double train_mse = 0.0;
    double heldout_mse = 0.0;
    int epochs = 0;
    bool converged = false;
};

/// Fits the teacher mean to (observation, action) pairs. Actions are clipped
/// to [clip, 1-clip], renormalized and mapped to logits. The best weights by
/// held-out MSE are kept.
inline FitReport fit_imitation(TeacherPolicy& teacher, const ImitationData& data,
                               const FitOptions& opt = {}) {
    require(!teacher.is_uniform(), "a uniform teacher has nothing to fit");
    const Eigen::Index N = data.obs.cols();
    require(N >= 1 && data.actions.cols() == N, "imitation dataset is empty or ragged");
    const Matrix targets = nn::logit(data.actions, teacher.layout(), opt.clip);
    Rng rng(opt.seed);
    teacher.net().init(rng);

    std::vector<Eigen::Index> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::Index n_hold = N >= 5 ? static_cast<Eigen::Index>(opt.holdout * N) : 0;
    std::vector<Eigen::Index> train(idx.begin() + n_hold, idx.end()), hold(idx.begin(), idx.begin() + n_hold);
    auto gather = [&](const std::vector<Eigen::Index>& ids, const Matrix& m) {
        Matrix out(m.rows(), static_cast<Eigen::Index>(ids.size()));
        for (size_t i = 0; i < ids.size(); ++i) out.col(i) = m.col(ids[i]);
        return out;
    };
    const Matrix Xt = gather(train, data.obs), Yt = gather(train, targets);
    const Matrix Xh = n_hold ? gather(hold, data.obs) : Xt;
    const Matrix Yh = n_hold ? gather(hold, targets) : Yt;

    nn::Adam adam(teacher.net().size(), {opt.lr});
    FitReport rep;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_params = teacher.net().params();
    Eigen::VectorXd grad;
    const Eigen::Index B = std::min<Eigen::Index>(opt.batch, Xt.cols());
    for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        const double phase = static_cast<double>(epoch - 1) / std::max(1, opt.max_epochs - 1);
        adam.options().lr = opt.final_lr + 0.5 * (opt.lr - opt.final_lr) * (1.0 + std::cos(M_PI * phase));
        std::shuffle(train.begin(), train.end(), rng);
        for (Eigen::Index start = 0; start < Xt.cols(); start += B) {
            const Eigen::Index len = std::min(B, Xt.cols() - start);
            Matrix xb(Xt.rows(), len), yb(Yt.rows(), len);
            for (Eigen::Index j = 0; j < len; ++j) {
                // train holds original indices; re-gather from the full set
                xb.col(j) = data.obs.col(train[start + j]);
                yb.col(j) = targets.col(train[start + j]);
            }
            imitation_loss(teacher.net(), xb, yb, &grad);
            adam.step(teacher.net().params(), grad);
        }
        const double h = imitation_loss(teacher.net(), Xh, Yh);
        rep.epochs = epoch;
        if (h < best) {
            best = h;
            best_params = teacher.net().params();
        }
        if (h < opt.threshold * 0.1) break;
    }
    teacher.net().params() = best_params;
    rep.heldout_mse = best;
    rep.train_mse = imitation_loss(teacher.net(), Xt, Yt);
    rep.converged = best < opt.threshold;
    return rep;
}

/// Observations from rollouts of the plan policy with logit-space exploration
/// noise, labelled with the plan's (noise-free) ratios.
inline ImitationData collect_imitation_data(env::RoutingEnv& env, const sodta::PlanPolicy& policy,
                                            int rollouts, double noise, std::uint64_t seed) {
    ImitationData d;
    std::vector<std::vector<double>> obs, act;
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    const auto& layout = env.layout();
    for (int r = 0; r < rollouts; ++r) {
        auto o = env.reset(mix_seed(seed, r));
        while (!env.done()) {
            const int t = env.t();
            const auto label = policy.act(t);
            obs.push_back(o);
            act.push_back(label);
            Eigen::Map<const Eigen::VectorXd> a(label.data(), static_cast<Eigen::Index>(label.size()));
            Matrix u = nn::logit(Matrix(a), layout, 1e-4);
            for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, 0) += noise * n01(rng);
            const Matrix noisy = nn::to_simplex(u, layout);
            o = env.step(std::vector<double>(noisy.data(), noisy.data() + noisy.size())).obs;
        }
    }
    d.obs.resize(env.obs_dim(), static_cast<Eigen::Index>(obs.size()));
    d.actions.resize(env.action_dim(), static_cast<Eigen::Index>(obs.size()));
    for (size_t i = 0; i < obs.size(); ++i) {
        d.obs.col(i) = Eigen::Map<const Eigen::VectorXd>(obs[i].data(), env.obs_dim());
        d.actions.col(i) = Eigen::Map<const Eigen::VectorXd>(act[i].data(), env.action_dim());
    }
    return d;
}

}  // namespace transrl::teacher

#endif
