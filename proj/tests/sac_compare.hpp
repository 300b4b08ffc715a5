#ifndef TRANSRL_TESTS_SAC_COMPARE_HPP
#define TRANSRL_TESTS_SAC_COMPARE_HPP

// Side-by-side evaluation of the agent with a uniform teacher against the
// scalar-tape max-entropy reference on one random batch.

#include <algorithm>
#include <cmath>
#include <random>

#include "reference_sac.hpp"
#include "transrl/agent/agent.hpp"

namespace sac_compare {

using transrl::Rng;
using transrl::nn::Matrix;

struct Discrepancy {
    double target = 0.0;       // max |y_lib - y_ref|, scaled by max(1, |y_ref|)
    double critic_grad = 0.0;  // same for both critics' gradients
    double actor_grad = 0.0;   // alpha * lib gradient vs reference gradient
    double actor_loss = 0.0;   // (alpha * lib loss - ref loss) spread over samples: should be constant 0
};

inline double scaled(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Discrepancy compare(std::uint64_t seed, int batch = 8) {
    using namespace transrl;
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const nn::SimplexLayout layout{2, 3};
    const int obs_dim = 3;
    agent::AgentConfig cfg;
    cfg.hidden = {6, 5};
    cfg.alpha = 0.05 + u01(rng);
    cfg.gamma = 0.5 + 0.5 * u01(rng);
    cfg.seed = seed;
    cfg.log_std_min = -3.0;
    cfg.log_std_max = 1.0;
    const auto teacher = teacher::TeacherPolicy::uniform(obs_dim, layout);
    agent::Agent ag(obs_dim, layout, teacher, cfg);
    // independent random weights everywhere, including targets
    for (nn::Mlp* m : {&ag.actor(), &ag.critic1(), &ag.critic2(), &ag.target1(), &ag.target2()})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->params()[i] = 0.6 * n01(rng);

    agent::Batch b;
    const int D = ag.logit_dim(), A = ag.action_dim();
    b.obs = Matrix(obs_dim, batch);
    b.next_obs = Matrix(obs_dim, batch);
    Matrix u(D, batch);
    for (Eigen::Index i = 0; i < b.obs.size(); ++i) {
        b.obs.data()[i] = n01(rng);
        b.next_obs.data()[i] = n01(rng);
    }
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = n01(rng);
    b.act = nn::to_simplex(u, layout);
    b.reward = agent::Row(batch);
    b.done = agent::Row(batch);
    for (int k = 0; k < batch; ++k) {
        b.reward[k] = n01(rng);
        b.done[k] = u01(rng) < 0.25 ? 1.0 : 0.0;
    }
    Matrix eps(D, batch), eps_next(D, batch);
    for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps.data()[i] = n01(rng);
        eps_next.data()[i] = n01(rng);
    }

    refsac::Problem pb;
    pb.layout = layout;
    pb.actor_widths = ag.actor().widths();
    pb.critic_widths = ag.critic1().widths();
    pb.actor = to_vec(ag.actor().params());
    pb.q1 = to_vec(ag.critic1().params());
    pb.q2 = to_vec(ag.critic2().params());
    pb.q1t = to_vec(ag.target1().params());
    pb.q2t = to_vec(ag.target2().params());
    pb.alpha = cfg.alpha;
    pb.gamma = cfg.gamma;
    pb.ls_min = cfg.log_std_min;
    pb.ls_max = cfg.log_std_max;
    for (int k = 0; k < batch; ++k) {
        pb.obs.push_back(to_vec(b.obs.col(k)));
        pb.next_obs.push_back(to_vec(b.next_obs.col(k)));
        pb.act.push_back(to_vec(b.act.col(k)));
        pb.eps.push_back(to_vec(eps.col(k)));
        pb.eps_next.push_back(to_vec(eps_next.col(k)));
        pb.reward.push_back(b.reward[k]);
        pb.done.push_back(b.done[k]);
    }
    (void)A;

    Discrepancy out;
    const agent::Row y = ag.q_target(b, eps_next);
    const auto y_ref = refsac::targets(pb);
    for (int k = 0; k < batch; ++k) out.target = std::max(out.target, scaled(y[k], y_ref[k]));

    // critic gradients against the reference targets
    for (auto [net, params] : {std::pair{&ag.critic1(), &pb.q1}, std::pair{&ag.critic2(), &pb.q2}}) {
        Eigen::VectorXd g;
        agent::Agent::critic_loss(*net, b, y, &g);
        std::vector<double> g_ref;
        refsac::critic_loss(pb, *params, y_ref, g_ref);
        for (size_t i = 0; i < g_ref.size(); ++i)
            out.critic_grad = std::max(out.critic_grad, scaled(g[static_cast<Eigen::Index>(i)], g_ref[i]));
    }

    Eigen::VectorXd g;
    const double loss = ag.actor_loss(b, eps, &g);
    std::vector<double> g_ref;
    const double loss_ref = refsac::actor_loss(pb, g_ref);
    for (size_t i = 0; i < g_ref.size(); ++i)
        out.actor_grad = std::max(out.actor_grad, scaled(cfg.alpha * g[static_cast<Eigen::Index>(i)], g_ref[i]));
    out.actor_loss = scaled(cfg.alpha * loss, loss_ref);
    return out;
}

}  // namespace sac_compare

#endif
