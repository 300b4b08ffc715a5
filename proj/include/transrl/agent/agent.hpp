#ifndef TRANSRL_AGENT_AGENT_HPP
#define TRANSRL_AGENT_AGENT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"
#include "transrl/env/routing_env.hpp"
#include "transrl/nn/adam.hpp"
#include "transrl/nn/checkpoint.hpp"
#include "transrl/nn/mlp.hpp"
#include "transrl/nn/simplex.hpp"
#include "transrl/teacher/teacher.hpp"

namespace transrl::agent {

using nn::Matrix;
using Row = Eigen::RowVectorXd;

struct Batch {
    Matrix obs, act, next_obs;  // columns are samples; act holds simplex ratios
    Row reward, done;
    std::vector<int> interval;  // decision interval, -1 if unknown
    Row finished;               // finished-vehicle measure behind the reward

    Eigen::Index size() const { return obs.cols(); }
};

/// Ring buffer of transitions with FIFO eviction.
class ReplayBuffer {
public:
    ReplayBuffer(int obs_dim, int act_dim, Eigen::Index capacity)
        : obs_(obs_dim, capacity), act_(act_dim, capacity), next_(obs_dim, capacity),
          rew_(capacity), done_(capacity), fin_(capacity), interval_(capacity, -1),
          cap_(capacity) {
        require(capacity >= 1, "replay capacity must be positive");
    }

    void add(const std::vector<double>& o, const std::vector<double>& a, double r,
             const std::vector<double>& o2, bool done, int interval = -1, double finished = 0.0) {
        require(static_cast<Eigen::Index>(o.size()) == obs_.rows() &&
                    static_cast<Eigen::Index>(o2.size()) == obs_.rows() &&
                    static_cast<Eigen::Index>(a.size()) == act_.rows(),
                "transition dimension mismatch");
        const Eigen::Index i = head_;
        obs_.col(i) = Eigen::Map<const Eigen::VectorXd>(o.data(), obs_.rows());
        act_.col(i) = Eigen::Map<const Eigen::VectorXd>(a.data(), act_.rows());
        next_.col(i) = Eigen::Map<const Eigen::VectorXd>(o2.data(), obs_.rows());
        rew_[i] = r;
        done_[i] = done ? 1.0 : 0.0;
        interval_[i] = interval;
        fin_[i] = finished;
        head_ = (head_ + 1) % cap_;
        size_ = std::min(size_ + 1, cap_);
        ++total_;
    }

    Eigen::Index size() const { return size_; }
    Eigen::Index capacity() const { return cap_; }
    long long total_added() const { return total_; }

    /// Distinct indices within a batch (Floyd's sampling); batch is capped at size().
    Batch sample(Eigen::Index n, Rng& rng) const {
        require(size_ > 0, "cannot sample an empty replay buffer");
        n = std::min(n, size_);
        std::vector<Eigen::Index> ids;
        ids.reserve(n);
        std::unordered_set<Eigen::Index> chosen;
        for (Eigen::Index j = size_ - n; j < size_; ++j) {
            std::uniform_int_distribution<Eigen::Index> u(0, j);
            Eigen::Index t = u(rng);
            if (chosen.count(t)) t = j;
            chosen.insert(t);
            ids.push_back(t);
        }
        return gather(ids);
    }

    Batch gather(const std::vector<Eigen::Index>& ids) const {
        Batch b;
        const auto n = static_cast<Eigen::Index>(ids.size());
        b.obs.resize(obs_.rows(), n);
        b.act.resize(act_.rows(), n);
        b.next_obs.resize(obs_.rows(), n);
        b.reward.resize(n);
        b.done.resize(n);
        b.interval.resize(n);
        b.finished.resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto i = ids[k];
            b.obs.col(k) = obs_.col(i);
            b.act.col(k) = act_.col(i);
            b.next_obs.col(k) = next_.col(i);
            b.reward[k] = rew_[i];
            b.done[k] = done_[i];
            b.interval[k] = interval_[i];
            b.finished[k] = fin_[i];
        }
        return b;
    }

    /// Oldest-first slot order, for tests of the eviction rule.
    double reward_at_age(Eigen::Index age) const {
        require(age >= 0 && age < size_, "age out of range");
        const Eigen::Index oldest = size_ < cap_ ? 0 : head_;
        return rew_[(oldest + age) % cap_];
    }

private:
    Matrix obs_, act_, next_;
    Eigen::VectorXd rew_, done_, fin_;
    std::vector<int> interval_;
    Eigen::Index cap_ = 0, head_ = 0, size_ = 0;
    long long total_ = 0;
};

struct AgentConfig {
    double alpha = 0.2;
    double gamma = 0.99;
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    double tau = 0.005;
    int batch = 256;
    int buffer = 100000;
    int warmup_steps = 1000;
    int update_every = 1;
    int updates_per_step = 1;
    std::vector<int> hidden{64, 64};
    double log_std_min = -20.0;
    double log_std_max = 2.0;
    std::uint64_t seed = 1;
    bool init_from_teacher = true;  // start the actor mean at the teacher mean (ignored for a uniform teacher)
    bool relabel_rewards = true;    // recompute sampled rewards against the current baseline

    void validate() const {
        require(alpha > 0.0, "alpha must be positive");
        require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
        require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
        require(batch >= 1 && buffer >= 1, "batch and buffer must be positive");
        require(warmup_steps >= 0 && update_every >= 1 && updates_per_step >= 1,
                "invalid update cadence");
    }
};

struct CriticLoss {
    double q1 = 0.0, q2 = 0.0;
    bool skipped = false;
};

/// Actor-critic with clipped double critics whose targets and actor loss
/// carry the teacher log-density. A uniform teacher yields the max-entropy
/// special case.
class Agent {
public:
    Agent(int obs_dim, nn::SimplexLayout layout, const teacher::TeacherPolicy& teacher,
          AgentConfig cfg)
        : cfg_(std::move(cfg)), layout_(std::move(layout)), teacher_(&teacher), rng_(cfg_.seed) {
        cfg_.validate();
        require(nn::layout_logit_dim(layout_) >= 1, "no controllable path choice");
        require(teacher.layout() == layout_, "teacher and agent layouts differ");
        obs_dim_ = obs_dim;
        D_ = nn::layout_logit_dim(layout_);
        A_ = nn::layout_simplex_dim(layout_);
        head_.log_std_min = cfg_.log_std_min;
        head_.log_std_max = cfg_.log_std_max;
        std::vector<int> aw{obs_dim};
        aw.insert(aw.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        aw.push_back(2 * D_);
        std::vector<int> qw{obs_dim + A_};
        qw.insert(qw.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        qw.push_back(1);
        actor_ = nn::Mlp(aw);
        q1_ = nn::Mlp(qw);
        q2_ = nn::Mlp(qw);
        Rng init(mix_seed(cfg_.seed, 0xA11CE));
        actor_.init(init);
        q1_.init(init);
        q2_.init(init);
        if (cfg_.init_from_teacher && !teacher.is_uniform()) copy_teacher(teacher);
        q1t_ = q1_;
        q2t_ = q2_;
        actor_opt_ = nn::Adam(actor_.size(), {cfg_.actor_lr});
        q1_opt_ = nn::Adam(q1_.size(), {cfg_.critic_lr});
        q2_opt_ = nn::Adam(q2_.size(), {cfg_.critic_lr});
    }

    const AgentConfig& config() const { return cfg_; }
    AgentConfig& config() { return cfg_; }
    const nn::SimplexLayout& layout() const { return layout_; }
    const teacher::TeacherPolicy& teacher() const { return *teacher_; }
    int logit_dim() const { return D_; }
    int action_dim() const { return A_; }
    int obs_dim() const { return obs_dim_; }
    nn::Mlp& actor() { return actor_; }
    nn::Mlp& critic1() { return q1_; }
    nn::Mlp& critic2() { return q2_; }
    nn::Mlp& target1() { return q1t_; }
    nn::Mlp& target2() { return q2t_; }
    const nn::Mlp& actor() const { return actor_; }
    const nn::Mlp& critic1() const { return q1_; }
    const nn::Mlp& critic2() const { return q2_; }
    const nn::PolicyHead& head() const { return head_; }
    Rng& rng() { return rng_; }
    long skipped_updates() const { return skipped_; }

    Matrix draw_eps(Eigen::Index n) {
        std::normal_distribution<double> n01(0.0, 1.0);
        Matrix e(D_, n);
        for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = n01(rng_);
        return e;
    }

    static Matrix stack(const Matrix& obs, const Matrix& act) {
        Matrix x(obs.rows() + act.rows(), obs.cols());
        x.topRows(obs.rows()) = obs;
        x.bottomRows(act.rows()) = act;
        return x;
    }

    /// r + gamma (1 - done) ( min_i Qbar_i(s', a') + alpha [log pi_TC(u'|s') - log pi(u'|s')] ),
    /// u' = mean + std * eps_next from the current actor, a' its simplex image.
    Row q_target(const Batch& b, const Matrix& eps_next) const {
        const auto s = head_.sample(actor_.forward(b.next_obs), eps_next);
        const Matrix a = nn::to_simplex(s.u, layout_);
        const Matrix x = stack(b.next_obs, a);
        const Row q1 = q1t_.forward(x).row(0);
        const Row q2 = q2t_.forward(x).row(0);
        const Row tc = teacher_->log_prob(b.next_obs, s.u);
        Row v = q1.cwiseMin(q2) + cfg_.alpha * (tc - s.log_prob);
        return b.reward + cfg_.gamma * ((1.0 - b.done.array()) * v.array()).matrix();
    }

    /// mean_b (Q(s,a) - target)^2 and its parameter gradient.
    static double critic_loss(const nn::Mlp& q, const Batch& b, const Row& target,
                              Eigen::VectorXd* grad = nullptr) {
        nn::MlpCache cache;
        const Row pred = q.forward(stack(b.obs, b.act), grad ? &cache : nullptr).row(0);
        const Row d = pred - target;
        const double n = static_cast<double>(d.size());
        if (grad) {
            grad->setZero(q.size());
            q.backward(cache, Matrix((2.0 / n) * d), *grad);
        }
        return d.squaredNorm() / n;
    }

    /// mean_b [ log pi(u|s) - log pi_TC(u|s) - min_i Q_i(s, a)/alpha ],
    /// u = mean + std * eps; gradient w.r.t. the actor parameters.
    double actor_loss(const Batch& b, const Matrix& eps, Eigen::VectorXd* grad = nullptr) const {
        nn::MlpCache ac;
        const Matrix h = actor_.forward(b.obs, &ac);
        const auto s = head_.sample(h, eps);
        const Matrix a = nn::to_simplex(s.u, layout_);
        const Matrix x = stack(b.obs, a);
        nn::MlpCache c1, c2;
        const Row q1 = q1_.forward(x, &c1).row(0);
        const Row q2 = q2_.forward(x, &c2).row(0);
        Matrix g_tc;
        const Row tc = teacher_->log_prob(b.obs, s.u, &g_tc);
        const Row q = q1.cwiseMin(q2);
        const double n = static_cast<double>(b.size());
        const double loss = (s.log_prob - tc - q / cfg_.alpha).sum() / n;
        if (!grad) return loss;

        // dQ/da through whichever critic is smaller (ties: first).
        Matrix dy1 = Matrix::Zero(1, b.size()), dy2 = Matrix::Zero(1, b.size());
        for (Eigen::Index k = 0; k < b.size(); ++k) (q1[k] <= q2[k] ? dy1 : dy2)(0, k) = 1.0;
        Matrix dx1, dx2;
        q1_.backward(c1, dy1, nullptr, &dx1);
        q2_.backward(c2, dy2, nullptr, &dx2);
        const Matrix dq_da = (dx1 + dx2).bottomRows(A_);
        const Matrix dq_du = nn::simplex_vjp(a, dq_da, layout_);
        const Matrix g_u = (-g_tc - dq_du / cfg_.alpha) / n;
        const Row c_lp = Row::Constant(b.size(), 1.0 / n);
        grad->setZero(actor_.size());
        actor_.backward(ac, head_.backward(s, g_u, c_lp), *grad);
        return loss;
    }

    CriticLoss update_critics(const Batch& b, const Matrix& eps_next) {
        const Row target = q_target(b, eps_next);
        CriticLoss out;
        Eigen::VectorXd g1, g2;
        out.q1 = critic_loss(q1_, b, target, &g1);
        out.q2 = critic_loss(q2_, b, target, &g2);
        if (!std::isfinite(out.q1) || !std::isfinite(out.q2)) {
            out.skipped = true;
            ++skipped_;
            return out;
        }
        if (!q1_opt_.step(q1_.params(), g1)) out.skipped = true;
        if (!q2_opt_.step(q2_.params(), g2)) out.skipped = true;
        if (out.skipped) ++skipped_;
        return out;
    }

    /// Returns NaN when the step was skipped.
    double update_actor(const Batch& b, const Matrix& eps) {
        Eigen::VectorXd g;
        const double loss = actor_loss(b, eps, &g);
        if (!std::isfinite(loss) || !actor_opt_.step(actor_.params(), g)) {
            ++skipped_;
            return std::numeric_limits<double>::quiet_NaN();
        }
        return loss;
    }

    void update_targets() {
        q1t_.polyak_from(q1_, cfg_.tau);
        q2t_.polyak_from(q2_, cfg_.tau);
    }

    std::vector<double> act(const std::vector<double>& obs, bool deterministic) {
        Eigen::Map<const Eigen::VectorXd> o(obs.data(), static_cast<Eigen::Index>(obs.size()));
        const Matrix h = actor_.forward(Matrix(o));
        Matrix u;
        if (deterministic) {
            u = h.topRows(D_);
        } else {
            u = head_.sample(h, draw_eps(1)).u;
        }
        const Matrix a = nn::to_simplex(u, layout_);
        return {a.data(), a.data() + a.size()};
    }

    std::vector<double> act_deterministic(const std::vector<double>& obs) const {
        Eigen::Map<const Eigen::VectorXd> o(obs.data(), static_cast<Eigen::Index>(obs.size()));
        const Matrix a = nn::to_simplex(actor_.forward(Matrix(o)).topRows(D_), layout_);
        return {a.data(), a.data() + a.size()};
    }

    /// Exploration before learning starts: teacher samples, or Dirichlet(1)
    /// per OD for a uniform teacher.
    std::vector<double> warmup_action(const std::vector<double>& obs) {
        if (!teacher_->is_uniform()) return teacher_->sample(obs, rng_);
        std::vector<double> a;
        std::exponential_distribution<double> ex(1.0);
        for (int k : layout_) {
            std::vector<double> g(k);
            double s = 0.0;
            for (double& x : g) s += (x = ex(rng_));
            for (double x : g) a.push_back(x / s);
        }
        return a;
    }

    void save(const std::string& path) const {
        nn::Checkpoint c;
        c.scalars["alpha"] = cfg_.alpha;
        c.scalars["gamma"] = cfg_.gamma;
        c.scalars["teacher_sigma"] = teacher_->sigma();
        c.scalars["teacher_uniform"] = teacher_->is_uniform() ? 1.0 : 0.0;
        c.ints["layout"] = {layout_.begin(), layout_.end()};
        c.ints["actor_widths"] = {actor_.widths().begin(), actor_.widths().end()};
        c.ints["critic_widths"] = {q1_.widths().begin(), q1_.widths().end()};
        c.tensors["actor"] = actor_.params();
        c.tensors["critic1"] = q1_.params();
        c.tensors["critic2"] = q2_.params();
        c.tensors["target1"] = q1t_.params();
        c.tensors["target2"] = q2t_.params();
        c.save(path);
    }

    void load(const std::string& path) {
        const auto c = nn::Checkpoint::load(path);
        const auto& lay = c.int_list("layout");
        require(nn::SimplexLayout(lay.begin(), lay.end()) == layout_, "checkpoint layout mismatch");
        auto put = [&](nn::Mlp& m, const char* key) {
            require(c.tensor(key).size() == m.size(), std::string("checkpoint shape mismatch: ") + key);
            m.params() = c.tensor(key);
        };
        put(actor_, "actor");
        put(q1_, "critic1");
        put(q2_, "critic2");
        put(q1t_, "target1");
        put(q2t_, "target2");
    }

private:
    // Hidden layers and mean rows copied from the teacher net; log-std rows
    // start constant at log sigma.
    void copy_teacher(const teacher::TeacherPolicy& t) {
        const auto& tw = t.net().widths();
        require(std::vector<int>(tw.begin() + 1, tw.end() - 1) == cfg_.hidden && tw.front() == obs_dim_,
                "teacher initialization needs matching hidden widths");
        const int L = static_cast<int>(tw.size()) - 1;
        for (int l = 0; l + 1 < L; ++l) {
            actor_.weight(l) = t.net().weight(l);
            actor_.bias(l) = t.net().bias(l);
        }
        actor_.weight(L - 1).topRows(D_) = t.net().weight(L - 1);
        actor_.bias(L - 1).head(D_) = t.net().bias(L - 1);
        actor_.weight(L - 1).bottomRows(D_).setZero();
        actor_.bias(L - 1).tail(D_).setConstant(
            std::clamp(std::log(t.sigma()), cfg_.log_std_min, cfg_.log_std_max));
    }

    AgentConfig cfg_;
    nn::SimplexLayout layout_;
    const teacher::TeacherPolicy* teacher_;
    int obs_dim_ = 0, D_ = 0, A_ = 0;
    nn::PolicyHead head_;
    nn::Mlp actor_, q1_, q2_, q1t_, q2t_;
    nn::Adam actor_opt_, q1_opt_, q2_opt_;
    Rng rng_;
    long skipped_ = 0;
};

struct EpisodeRecord {
    int episode = 0;
    double ret = 0.0;  // undiscounted sum of rewards
    double ttt = 0.0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    std::vector<double> probe_profile;  // deterministic first-path ratio per horizon interval
};

struct TrainOptions {
    int episodes = 200;
    std::uint64_t env_seed = 1;       // episode e uses mix_seed(env_seed, e)
    bool probe = true;                // deterministic probe rollout after each episode
    std::uint64_t probe_seed = 12345;
    double watchdog_ttt = std::numeric_limits<double>::infinity();  // no-control baseline TTT
    int watchdog_patience = 200;
    std::function<void(const EpisodeRecord&)> on_episode;
};

struct TrainResult {
    std::vector<EpisodeRecord> curve;
    bool aborted = false;
    std::string diagnostics;
    long long env_steps = 0;
};

/// Deterministic rollout; returns the first controlled path's ratio over the horizon.
inline std::vector<double> probe_profile(const Agent& agent, env::RoutingEnv probe,
                                         std::uint64_t seed) {
    probe.set_tracker(nullptr);
    auto o = probe.reset(seed);
    std::vector<double> prof;
    while (!probe.done()) {
        const auto a = agent.act_deterministic(o);
        if (probe.t() < probe.horizon()) prof.push_back(a.front());
        o = probe.step(a).obs;
    }
    return prof;
}

/// Episode loop: act, store, then one critic/actor/target update per step
/// once warmup is over. The tracker baseline is updated after each episode.
inline TrainResult train(env::RoutingEnv& env, env::RewardTracker& tracker, Agent& agent,
                         const TrainOptions& opt) {
    require(env.layout() == agent.layout(), "environment and agent layouts differ");
    require(env.obs_dim() == agent.obs_dim(), "environment and agent observation sizes differ");
    TrainResult res;
    const auto& cfg = agent.config();
    ReplayBuffer buffer(env.obs_dim(), env.action_dim(), cfg.buffer);
    env.set_tracker(&tracker);
    tracker.freeze(false);
    env::RoutingEnv probe_env = env;
    int over_baseline = 0;
    for (int ep = 0; ep < opt.episodes; ++ep) {
        auto o = env.reset(mix_seed(opt.env_seed, ep));
        EpisodeRecord rec;
        rec.episode = ep;
        int n_updates = 0;
        while (!env.done()) {
            const bool warm = res.env_steps < cfg.warmup_steps;
            const auto a = warm ? agent.warmup_action(o) : agent.act(o, false);
            const int t = env.t();
            const auto step = env.step(a);
            buffer.add(o, a, step.reward, step.obs, step.done, t, step.finished);
            rec.ret += step.reward;
            o = step.obs;
            ++res.env_steps;
            if (!warm && res.env_steps % cfg.update_every == 0) {
                for (int u = 0; u < cfg.updates_per_step; ++u) {
                    Batch b = buffer.sample(cfg.batch, agent.rng());
                    if (cfg.relabel_rewards)
                        for (Eigen::Index k = 0; k < b.size(); ++k)
                            b.reward[k] = tracker.reward(b.interval[k], b.finished[k]);
                    const auto cl = agent.update_critics(b, agent.draw_eps(b.size()));
                    const double al = agent.update_actor(b, agent.draw_eps(b.size()));
                    agent.update_targets();
                    rec.critic_loss += 0.5 * (cl.q1 + cl.q2);
                    rec.actor_loss += std::isfinite(al) ? al : 0.0;
                    ++n_updates;
                }
            }
        }
        if (n_updates > 0) {
            rec.critic_loss /= n_updates;
            rec.actor_loss /= n_updates;
        }
        rec.ttt = env.total_travel_time();
        tracker.update(env.finished_sequence());
        if (opt.probe) rec.probe_profile = probe_profile(agent, probe_env, opt.probe_seed);
        res.curve.push_back(rec);
        if (opt.on_episode) opt.on_episode(rec);
        over_baseline = rec.ttt > opt.watchdog_ttt ? over_baseline + 1 : 0;
        if (over_baseline >= opt.watchdog_patience) {
            res.aborted = true;
            res.diagnostics = "episode TTT above the no-control baseline for " +
                              std::to_string(over_baseline) + " consecutive episodes (last " +
                              std::to_string(rec.ttt) + " veh-h)";
            break;
        }
    }
    env.set_tracker(nullptr);
    return res;
}

}  // namespace transrl::agent

#endif
