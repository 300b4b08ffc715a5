#ifndef TRANSRL_TESTS_REFERENCE_SAC_HPP
#define TRANSRL_TESTS_REFERENCE_SAC_HPP

// Textbook max-entropy actor-critic losses written sample by sample on the
// scalar tape. Shares only the flat parameter layout with the library
// (per layer: column-major out x in weight, then bias).

#include <cmath>
#include <vector>

#include "tape.hpp"

namespace refsac {

using tape::Var;

struct Net {
    std::vector<int> widths;
    std::vector<Var> params;
};

inline Net make_net(tape::Tape& t, const std::vector<int>& widths, const double* p, long n) {
    Net net{widths, {}};
    for (long i = 0; i < n; ++i) net.params.push_back(tape::leaf(t, p[i]));
    return net;
}

inline std::vector<Var> forward(const Net& net, std::vector<Var> x) {
    long off = 0;
    const int L = static_cast<int>(net.widths.size()) - 1;
    for (int l = 0; l < L; ++l) {
        const int in = net.widths[l], out = net.widths[l + 1];
        std::vector<Var> y(out);
        for (int i = 0; i < out; ++i) {
            Var acc = net.params[off + static_cast<long>(out) * in + i];
            for (int j = 0; j < in; ++j) acc = acc + net.params[off + static_cast<long>(j) * out + i] * x[j];
            y[i] = l + 1 < L ? tape::relu(acc) : acc;
        }
        off += static_cast<long>(out) * in + out;
        x = std::move(y);
    }
    return x;
}

/// Additive-logistic map of one sample: per group of k paths, k-1 logits.
inline std::vector<Var> squash(tape::Tape& t, const std::vector<Var>& u, const std::vector<int>& layout) {
    std::vector<Var> a;
    int off = 0;
    for (int k : layout) {
        Var den = tape::leaf(t, 1.0);
        std::vector<Var> e;
        for (int i = 0; i < k - 1; ++i) {
            e.push_back(tape::exp(u[off + i]));
            den = den + e.back();
        }
        for (auto& v : e) a.push_back(v / den);
        a.push_back(tape::leaf(t, 1.0) / den);
        off += k - 1;
    }
    return a;
}

struct Sampled {
    std::vector<Var> u;
    Var log_prob;
};

inline Sampled reparam(tape::Tape& t, const std::vector<Var>& head, const std::vector<double>& eps,
                       double ls_min, double ls_max) {
    const int D = static_cast<int>(eps.size());
    Sampled s;
    s.log_prob = tape::leaf(t, 0.0);
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
    for (int d = 0; d < D; ++d) {
        Var ls = tape::clamp(head[D + d], ls_min, ls_max);
        s.u.push_back(head[d] + tape::exp(ls) * eps[d]);
        s.log_prob = s.log_prob - ls - (0.5 * eps[d] * eps[d] + half_log_2pi);
    }
    return s;
}

struct Problem {
    std::vector<int> layout;
    std::vector<int> actor_widths, critic_widths;
    std::vector<double> actor, q1, q2, q1t, q2t;
    double alpha = 0.2, gamma = 0.99, ls_min = -20.0, ls_max = 2.0;
    // batch, sample-major
    std::vector<std::vector<double>> obs, act, next_obs, eps, eps_next;
    std::vector<double> reward, done;
};

inline std::vector<Var> concat(tape::Tape& t, const std::vector<double>& o, const std::vector<Var>& a) {
    std::vector<Var> x;
    for (double v : o) x.push_back(tape::leaf(t, v));
    x.insert(x.end(), a.begin(), a.end());
    return x;
}

/// y = r + gamma (1 - d) ( min_i Qbar_i(s', a') - alpha log pi(u'|s') )
inline std::vector<double> targets(const Problem& pb) {
    std::vector<double> y;
    for (size_t b = 0; b < pb.obs.size(); ++b) {
        tape::Tape t;
        auto actor = make_net(t, pb.actor_widths, pb.actor.data(), pb.actor.size());
        auto t1 = make_net(t, pb.critic_widths, pb.q1t.data(), pb.q1t.size());
        auto t2 = make_net(t, pb.critic_widths, pb.q2t.data(), pb.q2t.size());
        std::vector<Var> o;
        for (double v : pb.next_obs[b]) o.push_back(tape::leaf(t, v));
        const auto s = reparam(t, forward(actor, o), pb.eps_next[b], pb.ls_min, pb.ls_max);
        const auto a = squash(t, s.u, pb.layout);
        const Var q = tape::min(forward(t1, concat(t, pb.next_obs[b], a))[0],
                                forward(t2, concat(t, pb.next_obs[b], a))[0]);
        y.push_back(pb.reward[b] + pb.gamma * (1.0 - pb.done[b]) * (q.v() - pb.alpha * s.log_prob.v()));
    }
    return y;
}

/// mean_b (Q(s,a) - y)^2 and its gradient w.r.t. the critic parameters.
inline double critic_loss(const Problem& pb, const std::vector<double>& q, const std::vector<double>& y,
                          std::vector<double>& grad) {
    tape::Tape t;
    auto net = make_net(t, pb.critic_widths, q.data(), q.size());
    Var loss = tape::leaf(t, 0.0);
    for (size_t b = 0; b < pb.obs.size(); ++b) {
        std::vector<Var> a;
        for (double v : pb.act[b]) a.push_back(tape::leaf(t, v));
        const Var d = forward(net, concat(t, pb.obs[b], a))[0] - y[b];
        loss = loss + d * d;
    }
    loss = loss * (1.0 / pb.obs.size());
    const auto g = t.grad(loss.id);
    grad.assign(q.size(), 0.0);
    for (size_t i = 0; i < q.size(); ++i) grad[i] = g[net.params[i].id];
    return loss.v();
}

/// mean_b [ alpha log pi(u|s) - min_i Q_i(s, a(u)) ] and its actor gradient.
inline double actor_loss(const Problem& pb, std::vector<double>& grad) {
    tape::Tape t;
    auto actor = make_net(t, pb.actor_widths, pb.actor.data(), pb.actor.size());
    auto c1 = make_net(t, pb.critic_widths, pb.q1.data(), pb.q1.size());
    auto c2 = make_net(t, pb.critic_widths, pb.q2.data(), pb.q2.size());
    Var loss = tape::leaf(t, 0.0);
    for (size_t b = 0; b < pb.obs.size(); ++b) {
        std::vector<Var> o;
        for (double v : pb.obs[b]) o.push_back(tape::leaf(t, v));
        const auto s = reparam(t, forward(actor, o), pb.eps[b], pb.ls_min, pb.ls_max);
        const auto a = squash(t, s.u, pb.layout);
        const Var q = tape::min(forward(c1, concat(t, pb.obs[b], a))[0],
                                forward(c2, concat(t, pb.obs[b], a))[0]);
        loss = loss + pb.alpha * s.log_prob - q;
    }
    loss = loss * (1.0 / pb.obs.size());
    const auto g = t.grad(loss.id);
    grad.assign(pb.actor.size(), 0.0);
    for (size_t i = 0; i < pb.actor.size(); ++i) grad[i] = g[actor.params[i].id];
    return loss.v();
}

}  // namespace refsac

#endif
