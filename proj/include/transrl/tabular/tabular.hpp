#ifndef TRANSRL_TABULAR_TABULAR_HPP
#define TRANSRL_TABULAR_TABULAR_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"

namespace transrl::tabular {

using Table = Eigen::MatrixXd;  // [state, action]

/// Finite MDP with a strictly positive teacher table.
struct TabularMdp {
    int S = 0, A = 0;
    std::vector<Table> P;  // P[s](a, s') = p(s' | s, a)
    Table r;               // r(s, a)
    double gamma = 0.9;
    Table teacher;         // pi_TC(a | s), rows sum to one
    double teacher_floor = 1e-6;

    void validate() const {
        require(S >= 1 && A >= 1, "MDP needs at least one state and action");
        require(gamma >= 0.0 && gamma < 1.0, "gamma must be in [0, 1)");
        require(static_cast<int>(P.size()) == S, "transition tensor size mismatch");
        require(r.rows() == S && r.cols() == A, "reward table size mismatch");
        require(teacher.rows() == S && teacher.cols() == A, "teacher table size mismatch");
        for (int s = 0; s < S; ++s) {
            require(P[s].rows() == A && P[s].cols() == S, "transition block size mismatch");
            for (int a = 0; a < A; ++a) {
                require((P[s].row(a).array() >= 0.0).all(), "negative transition probability");
                require(std::abs(P[s].row(a).sum() - 1.0) <= 1e-12, "transition row does not sum to one");
            }
            require(std::abs(teacher.row(s).sum() - 1.0) <= 1e-12, "teacher row does not sum to one");
            require((teacher.row(s).array() >= teacher_floor).all(), "teacher below floor");
        }
    }
};

inline void check_policy(const TabularMdp& m, const Table& pi) {
    require(pi.rows() == m.S && pi.cols() == m.A, "policy table size mismatch");
    for (int s = 0; s < m.S; ++s) {
        require((pi.row(s).array() >= 0.0).all(), "negative policy probability");
        require(std::abs(pi.row(s).sum() - 1.0) <= 1e-9, "policy row does not sum to one");
    }
}

/// E_{a~pi}[ log pi_TC(a|s) - log pi(a|s) ] per state (zero-probability actions contribute 0).
inline Eigen::VectorXd kl_bonus(const TabularMdp& m, const Table& pi) {
    Eigen::VectorXd b(m.S);
    for (int s = 0; s < m.S; ++s) {
        double v = 0.0;
        for (int a = 0; a < m.A; ++a)
            if (pi(s, a) > 0.0) v += pi(s, a) * (std::log(m.teacher(s, a)) - std::log(pi(s, a)));
        b[s] = v;
    }
    return b;
}

/// r^pi(s,a) = r(s,a) + gamma alpha E_{s'}[ E_{a'~pi} log(pi_TC/pi) ]
inline Table augmented_reward(const TabularMdp& m, const Table& pi, double alpha) {
    const Eigen::VectorXd kl = kl_bonus(m, pi);
    Table out = m.r;
    for (int s = 0; s < m.S; ++s) out.row(s) += (m.gamma * alpha * (m.P[s] * kl)).transpose();
    return out;
}

/// One sweep of the modified Bellman backup.
inline Table bellman_backup(const TabularMdp& m, const Table& pi, double alpha, const Table& Q) {
    Eigen::VectorXd v(m.S);
    const Eigen::VectorXd kl = kl_bonus(m, pi);
    for (int s = 0; s < m.S; ++s) v[s] = pi.row(s).dot(Q.row(s)) + alpha * kl[s];
    Table out(m.S, m.A);
    for (int s = 0; s < m.S; ++s) out.row(s) = m.r.row(s) + m.gamma * (m.P[s] * v).transpose();
    return out;
}

struct IterativeResult {
    Table Q;
    int sweeps = 0;
    bool converged = false;
    std::vector<double> errors;  // sup-norm distance to `reference` per sweep, when given
};

/// Q^{k+1} = r + gamma E_{s'}[ E_{a'~pi}[Q^k + alpha log(pi_TC/pi)] ] from Q^0 = 0.
inline IterativeResult evaluate_policy_iterative(const TabularMdp& m, const Table& pi, double alpha,
                                                 double tol = 1e-10, int max_sweeps = 100000,
                                                 const Table* reference = nullptr) {
    check_policy(m, pi);
    IterativeResult res;
    res.Q = Table::Zero(m.S, m.A);
    if (reference) res.errors.push_back((res.Q - *reference).cwiseAbs().maxCoeff());
    for (int k = 1; k <= max_sweeps; ++k) {
        Table next = bellman_backup(m, pi, alpha, res.Q);
        const double change = (next - res.Q).cwiseAbs().maxCoeff();
        res.Q = std::move(next);
        res.sweeps = k;
        if (reference) res.errors.push_back((res.Q - *reference).cwiseAbs().maxCoeff());
        if (change < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

/// Solves Q = r^pi + gamma P^pi Q as an (S*A)-dimensional linear system.
inline Table evaluate_policy_exact(const TabularMdp& m, const Table& pi, double alpha) {
    check_policy(m, pi);
    require(m.gamma < 1.0, "exact evaluation needs gamma < 1");
    const int n = m.S * m.A;
    const Table ra = augmented_reward(m, pi, alpha);
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (int s = 0; s < m.S; ++s)
        for (int a = 0; a < m.A; ++a) {
            const int i = s * m.A + a;
            b[i] = ra(s, a);
            for (int s2 = 0; s2 < m.S; ++s2)
                for (int a2 = 0; a2 < m.A; ++a2)
                    M(i, s2 * m.A + a2) -= m.gamma * m.P[s](a, s2) * pi(s2, a2);
        }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    const Eigen::VectorXd x = lu.solve(b);
    if (!x.allFinite() || (M * x - b).cwiseAbs().maxCoeff() > 1e-8)
        throw InvariantViolation("singular policy-evaluation system");
    Table Q(m.S, m.A);
    for (int s = 0; s < m.S; ++s)
        for (int a = 0; a < m.A; ++a) Q(s, a) = x[s * m.A + a];
    return Q;
}

/// pi_new(a|s) proportional to pi_TC(a|s) exp(Q(s,a)/alpha), max-subtracted.
inline Table improve_policy(const TabularMdp& m, const Table& Q, double alpha) {
    require(alpha > 0.0, "alpha must be positive");
    require(Q.allFinite(), "Q must be finite");
    Table pi(m.S, m.A);
    for (int s = 0; s < m.S; ++s) {
        Eigen::ArrayXd logits = m.teacher.row(s).transpose().array().log() + Q.row(s).transpose().array() / alpha;
        logits -= logits.maxCoeff();
        Eigen::ArrayXd e = logits.exp();
        pi.row(s) = (e / e.sum()).matrix().transpose();
    }
    return pi;
}

struct PolicyIterationResult {
    Table pi, Q;
    int iterations = 0;
    bool converged = false;
    double worst_monotonicity = 0.0;  // min over iterations of min(Q_new - Q_old)
    std::vector<Table> q_history;
};

inline PolicyIterationResult policy_iteration(const TabularMdp& m, double alpha, const Table& pi0,
                                              double tol = 1e-10, int max_iter = 10000,
                                              bool keep_history = false) {
    check_policy(m, pi0);
    PolicyIterationResult res;
    res.pi = pi0;
    res.Q = evaluate_policy_exact(m, res.pi, alpha);
    res.worst_monotonicity = std::numeric_limits<double>::infinity();
    if (keep_history) res.q_history.push_back(res.Q);
    for (int k = 1; k <= max_iter; ++k) {
        Table next = improve_policy(m, res.Q, alpha);
        const double change = (next - res.pi).cwiseAbs().maxCoeff();
        Table Qn = evaluate_policy_exact(m, next, alpha);
        res.worst_monotonicity = std::min(res.worst_monotonicity, (Qn - res.Q).minCoeff());
        res.pi = std::move(next);
        res.Q = std::move(Qn);
        res.iterations = k;
        if (keep_history) res.q_history.push_back(res.Q);
        if (change < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

/// Independent soft (max-entropy) value iteration:
/// Q(s,a) = r + gamma E_{s'}[ alpha log sum_a' exp(Q(s',a')/alpha) ]; pi = softmax(Q/alpha).
struct SoftResult {
    Table pi, Q;
    bool converged = false;
};

inline SoftResult soft_value_iteration(const TabularMdp& m, double alpha, double tol = 1e-13,
                                       int max_sweeps = 1000000) {
    SoftResult res;
    res.Q = Table::Zero(m.S, m.A);
    for (int k = 0; k < max_sweeps; ++k) {
        Eigen::VectorXd v(m.S);
        for (int s = 0; s < m.S; ++s) {
            const double mx = res.Q.row(s).maxCoeff();
            v[s] = mx + alpha * std::log(((res.Q.row(s).array() - mx) / alpha).exp().sum());
        }
        Table next(m.S, m.A);
        for (int s = 0; s < m.S; ++s) next.row(s) = m.r.row(s) + m.gamma * (m.P[s] * v).transpose();
        const double change = (next - res.Q).cwiseAbs().maxCoeff();
        res.Q = std::move(next);
        if (change < tol) {
            res.converged = true;
            break;
        }
    }
    res.pi.resize(m.S, m.A);
    for (int s = 0; s < m.S; ++s) {
        Eigen::ArrayXd z = (res.Q.row(s).transpose().array() - res.Q.row(s).maxCoeff()) / alpha;
        Eigen::ArrayXd e = z.exp();
        res.pi.row(s) = (e / e.sum()).matrix().transpose();
    }
    return res;
}

/// Standard (unregularized) optimal Q by value iteration.
inline Table optimal_q(const TabularMdp& m, double tol = 1e-13, int max_sweeps = 1000000) {
    Table Q = Table::Zero(m.S, m.A);
    for (int k = 0; k < max_sweeps; ++k) {
        Eigen::VectorXd v = Q.rowwise().maxCoeff();
        Table next(m.S, m.A);
        for (int s = 0; s < m.S; ++s) next.row(s) = m.r.row(s) + m.gamma * (m.P[s] * v).transpose();
        const double change = (next - Q).cwiseAbs().maxCoeff();
        Q = std::move(next);
        if (change < tol) break;
    }
    return Q;
}

inline Table uniform_policy(int S, int A) { return Table::Constant(S, A, 1.0 / A); }

/// Dirichlet(1) rows, rewards U[-1, 1], Dirichlet(1) teacher floored at 1e-6.
inline TabularMdp random_mdp(int S, int A, double gamma, Rng& rng, bool uniform_teacher = false) {
    TabularMdp m;
    m.S = S;
    m.A = A;
    m.gamma = gamma;
    std::exponential_distribution<double> ex(1.0);
    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    auto dirichlet_row = [&](int n) {
        Eigen::RowVectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = ex(rng);
        return Eigen::RowVectorXd(v / v.sum());
    };
    m.P.resize(S);
    for (int s = 0; s < S; ++s) {
        m.P[s].resize(A, S);
        for (int a = 0; a < A; ++a) m.P[s].row(a) = dirichlet_row(S);
    }
    m.r.resize(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) m.r(s, a) = ur(rng);
    m.teacher.resize(S, A);
    for (int s = 0; s < S; ++s) {
        if (uniform_teacher) {
            m.teacher.row(s).setConstant(1.0 / A);
            continue;
        }
        Eigen::RowVectorXd t = dirichlet_row(A);
        t = t.cwiseMax(m.teacher_floor);
        m.teacher.row(s) = t / t.sum();
    }
    return m;
}

inline Table random_policy(int S, int A, Rng& rng) {
    std::exponential_distribution<double> ex(1.0);
    Table pi(S, A);
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) pi(s, a) = ex(rng) + 1e-3;
        pi.row(s) /= pi.row(s).sum();
    }
    return pi;
}

/// Monte-Carlo discounted return of the augmented reward from (s0, a0).
struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline McEstimate monte_carlo_q(const TabularMdp& m, const Table& pi, double alpha, int s0, int a0,
                                int episodes, int horizon, Rng& rng) {
    const Table ra = augmented_reward(m, pi, alpha);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&](const auto& row) {
        double x = u(rng), c = 0.0;
        for (Eigen::Index i = 0; i < row.size(); ++i) {
            c += row[i];
            if (x < c) return static_cast<int>(i);
        }
        return static_cast<int>(row.size() - 1);
    };
    double sum = 0.0, sum2 = 0.0;
    for (int e = 0; e < episodes; ++e) {
        int s = s0, a = a0;
        double g = 0.0, disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            g += disc * ra(s, a);
            disc *= m.gamma;
            s = draw(m.P[s].row(a));
            a = draw(pi.row(s));
        }
        sum += g;
        sum2 += g * g;
    }
    McEstimate est;
    est.mean = sum / episodes;
    const double var = std::max(0.0, (sum2 - episodes * est.mean * est.mean) / (episodes - 1));
    est.stderr_ = std::sqrt(var / episodes);
    return est;
}

}  // namespace transrl::tabular

#endif
