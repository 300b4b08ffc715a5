#ifndef TRANSRL_NN_SIMPLEX_HPP
#define TRANSRL_NN_SIMPLEX_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"

namespace transrl::nn {

/// Paths per OD pair. An OD with k paths has k-1 logit coordinates.
using SimplexLayout = std::vector<int>;

inline int layout_logit_dim(const SimplexLayout& layout) {
    int d = 0;
    for (int k : layout) d += k - 1;
    return d;
}

inline int layout_simplex_dim(const SimplexLayout& layout) {
    int d = 0;
    for (int k : layout) d += k;
    return d;
}

/// Additive-logistic map: (e^{u_1}, ..., e^{u_{k-1}}, 1) / (1 + sum e^{u_j}) per OD.
/// Works column-wise on a (logit_dim x B) matrix.
inline Eigen::MatrixXd to_simplex(const Eigen::MatrixXd& u, const SimplexLayout& layout) {
    require(u.rows() == layout_logit_dim(layout), "logit dimension mismatch");
    Eigen::MatrixXd a(layout_simplex_dim(layout), u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        int iu = 0, ia = 0;
        for (int k : layout) {
            double m = 0.0;
            for (int i = 0; i < k - 1; ++i) m = std::max(m, u(iu + i, c));
            double z = std::exp(-m);
            for (int i = 0; i < k - 1; ++i) z += std::exp(u(iu + i, c) - m);
            for (int i = 0; i < k - 1; ++i) a(ia + i, c) = std::exp(u(iu + i, c) - m) / z;
            a(ia + k - 1, c) = std::exp(-m) / z;
            iu += k - 1;
            ia += k;
        }
    }
    return a;
}

inline std::vector<double> to_simplex(const std::vector<double>& u, const SimplexLayout& layout) {
    Eigen::Map<const Eigen::VectorXd> m(u.data(), static_cast<Eigen::Index>(u.size()));
    Eigen::MatrixXd a = to_simplex(Eigen::MatrixXd(m), layout);
    return {a.data(), a.data() + a.size()};
}

/// Inverse map u_i = log(a_i / a_k). Components are clipped to [clip, 1 - clip]
/// and renormalized first.
inline Eigen::MatrixXd logit(const Eigen::MatrixXd& a, const SimplexLayout& layout,
                             double clip = 0.0) {
    require(a.rows() == layout_simplex_dim(layout), "simplex dimension mismatch");
    Eigen::MatrixXd u(layout_logit_dim(layout), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        int iu = 0, ia = 0;
        for (int k : layout) {
            std::vector<double> v(k);
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += (v[i] = std::clamp(a(ia + i, c), clip, 1.0 - clip));
            for (double& x : v) x /= s;
            for (int i = 0; i < k - 1; ++i) u(iu + i, c) = std::log(v[i]) - std::log(v[k - 1]);
            iu += k - 1;
            ia += k;
        }
    }
    return u;
}

/// log |det J| of the additive-logistic map: sum of log a_i over all k components, per OD.
inline double log_det_jacobian(const Eigen::VectorXd& u, const SimplexLayout& layout) {
    Eigen::MatrixXd a = to_simplex(Eigen::MatrixXd(u), layout);
    return a.array().log().sum();
}

/// Pulls a gradient w.r.t. simplex points back to logit coordinates:
/// g_u[j] = a_j (g_a[j] - sum_i a_i g_a[i]) per OD.
inline Eigen::MatrixXd simplex_vjp(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ga,
                                   const SimplexLayout& layout) {
    Eigen::MatrixXd gu(layout_logit_dim(layout), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        int iu = 0, ia = 0;
        for (int k : layout) {
            double dot = 0.0;
            for (int i = 0; i < k; ++i) dot += a(ia + i, c) * ga(ia + i, c);
            for (int j = 0; j < k - 1; ++j) gu(iu + j, c) = a(ia + j, c) * (ga(ia + j, c) - dot);
            iu += k - 1;
            ia += k;
        }
    }
    return gu;
}

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

/// Column-wise diagonal Gaussian log-density.
inline Eigen::RowVectorXd gaussian_log_prob(const Eigen::MatrixXd& u, const Eigen::MatrixXd& mean,
                                            const Eigen::MatrixXd& log_std) {
    Eigen::ArrayXXd z = (u - mean).array() / log_std.array().exp();
    Eigen::RowVectorXd out =
        (-0.5 * z.square() - log_std.array() - kHalfLog2Pi).matrix().colwise().sum();
    return out;
}

/// Outputs of the policy head: rows [0, D) are the mean, rows [D, 2D) the
/// raw log-std, clamped to [log_std_min, log_std_max].
struct PolicyHead {
    double log_std_min = -20.0;
    double log_std_max = 2.0;

    struct Sample {
        Eigen::MatrixXd mean, log_std, std, eps, u;
        Eigen::RowVectorXd log_prob;
        Eigen::ArrayXXd clamp_mask;  // 1 where the clamp is inactive
    };

    /// u = mean + std * eps and its log-density; eps is supplied by the caller.
    Sample sample(const Eigen::MatrixXd& head, const Eigen::MatrixXd& eps) const {
        const Eigen::Index D = head.rows() / 2;
        require(head.rows() == 2 * D && eps.rows() == D && eps.cols() == head.cols(),
                "policy head shape mismatch");
        Sample s;
        s.mean = head.topRows(D);
        const Eigen::MatrixXd raw = head.bottomRows(D);
        s.log_std = raw.cwiseMax(log_std_min).cwiseMin(log_std_max);
        s.clamp_mask = ((raw.array() > log_std_min) && (raw.array() < log_std_max)).cast<double>();
        s.std = s.log_std.array().exp();
        s.eps = eps;
        s.u = s.mean + (s.std.array() * eps.array()).matrix();
        s.log_prob = (-0.5 * eps.array().square() - s.log_std.array() - kHalfLog2Pi)
                         .matrix()
                         .colwise()
                         .sum();
        return s;
    }

    /// Gradient w.r.t. the head output of  sum_b [ c_lp * log_prob_b + g_u_b . u_b ],
    /// where g_u is the partial of the downstream loss w.r.t. u (log_prob excluded).
    Eigen::MatrixXd backward(const Sample& s, const Eigen::MatrixXd& g_u,
                             const Eigen::RowVectorXd& c_lp) const {
        const Eigen::Index D = s.mean.rows();
        Eigen::MatrixXd g(2 * D, s.mean.cols());
        // With u = mean + std*eps, log_prob depends on log_std only (d/dlog_std = -1).
        g.topRows(D) = g_u;
        Eigen::ArrayXXd gls = g_u.array() * s.std.array() * s.eps.array();
        gls.rowwise() -= c_lp.array();
        g.bottomRows(D) = (gls * s.clamp_mask).matrix();
        return g;
    }
};

}  // namespace transrl::nn

#endif
