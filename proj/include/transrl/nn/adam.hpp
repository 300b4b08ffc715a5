#ifndef TRANSRL_NN_ADAM_HPP
#define TRANSRL_NN_ADAM_HPP

#include <cmath>

#include <Eigen/Dense>

#include "transrl/common.hpp"

namespace transrl::nn {

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
public:
    Adam() = default;
    Adam(Eigen::Index n, AdamOptions opt = {}) : opt_(opt), m_(Eigen::VectorXd::Zero(n)), v_(m_) {}

    /// Returns false (and leaves everything untouched) when the gradient is not finite.
    bool step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        require(params.size() == m_.size() && grad.size() == m_.size(), "optimizer shape mismatch");
        if (!grad.allFinite()) {
            ++skipped_;
            return false;
        }
        ++t_;
        m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
        v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        params.array() -= opt_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
        return true;
    }

    long steps() const { return t_; }
    long skipped() const { return skipped_; }
    const AdamOptions& options() const { return opt_; }
    AdamOptions& options() { return opt_; }

private:
    AdamOptions opt_;
    Eigen::VectorXd m_, v_;
    long t_ = 0;
    long skipped_ = 0;
};

}  // namespace transrl::nn

#endif
