#ifndef TRANSRL_NN_MLP_HPP
#define TRANSRL_NN_MLP_HPP

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "transrl/common.hpp"

namespace transrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Identity, Relu, Tanh };

/// Activations of one forward pass, kept for the backward pass.
struct MlpCache {
    std::vector<Matrix> inputs;  // input to each layer (columns are samples)
    std::vector<Matrix> pre;     // pre-activation of each layer
};

/// Fully connected network. All weights and biases live in one flat vector so
/// optimizers, target averaging and checkpoints work on a single buffer.
/// Samples are columns.
class Mlp {
public:
    Mlp() = default;

    /// widths = {in, hidden..., out}; hidden layers use `hidden`, the output layer is linear.
    explicit Mlp(std::vector<int> widths, Activation hidden = Activation::Relu)
        : widths_(std::move(widths)) {
        require(widths_.size() >= 2, "an MLP needs input and output widths");
        for (int w : widths_) require(w >= 1, "layer widths must be positive");
        for (size_t l = 0; l + 1 < widths_.size(); ++l) {
            offsets_.push_back(size_);
            size_ += widths_[l + 1] * widths_[l] + widths_[l + 1];
            acts_.push_back(l + 2 < widths_.size() ? hidden : Activation::Identity);
        }
        params_ = Vector::Zero(size_);
    }

    int layers() const { return static_cast<int>(offsets_.size()); }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    Eigen::Index size() const { return size_; }
    const std::vector<int>& widths() const { return widths_; }
    const std::vector<Activation>& activations() const { return acts_; }

    Vector& params() { return params_; }
    const Vector& params() const { return params_; }

    Eigen::Map<Matrix> weight(int l) {
        return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
    }
    Eigen::Map<const Matrix> weight(int l) const {
        return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
    }
    Eigen::Map<Vector> bias(int l) {
        return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
    }
    Eigen::Map<const Vector> bias(int l) const {
        return {params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], widths_[l + 1]};
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init(Rng& rng) {
        for (int l = 0; l < layers(); ++l) {
            const double b = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
            std::uniform_real_distribution<double> u(-b, b);
            auto W = weight(l);
            for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = u(rng);
            auto bb = bias(l);
            for (Eigen::Index i = 0; i < bb.size(); ++i) bb[i] = u(rng);
        }
    }

    Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const {
        require(x.rows() == input_dim(), "MLP input dimension mismatch");
        if (cache) {
            cache->inputs.resize(layers());
            cache->pre.resize(layers());
        }
        Matrix h = x;
        for (int l = 0; l < layers(); ++l) {
            Matrix z = weight(l) * h;
            z.colwise() += bias(l);
            if (cache) {
                cache->inputs[l] = std::move(h);
                cache->pre[l] = z;
            }
            h = activate(acts_[l], z);
        }
        return h;
    }

    /// Accumulates parameter gradients of sum(dy .* output) into `grad` (when
    /// given) and writes the input gradient into `dx` (when given).
    void backward(const MlpCache& cache, const Matrix& dy, Vector* grad, Matrix* dx = nullptr) const {
        require(dy.rows() == output_dim(), "MLP output-gradient dimension mismatch");
        require(!grad || grad->size() == size_, "gradient buffer size mismatch");
        Matrix g = dy;
        for (int l = layers() - 1; l >= 0; --l) {
            apply_derivative(acts_[l], cache.pre[l], g);
            if (grad) {
                Eigen::Map<Matrix> gW(grad->data() + offsets_[l], widths_[l + 1], widths_[l]);
                Eigen::Map<Vector> gb(grad->data() + offsets_[l] + widths_[l + 1] * widths_[l],
                                      widths_[l + 1]);
                gW.noalias() += g * cache.inputs[l].transpose();
                gb += g.rowwise().sum();
            }
            if (l > 0 || dx) {
                Matrix prev = weight(l).transpose() * g;
                g = std::move(prev);
            }
        }
        if (dx) *dx = std::move(g);
    }

    void backward(const MlpCache& cache, const Matrix& dy, Vector& grad, Matrix* dx = nullptr) const {
        backward(cache, dy, &grad, dx);
    }

    /// p <- (1 - tau) p + tau * other.p
    void polyak_from(const Mlp& other, double tau) {
        require(other.size_ == size_, "polyak update between different shapes");
        params_ = (1.0 - tau) * params_ + tau * other.params_;
    }

private:
    static Matrix activate(Activation a, const Matrix& z) {
        switch (a) {
            case Activation::Relu: return z.cwiseMax(0.0);
            case Activation::Tanh: return z.array().tanh().matrix();
            default: return z;
        }
    }

    static void apply_derivative(Activation a, const Matrix& z, Matrix& g) {
        switch (a) {
            case Activation::Relu: g = (z.array() > 0.0).select(g, 0.0); break;
            case Activation::Tanh: g.array() *= 1.0 - z.array().tanh().square(); break;
            default: break;
        }
    }

    std::vector<int> widths_;
    std::vector<Activation> acts_;
    std::vector<Eigen::Index> offsets_;
    Eigen::Index size_ = 0;
    Vector params_;
};

}  // namespace transrl::nn

#endif
