#include <gtest/gtest.h>

#include <cstdio>
#include <random>

#include "support.hpp"
#include "transrl/nn/adam.hpp"
#include "transrl/nn/checkpoint.hpp"
#include "transrl/nn/mlp.hpp"
#include "transrl/nn/simplex.hpp"

using namespace transrl;
using namespace transrl::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace

TEST(Mlp, ZeroWeightsOutputBiases) {
    Mlp net({3, 5, 2});
    net.params().setZero();
    net.bias(1) << 0.7, -1.3;
    const Matrix y = net.forward(Matrix::Random(3, 4));
    for (Eigen::Index c = 0; c < 4; ++c) {
        EXPECT_EQ(y(0, c), 0.7);
        EXPECT_EQ(y(1, c), -1.3);
    }
}

TEST(Mlp, LinearInputGradientIsWeightRow) {
    Mlp net({3, 3});
    Rng rng(1);
    net.init(rng);
    MlpCache cache;
    net.forward(Matrix::Random(3, 1), &cache);
    for (int row = 0; row < 3; ++row) {
        Matrix dy = Matrix::Zero(3, 1);
        dy(row, 0) = 1.0;
        Matrix dx;
        net.backward(cache, dy, nullptr, &dx);
        for (int j = 0; j < 3; ++j) EXPECT_EQ(dx(j, 0), net.weight(0)(row, j));
    }
}

TEST(Mlp, ParameterGradientsMatchFiniteDifferences) {
    Rng rng(2);
    int checked = 0;
    for (int trial = 0; trial < 5; ++trial) {
        Mlp net({4, 7, 6, 3}, trial % 2 ? Activation::Tanh : Activation::Relu);
        net.init(rng);
        const Matrix x = random_matrix(4, 5, rng), w = random_matrix(3, 5, rng);
        // scalar loss sum(w .* y)
        auto loss = [&] { return (net.forward(x).array() * w.array()).sum(); };
        MlpCache cache;
        net.forward(x, &cache);
        Vector g = Vector::Zero(net.size());
        Matrix dx;
        net.backward(cache, w, &g, &dx);
        for (Eigen::Index i = 0; i < net.size(); ++i, ++checked) {
            const double fd = support::central_diff(net.params().data(), i, 1e-6, loss);
            EXPECT_LE(support::rel_err(g[i], fd, 1e-6), 1e-4) << "param " << i;
        }
        Matrix xm = x;
        for (Eigen::Index i = 0; i < xm.size(); ++i) {
            const double fd = support::central_diff(xm.data(), i, 1e-6, [&] {
                return (net.forward(xm).array() * w.array()).sum();
            });
            EXPECT_LE(support::rel_err(dx.data()[i], fd, 1e-6), 1e-4) << "input " << i;
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(Mlp, ForwardIsDeterministicAndChecksShape) {
    Mlp net({2, 4, 1});
    Rng rng(3);
    net.init(rng);
    const Matrix x = Matrix::Random(2, 6);
    EXPECT_EQ(net.forward(x), net.forward(x));
    EXPECT_THROW(net.forward(Matrix::Random(3, 6)), Error);
    EXPECT_THROW(Mlp({3}), Error);
}

TEST(Mlp, PolyakAveraging) {
    Mlp a({2, 3, 1}), b({2, 3, 1});
    a.params().setConstant(1.0);
    b.params().setConstant(3.0);
    a.polyak_from(b, 0.25);
    EXPECT_NEAR(a.params().maxCoeff(), 1.5, 1e-15);
    EXPECT_NEAR(a.params().minCoeff(), 1.5, 1e-15);
}

TEST(PolicyHead, ZeroNoiseGivesModeDensity) {
    PolicyHead h;
    Matrix head(4, 1);
    head << 0.3, -0.2, std::log(0.5), 0.0;
    const auto s = h.sample(head, Matrix::Zero(2, 1));
    EXPECT_EQ(s.u(0, 0), 0.3);
    EXPECT_EQ(s.u(1, 0), -0.2);
    // two independent normal modes with std 0.5 and 1
    const double mode = -std::log(0.5) - 2.0 * 0.9189385332046727;
    EXPECT_NEAR(s.log_prob[0], mode, 1e-12);
}

TEST(PolicyHead, LogStdIsClamped) {
    PolicyHead h;
    Matrix head(2, 2);
    head << 0.0, 0.0, -50.0, 9.0;
    const auto s = h.sample(head, Matrix::Ones(1, 2));
    EXPECT_EQ(s.log_std(0, 0), -20.0);
    EXPECT_EQ(s.log_std(0, 1), 2.0);
    EXPECT_EQ(s.clamp_mask(0, 0), 0.0);
    EXPECT_EQ(s.clamp_mask(0, 1), 0.0);
}

TEST(PolicyHead, SameNoiseSameSample) {
    PolicyHead h;
    Rng rng(4);
    const Matrix head = random_matrix(6, 3, rng), eps = random_matrix(3, 3, rng);
    const auto a = h.sample(head, eps), b = h.sample(head, eps);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.log_prob, b.log_prob);
}

TEST(PolicyHead, BackwardMatchesFiniteDifferences) {
    // L = sum_b c_b log_prob_b + sum g .* u with eps held fixed
    PolicyHead h;
    Rng rng(5);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Matrix head = random_matrix(6, 4, rng);
        const Matrix eps = random_matrix(3, 4, rng), gu = random_matrix(3, 4, rng);
        const Eigen::RowVectorXd c = random_matrix(1, 4, rng);
        auto loss = [&] {
            const auto s = h.sample(head, eps);
            return (s.log_prob.array() * c.array()).sum() + (s.u.array() * gu.array()).sum();
        };
        const Matrix g = h.backward(h.sample(head, eps), gu, c);
        for (Eigen::Index i = 0; i < head.size(); ++i, ++checked) {
            const double fd = support::central_diff(head.data(), i, 1e-6, loss);
            EXPECT_LE(support::rel_err(g.data()[i], fd, 1e-6), 1e-4);
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(GaussianLogProb, GradientInMeanAndLogStd) {
    // d/dmean = (u - m) / s^2 and d/dlog_std = z^2 - 1 at fixed u
    Rng rng(6);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix u = random_matrix(2, 1, rng);
        Matrix m = random_matrix(2, 1, rng), ls = random_matrix(2, 1, rng, 0.5);
        for (int d = 0; d < 2; ++d, checked += 2) {
            const double s2 = std::exp(2 * ls(d, 0));
            const double z2 = (u(d, 0) - m(d, 0)) * (u(d, 0) - m(d, 0)) / s2;
            auto lp = [&] { return gaussian_log_prob(u, m, ls)[0]; };
            EXPECT_LE(support::rel_err((u(d, 0) - m(d, 0)) / s2, support::central_diff(m.data(), d, 1e-6, lp), 1e-6), 1e-4);
            EXPECT_LE(support::rel_err(z2 - 1.0, support::central_diff(ls.data(), d, 1e-6, lp), 1e-6), 1e-4);
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(Simplex, ClosedForms) {
    EXPECT_EQ(to_simplex(std::vector<double>{0.0}, {2}), (std::vector<double>{0.5, 0.5}));
    const auto a = to_simplex(std::vector<double>{std::log(3.0)}, {2});
    EXPECT_NEAR(a[0], 0.75, 1e-15);
    EXPECT_NEAR(a[1], 0.25, 1e-15);
    const auto b = to_simplex(std::vector<double>{0.0, 0.0}, {3});
    for (double x : b) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(layout_logit_dim({2, 3}), 3);
    EXPECT_EQ(layout_simplex_dim({2, 3}), 5);
}

TEST(Simplex, RoundTripAndValidity) {
    Rng rng(7);
    const SimplexLayout layout{2, 3, 4};
    const Matrix u = random_matrix(6, 500, rng, 3.0);
    const Matrix a = to_simplex(u, layout);
    EXPECT_LE((logit(a, layout) - u).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        int ia = 0;
        for (int k : layout) {
            EXPECT_NEAR(a.col(c).segment(ia, k).sum(), 1.0, 1e-12);
            EXPECT_GT(a.col(c).segment(ia, k).minCoeff(), 0.0);
            ia += k;
        }
    }
}

TEST(Simplex, ExtremeLogitsStayFinite) {
    const auto a = to_simplex(std::vector<double>{800.0, -800.0}, {3});
    EXPECT_NEAR(a[0], 1.0, 1e-15);
    for (double x : a) EXPECT_TRUE(std::isfinite(x));
}

TEST(Simplex, VjpMatchesFiniteDifferences) {
    Rng rng(8);
    const SimplexLayout layout{3, 2};
    Matrix u = random_matrix(3, 1, rng);
    const Matrix ga = random_matrix(5, 1, rng);
    const Matrix g = simplex_vjp(to_simplex(u, layout), ga, layout);
    for (Eigen::Index i = 0; i < 3; ++i) {
        const double fd = support::central_diff(u.data(), i, 1e-6, [&] {
            return (to_simplex(u, layout).array() * ga.array()).sum();
        });
        EXPECT_LE(support::rel_err(g(i, 0), fd, 1e-6), 1e-6);
    }
}

TEST(Simplex, LogDetJacobianOfTwoPathOd) {
    // k = 2: da1/du = a1 a2
    const double u = 0.4;
    const auto a = to_simplex(std::vector<double>{u}, {2});
    EXPECT_NEAR(log_det_jacobian(Vector::Constant(1, u), {2}), std::log(a[0] * a[1]), 1e-12);
}

TEST(Adam, ZeroGradientLeavesParams) {
    Vector p = Vector::LinSpaced(4, -1.0, 1.0);
    const Vector p0 = p;
    Adam opt(4);
    for (int i = 0; i < 10; ++i) opt.step(p, Vector::Zero(4));
    EXPECT_EQ(p, p0);
}

TEST(Adam, ConstantGradientStepTendsToLr) {
    Vector p = Vector::Zero(2);
    Adam opt(2, {0.01});
    Vector g(2);
    g << 3.0, -0.002;
    Vector prev = p;
    for (int i = 0; i < 1000; ++i) {
        prev = p;
        opt.step(p, g);
    }
    EXPECT_NEAR(p[0] - prev[0], -0.01, 1e-9);
    EXPECT_NEAR(p[1] - prev[1], 0.01, 1e-6);
}

TEST(Adam, QuadraticBowl) {
    Vector x(3);
    x << 1.0, -2.0, 0.5;
    Adam opt(3, {0.01});
    for (int i = 0; i < 2000; ++i) {
        Vector g = 2.0 * x;
        opt.step(x, g);
    }
    EXPECT_LT(x.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Adam, NonFiniteGradientIsSkipped) {
    Vector p = Vector::Ones(2);
    Adam opt(2);
    Vector g(2);
    g << 1.0, std::nan("");
    EXPECT_FALSE(opt.step(p, g));
    EXPECT_EQ(p, Vector::Ones(2));
    EXPECT_EQ(opt.skipped(), 1);
    EXPECT_EQ(opt.steps(), 0);
    EXPECT_THROW(opt.step(p, Vector::Zero(3)), Error);
}

TEST(Checkpoint, RoundTripAndErrors) {
    Checkpoint c;
    c.scalars["sigma"] = 0.05;
    c.ints["widths"] = {3, 64, -2};
    c.tensors["w"] = Vector::LinSpaced(7, -1.0, 1.0);
    const std::string path = testing::TempDir() + "nn.trlw";
    c.save(path);
    const auto l = Checkpoint::load(path);
    EXPECT_EQ(l.scalar("sigma"), 0.05);
    EXPECT_EQ(l.int_list("widths"), c.ints["widths"]);
    EXPECT_EQ(l.tensor("w"), c.tensors["w"]);
    EXPECT_THROW(l.scalar("nope"), Error);

    // truncated and foreign files
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("TRLW", f);
        std::fclose(f);
    }
    EXPECT_THROW(Checkpoint::load(path), Error);
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOPE0000", f);
        std::fclose(f);
    }
    EXPECT_THROW(Checkpoint::load(path), Error);
    std::remove(path.c_str());
}
