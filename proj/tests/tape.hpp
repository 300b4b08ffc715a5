#ifndef TRANSRL_TESTS_TAPE_HPP
#define TRANSRL_TESTS_TAPE_HPP

// Scalar reverse-mode differentiation used as an independent gradient oracle.

#include <cmath>
#include <vector>

namespace tape {

struct Node {
    double val;
    int a, b;        // parents, -1 if none
    double da, db;   // local partials
};

class Tape {
public:
    int push(double v, int a = -1, double da = 0.0, int b = -1, double db = 0.0) {
        nodes_.push_back({v, a, b, da, db});
        return static_cast<int>(nodes_.size()) - 1;
    }
    double val(int i) const { return nodes_[i].val; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    std::vector<double> grad(int out) const {
        std::vector<double> g(nodes_.size(), 0.0);
        g[out] = 1.0;
        for (int i = out; i >= 0; --i) {
            if (g[i] == 0.0) continue;
            const auto& n = nodes_[i];
            if (n.a >= 0) g[n.a] += g[i] * n.da;
            if (n.b >= 0) g[n.b] += g[i] * n.db;
        }
        return g;
    }

private:
    std::vector<Node> nodes_;
};

struct Var {
    Tape* t = nullptr;
    int id = -1;
    double v() const { return t->val(id); }
};

inline Var leaf(Tape& t, double v) { return {&t, t.push(v)}; }

inline Var operator+(Var x, Var y) { return {x.t, x.t->push(x.v() + y.v(), x.id, 1.0, y.id, 1.0)}; }
inline Var operator-(Var x, Var y) { return {x.t, x.t->push(x.v() - y.v(), x.id, 1.0, y.id, -1.0)}; }
inline Var operator*(Var x, Var y) { return {x.t, x.t->push(x.v() * y.v(), x.id, y.v(), y.id, x.v())}; }
inline Var operator/(Var x, Var y) {
    const double q = x.v() / y.v();
    return {x.t, x.t->push(q, x.id, 1.0 / y.v(), y.id, -q / y.v())};
}
inline Var operator+(Var x, double c) { return {x.t, x.t->push(x.v() + c, x.id, 1.0)}; }
inline Var operator-(Var x, double c) { return {x.t, x.t->push(x.v() - c, x.id, 1.0)}; }
inline Var operator*(Var x, double c) { return {x.t, x.t->push(x.v() * c, x.id, c)}; }
inline Var operator*(double c, Var x) { return x * c; }
inline Var operator-(double c, Var x) { return {x.t, x.t->push(c - x.v(), x.id, -1.0)}; }
inline Var exp(Var x) {
    const double e = std::exp(x.v());
    return {x.t, x.t->push(e, x.id, e)};
}
inline Var log(Var x) { return {x.t, x.t->push(std::log(x.v()), x.id, 1.0 / x.v())}; }
inline Var relu(Var x) { return {x.t, x.t->push(x.v() > 0.0 ? x.v() : 0.0, x.id, x.v() > 0.0 ? 1.0 : 0.0)}; }
inline Var min(Var x, Var y) { return x.v() <= y.v() ? x : y; }
inline Var clamp(Var x, double lo, double hi) {
    if (x.v() <= lo) return {x.t, x.t->push(lo)};
    if (x.v() >= hi) return {x.t, x.t->push(hi)};
    return x;
}

}  // namespace tape

#endif
