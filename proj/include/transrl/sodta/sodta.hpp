#ifndef TRANSRL_SODTA_SODTA_HPP
#define TRANSRL_SODTA_SODTA_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "transrl/common.hpp"
#include "transrl/ctm/demand.hpp"
#include "transrl/ctm/network.hpp"
#include "transrl/ctm/simulator.hpp"
#include "transrl/scenario.hpp"

namespace transrl::sodta {

/// Internal traffic model plus the estimated (mean) demand it is solved for.
struct ModelSpec {
    ctm::Network net;
    ctm::DemandProfile demand;           // only the means are used
    std::vector<InitialVehicles> initial;
    int max_drain_intervals = 200;       // loading stops here even if not drained
    double drain_tolerance = 1e-6;       // veh
};

inline ModelSpec model_from_scenario(const Scenario& sc) {
    ModelSpec m;
    m.net = ctm::build_network(sc.model);
    m.demand = sc.demand;
    m.demand.beta = 0.0;
    m.initial = sc.initial;
    return m;
}

/// Ratios [interval][global path]; each OD's entries form a simplex.
struct AssignmentPlan {
    std::vector<std::vector<double>> ratios;

    int horizon() const { return static_cast<int>(ratios.size()); }

    /// Ratios of one OD at t; t past the horizon holds the last row.
    std::vector<double> od_ratios(const ctm::Network& net, int od, int t) const {
        require(!ratios.empty(), "empty assignment plan");
        const auto& row = ratios[std::clamp(t, 0, horizon() - 1)];
        std::vector<double> out;
        for (int p : net.ods[od].paths) out.push_back(row[p]);
        return out;
    }
};

inline AssignmentPlan uniform_plan(const ctm::Network& net, int horizon) {
    AssignmentPlan plan;
    plan.ratios.assign(horizon, std::vector<double>(net.path_count(), 0.0));
    for (auto& row : plan.ratios)
        for (const auto& od : net.ods)
            for (int p : od.paths) row[p] = 1.0 / od.paths.size();
    return plan;
}

inline void validate_plan(const ctm::Network& net, const AssignmentPlan& plan, int horizon) {
    require(plan.horizon() >= horizon, "plan does not cover the horizon");
    for (const auto& row : plan.ratios) {
        require(static_cast<int>(row.size()) == net.path_count(), "plan row size mismatch");
        for (const auto& od : net.ods) {
            double s = 0.0;
            for (int p : od.paths) {
                require(row[p] >= -1e-12, "negative plan ratio");
                s += row[p];
            }
            require(std::abs(s - 1.0) <= 1e-9, "plan ratios do not sum to one");
        }
    }
}

struct PlanResult {
    double ttt = 0.0;                              // veh-h
    std::vector<std::vector<double>> path_times;   // [t][path], h (filled on request)
    bool drained = false;
    int intervals = 0;
};

namespace detail {

inline std::vector<double> interval_path_veh(const ModelSpec& m, const AssignmentPlan& plan, int t) {
    std::vector<double> v(m.net.path_count(), 0.0);
    if (t >= m.demand.horizon()) return v;
    for (int o = 0; o < static_cast<int>(m.net.ods.size()); ++o)
        for (int p : m.net.ods[o].paths) v[p] = m.demand.mean_at(o, t) * plan.ratios[t][p];
    return v;
}

inline ctm::SimState initial_state(const ModelSpec& m) {
    auto s = ctm::make_state(m.net);
    for (const auto& iv : m.initial) {
        const int o = m.net.od_index(iv.od);
        ctm::place_initial(m.net, s, m.net.ods[o].paths.at(iv.path), iv.veh);
    }
    return s;
}

inline double state_ttt(const ctm::Network& net, const ctm::SimState& s) {
    KahanSum k;
    for (const auto& r : s.intervals) k.add(r.avg_total_vehicles * net.interval_hours());
    return k.value();
}

/// Runs from `s` (at an interval boundary) to drain, optionally with an extra
/// per-path load in interval `extra_t`.
inline void run_to_drain(const ModelSpec& m, const AssignmentPlan& plan, ctm::SimState& s,
                         int extra_t = -1, int extra_path = -1, double extra_veh = 0.0,
                         std::vector<ctm::StepFlows>* record = nullptr) {
    const int H = m.demand.horizon();
    const int cap = std::max(H, extra_t + 1) + m.max_drain_intervals;
    int t = static_cast<int>(s.intervals.size());
    while (t < cap) {
        if (t >= H && t > extra_t && ctm::total_vehicles(m.net, s) <= m.drain_tolerance) break;
        auto v = interval_path_veh(m, plan, t);
        if (t == extra_t) v[extra_path] += extra_veh;
        ctm::run_interval(m.net, s, v, record);
        ++t;
    }
}

/// Cumulative curve sampled at step boundaries: c[k] = total after k steps.
inline double curve_at(const std::vector<double>& c, double x) {
    if (x <= 0.0) return c.front();
    const double last = static_cast<double>(c.size() - 1);
    if (x >= last) return c.back();
    const size_t k = static_cast<size_t>(x);
    const double f = x - k;
    return c[k] + f * (c[k + 1] - c[k]);
}

/// Earliest time at which the curve reaches `count`.
inline double curve_inverse(const std::vector<double>& c, double count) {
    const double target = count - 1e-9;
    if (c.front() >= target) return 0.0;
    auto it = std::lower_bound(c.begin(), c.end(), target);
    if (it == c.end()) return static_cast<double>(c.size() - 1);
    const size_t k = static_cast<size_t>(it - c.begin());
    const double lo = c[k - 1], hi = c[k];
    const double f = hi > lo ? (target - lo) / (hi - lo) : 1.0;
    return (k - 1) + std::clamp(f, 0.0, 1.0);
}

}  // namespace detail

/// Experienced path travel times from cumulative link and origin-queue curves.
/// Each link contributes at least its free-flow time, which also covers paths
/// carrying no flow.
inline std::vector<std::vector<double>> path_travel_times(const ModelSpec& m,
                                                          const std::vector<ctm::StepFlows>& rec,
                                                          const std::vector<std::vector<double>>& arrivals,
                                                          int horizon) {
    const auto& net = m.net;
    const int P = net.path_count();
    const int L = net.link_count();
    const size_t S = rec.size();
    std::vector<std::vector<double>> entry(L, std::vector<double>(S + 1, 0.0)),
        exit(L, std::vector<double>(S + 1, 0.0)), qa(P, std::vector<double>(S + 1, 0.0)),
        qd(P, std::vector<double>(S + 1, 0.0));
    for (size_t k = 0; k < S; ++k) {
        for (int l = 0; l < L; ++l) {
            entry[l][k + 1] = entry[l][k] + rec[k].link_entries[l];
            exit[l][k + 1] = exit[l][k] + rec[k].link_exits[l];
        }
        for (int p = 0; p < P; ++p) {
            qa[p][k + 1] = qa[p][k] + arrivals[k][p];
            qd[p][k + 1] = qd[p][k] + rec[k].queue_departures[p];
        }
    }
    // Initial vehicles sit in the first cell of their path: count them as entries at time 0.
    for (const auto& iv : m.initial) {
        const int o = net.od_index(iv.od);
        const int l = net.paths[net.ods[o].paths.at(iv.path)].links.front();
        for (double& v : entry[l]) v += iv.veh;
    }
    const int m_steps = net.steps_per_interval;
    const int sub = 4;
    std::vector<std::vector<double>> out(horizon, std::vector<double>(P, 0.0));
    for (int t = 0; t < horizon; ++t) {
        for (int p = 0; p < P; ++p) {
            double total = 0.0;
            for (int j = 0; j < sub; ++j) {
                const double tau = t * m_steps + (j + 0.5) * m_steps / sub;
                double x = detail::curve_inverse(qd[p], detail::curve_at(qa[p], tau));
                x = std::max(x, tau);
                for (int l : net.paths[p].links) {
                    const double c = detail::curve_at(entry[l], x);
                    double y = detail::curve_inverse(exit[l], c);
                    y = std::max(y, x + net.links[l].cell_count);
                    x = y;
                }
                total += (x - tau);
            }
            out[t][p] = total / sub * net.dt_hours;
        }
    }
    return out;
}

/// Deterministic loading of the mean demand under `plan`.
inline PlanResult simulate_plan(const ModelSpec& m, const AssignmentPlan& plan,
                                bool with_path_times = false) {
    const int H = m.demand.horizon();
    validate_plan(m.net, plan, H);
    auto s = detail::initial_state(m);
    PlanResult res;
    if (!with_path_times) {
        detail::run_to_drain(m, plan, s);
    } else {
        std::vector<ctm::StepFlows> rec;
        detail::run_to_drain(m, plan, s, -1, -1, 0.0, &rec);
        std::vector<std::vector<double>> arr;
        for (size_t k = 0; k < rec.size(); ++k) {
            const int t = static_cast<int>(k) / m.net.steps_per_interval;
            auto v = detail::interval_path_veh(m, plan, t);
            for (double& x : v) x /= m.net.steps_per_interval;
            arr.push_back(std::move(v));
        }
        res.path_times = path_travel_times(m, rec, arr, H);
    }
    res.ttt = detail::state_ttt(m.net, s);
    res.drained = ctm::total_vehicles(m.net, s) <= m.drain_tolerance;
    res.intervals = static_cast<int>(s.intervals.size());
    return res;
}

/// Boundary states of a base loading, reused to evaluate perturbations.
struct LoadingSnapshots {
    std::vector<ctm::SimState> at_interval;  // state before interval t
    double ttt = 0.0;
};

inline LoadingSnapshots snapshot_loading(const ModelSpec& m, const AssignmentPlan& plan,
                                         int upto) {
    LoadingSnapshots snap;
    auto s = detail::initial_state(m);
    for (int t = 0; t < upto; ++t) {
        snap.at_interval.push_back(s);
        ctm::run_interval(m.net, s, detail::interval_path_veh(m, plan, t));
    }
    detail::run_to_drain(m, plan, s);
    snap.ttt = detail::state_ttt(m.net, s);
    return snap;
}

inline double marginal_cost_from(const ModelSpec& m, const AssignmentPlan& plan,
                                 const LoadingSnapshots& snap, int path, int t, double eps) {
    ctm::SimState s = snap.at_interval.at(t);
    detail::run_to_drain(m, plan, s, t, path, eps);
    return (detail::state_ttt(m.net, s) - snap.ttt) / eps;
}

/// (TTT with eps extra vehicles on `path` during interval t - TTT) / eps, h/veh.
inline double path_marginal_cost(const ModelSpec& m, const AssignmentPlan& plan, int path, int t,
                                 double eps = 1.0) {
    require(eps > 0.0, "perturbation must be positive");
    require(path >= 0 && path < m.net.path_count(), "unknown path");
    require(t >= 0, "interval must be non-negative");
    validate_plan(m.net, plan, m.demand.horizon());
    const auto snap = snapshot_loading(m, plan, t + 1);
    return marginal_cost_from(m, plan, snap, path, t, eps);
}

struct MsaOptions {
    int max_iterations = 200;
    double tolerance = 1e-3;  // on the max ratio change
    double eps = 1.0;         // marginal-cost perturbation, veh
};

struct SolveResult {
    AssignmentPlan plan;       // best iterate
    double ttt = 0.0;          // model TTT of the best iterate
    double gap = 0.0;          // relative gap of the best iterate (UE only)
    bool converged = false;
    int iterations = 0;
    std::vector<double> history;  // per-iteration objective (TTT or gap)
};

namespace detail {

inline int argmin_path(const std::vector<double>& cost, const std::vector<int>& paths) {
    int best = paths.front();
    for (int p : paths)
        if (cost[p] < cost[best] - 1e-12) best = p;
    return best;
}

template <class CostFn, class ScoreFn>
SolveResult run_msa(const ModelSpec& m, const MsaOptions& opt, CostFn&& costs, ScoreFn&& score) {
    const int H = m.demand.horizon();
    SolveResult res;
    AssignmentPlan plan = uniform_plan(m.net, H);
    bool all_single = true;
    for (const auto& od : m.net.ods) all_single = all_single && od.paths.size() == 1;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= opt.max_iterations; ++k) {
        auto c = costs(plan);  // [t][path]
        const double sc = score(plan, c);
        res.history.push_back(sc);
        if (sc < best) {
            best = sc;
            res.plan = plan;
        }
        res.iterations = k;
        if (all_single) {
            res.converged = true;
            break;
        }
        double max_change = 0.0;
        for (int t = 0; t < H; ++t) {
            for (const auto& od : m.net.ods) {
                const int target = argmin_path(c[t], od.paths);
                for (int p : od.paths) {
                    const double y = p == target ? 1.0 : 0.0;
                    const double delta = (y - plan.ratios[t][p]) / k;
                    plan.ratios[t][p] += delta;
                    max_change = std::max(max_change, std::abs(delta));
                }
            }
        }
        if (max_change < opt.tolerance) {
            auto c2 = costs(plan);
            const double sc2 = score(plan, c2);
            res.history.push_back(sc2);
            if (sc2 < best) {
                best = sc2;
                res.plan = plan;
            }
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace detail

/// System-optimal assignment by MSA on finite-difference path marginal costs.
/// Returns the lowest-TTT iterate; the uniform start plan is iterate one.
inline SolveResult solve_sodta(const ModelSpec& m, const MsaOptions& opt = {}) {
    const int H = m.demand.horizon();
    double last_ttt = 0.0;
    auto costs = [&](const AssignmentPlan& plan) {
        const auto snap = snapshot_loading(m, plan, H);
        last_ttt = snap.ttt;
        std::vector<std::vector<double>> c(H, std::vector<double>(m.net.path_count(), 0.0));
        for (int t = 0; t < H; ++t)
            for (const auto& od : m.net.ods) {
                if (od.paths.size() == 1) continue;
                for (int p : od.paths) c[t][p] = marginal_cost_from(m, plan, snap, p, t, opt.eps);
            }
        return c;
    };
    auto score = [&](const AssignmentPlan&, const std::vector<std::vector<double>>&) {
        return last_ttt;
    };
    auto res = detail::run_msa(m, opt, costs, score);
    res.ttt = simulate_plan(m, res.plan).ttt;
    return res;
}

/// Relative gap: sum f (c - c_min) / sum f c_min over (OD, interval).
inline double relative_gap(const ModelSpec& m, const AssignmentPlan& plan,
                           const std::vector<std::vector<double>>& times) {
    double num = 0.0, den = 0.0;
    for (int t = 0; t < m.demand.horizon(); ++t)
        for (int o = 0; o < static_cast<int>(m.net.ods.size()); ++o) {
            const auto& paths = m.net.ods[o].paths;
            const double q = m.demand.mean_at(o, t);
            double cmin = std::numeric_limits<double>::infinity();
            for (int p : paths) cmin = std::min(cmin, times[t][p]);
            for (int p : paths) {
                num += q * plan.ratios[t][p] * (times[t][p] - cmin);
                den += q * plan.ratios[t][p] * cmin;
            }
        }
    return den > 0.0 ? num / den : 0.0;
}

/// User equilibrium by MSA on experienced path travel times; the iterate
/// with the smallest relative gap is returned.
inline SolveResult solve_ue(const ModelSpec& m, const MsaOptions& opt = {}) {
    auto costs = [&](const AssignmentPlan& plan) { return simulate_plan(m, plan, true).path_times; };
    auto score = [&](const AssignmentPlan& plan, const std::vector<std::vector<double>>& c) {
        return relative_gap(m, plan, c);
    };
    auto res = detail::run_msa(m, opt, costs, score);
    auto fin = simulate_plan(m, res.plan, true);
    res.ttt = fin.ttt;
    res.gap = relative_gap(m, res.plan, fin.path_times);
    return res;
}

/// Deterministic time-indexed lookup of a solved plan for the controlled ODs.
class PlanPolicy {
public:
    PlanPolicy(const ctm::Network& net, AssignmentPlan plan, std::vector<int> controlled_ods)
        : plan_(std::move(plan)), ods_(std::move(controlled_ods)) {
        require(plan_.horizon() >= 1, "plan must have at least one interval");
        for (int o : ods_) paths_.push_back(net.ods.at(o).paths);
    }

    /// Past the horizon the last row is held.
    std::vector<double> act(int t) const {
        const auto& row = plan_.ratios[std::clamp(t, 0, plan_.horizon() - 1)];
        std::vector<double> a;
        for (const auto& ps : paths_)
            for (int p : ps) a.push_back(row[p]);
        return a;
    }

    const AssignmentPlan& plan() const { return plan_; }

private:
    AssignmentPlan plan_;
    std::vector<int> ods_;
    std::vector<std::vector<int>> paths_;
};

inline void write_plan_csv(std::ostream& os, const ctm::Network& net, const AssignmentPlan& plan) {
    os << "g,e,t,path_index,ratio\n";
    os.precision(12);
    for (const auto& od : net.ods)
        for (int t = 0; t < plan.horizon(); ++t)
            for (size_t i = 0; i < od.paths.size(); ++i)
                os << od.origin << ',' << od.dest << ',' << t << ',' << i << ','
                   << plan.ratios[t][od.paths[i]] << '\n';
}

}  // namespace transrl::sodta

#endif
