#ifndef TRANSRL_ENV_ROUTING_ENV_HPP
#define TRANSRL_ENV_ROUTING_ENV_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "transrl/common.hpp"
#include "transrl/ctm/demand.hpp"
#include "transrl/ctm/network.hpp"
#include "transrl/ctm/simulator.hpp"
#include "transrl/scenario.hpp"

namespace transrl::env {

using Observation = std::vector<double>;

/// Number of paths of each controlled OD pair, in action order.
using ActionLayout = std::vector<int>;

inline int simplex_dim(const ActionLayout& layout) {
    int d = 0;
    for (int k : layout) d += k;
    return d;
}

inline int logit_dim(const ActionLayout& layout) {
    int d = 0;
    for (int k : layout) d += k - 1;
    return d;
}

/// Accepts points within 1e-6 of the per-OD simplex (clip and renormalize);
/// rejects anything further away. Valid points pass through untouched.
inline std::vector<double> project_action(std::span<const double> a, const ActionLayout& layout) {
    require(static_cast<int>(a.size()) == simplex_dim(layout), "action dimension mismatch");
    std::vector<double> out(a.begin(), a.end());
    int off = 0;
    for (int k : layout) {
        double sum = 0.0;
        bool nonneg = true;
        for (int i = 0; i < k; ++i) {
            const double v = out[off + i];
            require(std::isfinite(v), "action component is not finite");
            require(v >= -1e-6, "action component below zero beyond tolerance");
            nonneg = nonneg && v >= 0.0;
            sum += v;
        }
        require(std::abs(sum - 1.0) <= 1e-6, "action ratios do not sum to one");
        if (!nonneg || std::abs(sum - 1.0) > 1e-12) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += (out[off + i] = std::max(0.0, out[off + i]));
            for (int i = 0; i < k; ++i) out[off + i] /= s;
        }
        off += k;
    }
    return out;
}

/// Historical average of the per-interval finished-vehicle measure.
/// A zero rate keeps the warm-up mean fixed.
class RewardTracker {
public:
    RewardTracker() = default;
    RewardTracker(int intervals, double scale, double lambda)
        : baseline_(intervals, 0.0), scale_(scale), lambda_(lambda) {
        require(scale > 0.0, "reward scale must be positive");
        require(lambda >= 0.0 && lambda <= 1.0, "baseline lambda must be in [0, 1]");
    }

    /// Mean over warm-up episodes.
    void initialize(const std::vector<std::vector<double>>& episodes) {
        require(!episodes.empty(), "baseline needs at least one warm-up episode");
        std::fill(baseline_.begin(), baseline_.end(), 0.0);
        for (const auto& e : episodes) {
            require(e.size() == baseline_.size(), "warm-up episode length mismatch");
            for (size_t t = 0; t < e.size(); ++t) baseline_[t] += e[t] / episodes.size();
        }
    }

    void update(const std::vector<double>& episode) {
        if (frozen_) return;
        require(episode.size() == baseline_.size(), "episode length mismatch");
        for (size_t t = 0; t < episode.size(); ++t)
            baseline_[t] = (1.0 - lambda_) * baseline_[t] + lambda_ * episode[t];
    }

    double reward(int t, double finished) const { return (finished - baseline_.at(t)) / scale_; }

    void freeze(bool f = true) { frozen_ = f; }
    bool frozen() const { return frozen_; }
    double scale() const { return scale_; }
    double lambda() const { return lambda_; }
    const std::vector<double>& baseline() const { return baseline_; }
    std::vector<double>& baseline() { return baseline_; }

private:
    std::vector<double> baseline_;
    double scale_ = 1.0;
    double lambda_ = 0.05;
    bool frozen_ = false;
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
    double finished = 0.0;  // finished-vehicle measure entering the reward
};

struct EpisodeLogRow {
    int t = 0;
    double finished = 0.0;
    double reward = 0.0;
    double ttt_to_date = 0.0;
};

/// Episodic routing MDP over a CTM network. One decision per interval; the
/// episode runs a fixed number of intervals (demand horizon plus drain).
///
/// The finished-vehicle measure of interval t is the step-average of the
/// cumulative count of vehicles that have left the network. With that
/// measure the undiscounted return is an exact decreasing affine function of
/// the total travel time over the episode window.
class RoutingEnv {
public:
    RoutingEnv(const Scenario& sc)
        : RoutingEnv(ctm::build_network(sc.network), sc.demand, sc.env, sc.initial) {}

    RoutingEnv(ctm::Network net, ctm::DemandProfile demand, EnvSettings settings,
               std::vector<InitialVehicles> initial = {})
        : net_(std::make_shared<const ctm::Network>(std::move(net))),
          demand_(std::move(demand)),
          settings_(std::move(settings)),
          initial_(std::move(initial)) {
        demand_.validate();
        require(demand_.od_count() == static_cast<int>(net_->ods.size()),
                "demand rows must match OD pairs");
        if (settings_.observed_links.empty()) {
            for (int l = 0; l < net_->link_count(); ++l) observed_.push_back(l);
        } else {
            for (const auto& id : settings_.observed_links) observed_.push_back(net_->link_index(id));
        }
        if (settings_.controlled_ods.empty()) {
            for (int o = 0; o < static_cast<int>(net_->ods.size()); ++o) controlled_.push_back(o);
        } else {
            for (const auto& id : settings_.controlled_ods) controlled_.push_back(net_->od_index(id));
        }
        for (int o : controlled_) layout_.push_back(static_cast<int>(net_->ods[o].paths.size()));
        // Uncontrolled ODs default to uniform ratios until set_fixed_ratios is called.
        fixed_.assign(net_->ods.size(), {});
        for (int o = 0; o < static_cast<int>(net_->ods.size()); ++o) {
            const int k = static_cast<int>(net_->ods[o].paths.size());
            fixed_[o].assign(1, std::vector<double>(k, 1.0 / k));
        }
        for (const auto& iv : initial_) {
            const int o = net_->od_index(iv.od);
            require(iv.path >= 0 && iv.path < static_cast<int>(net_->ods[o].paths.size()),
                    "initial vehicles on unknown path");
        }
        intervals_ = demand_.horizon() + settings_.drain_intervals;
        require(intervals_ >= 1, "episode must have at least one interval");
        scale_ = settings_.reward_scale > 0.0 ? settings_.reward_scale : demand_.peak_total() / 10.0;
        if (!(scale_ > 0.0)) scale_ = 1.0;
        reset(settings_.seed);
    }

    const ctm::Network& network() const { return *net_; }
    const ctm::DemandProfile& demand() const { return demand_; }
    const EnvSettings& settings() const { return settings_; }
    const ActionLayout& layout() const { return layout_; }
    const std::vector<int>& observed_links() const { return observed_; }
    const std::vector<int>& controlled_ods() const { return controlled_; }
    int obs_dim() const { return 1 + 2 * static_cast<int>(observed_.size()); }
    int action_dim() const { return simplex_dim(layout_); }
    int intervals() const { return intervals_; }
    int horizon() const { return demand_.horizon(); }
    double reward_scale() const { return scale_; }
    int t() const { return t_; }
    bool done() const { return t_ >= intervals_; }
    const ctm::SimState& state() const { return state_; }
    const std::vector<std::vector<double>>& demand_draws() const { return draws_; }

    RewardTracker make_tracker() const {
        return RewardTracker(intervals_, scale_, settings_.baseline_lambda);
    }
    void set_tracker(RewardTracker* tracker) { tracker_ = tracker; }

    /// Ratios [interval][path-in-OD] for an uncontrolled OD; the last row is held.
    void set_fixed_ratios(int od, std::vector<std::vector<double>> ratios) {
        require(!ratios.empty(), "fixed ratios need at least one interval");
        for (const auto& r : ratios)
            project_action(r, {static_cast<int>(net_->ods[od].paths.size())});
        fixed_[od] = std::move(ratios);
    }

    Observation reset(std::uint64_t seed) {
        state_ = ctm::make_state(*net_);
        for (const auto& iv : initial_) {
            const int o = net_->od_index(iv.od);
            ctm::place_initial(*net_, state_, net_->ods[o].paths[iv.path], iv.veh);
        }
        Rng rng(seed);
        draws_ = ctm::sample_demand_horizon(demand_, rng);
        t_ = 0;
        ttt_.reset();
        finished_.clear();
        log_.clear();
        return observe();
    }

    StepResult step(std::span<const double> action) {
        require(!done(), "step called on a finished episode");
        const auto a = project_action(action, layout_);
        const int P = net_->path_count();
        std::vector<double> path_veh(P, 0.0);
        if (t_ < demand_.horizon()) {
            std::vector<const double*> ratio(net_->ods.size(), nullptr);
            for (int o = 0; o < static_cast<int>(net_->ods.size()); ++o) {
                const auto& rows = fixed_[o];
                ratio[o] = rows[std::min<size_t>(t_, rows.size() - 1)].data();
            }
            int off = 0;
            for (int o : controlled_) {
                ratio[o] = a.data() + off;
                off += static_cast<int>(net_->ods[o].paths.size());
            }
            for (int o = 0; o < static_cast<int>(net_->ods.size()); ++o) {
                const auto& paths = net_->ods[o].paths;
                for (size_t i = 0; i < paths.size(); ++i)
                    path_veh[paths[i]] = draws_[t_][o] * ratio[o][i];
            }
        }
        for (double& v : path_veh) v /= net_->steps_per_interval;
        for (int k = 0; k < net_->steps_per_interval; ++k) {
            ctm::advance_step(*net_, state_, path_veh);
            if (on_sim_step) on_sim_step(state_);
        }
        const auto& rec = state_.intervals.back();
        ttt_.add(rec.avg_total_vehicles * net_->interval_hours());
        StepResult res;
        res.finished = rec.avg_cum_finished;
        res.reward = tracker_ ? tracker_->reward(t_, res.finished) : 0.0;
        finished_.push_back(res.finished);
        log_.push_back({t_, res.finished, res.reward, ttt_.value()});
        t_ += 1;
        res.done = done();
        res.obs = observe();
        return res;
    }

    /// Called after every simulation step (trajectory dumps).
    std::function<void(const ctm::SimState&)> on_sim_step;

    /// eta * sum_t (mean vehicles in network and queues during t), veh-h.
    double total_travel_time() const { return ttt_.value(); }
    const std::vector<double>& finished_sequence() const { return finished_; }
    const std::vector<EpisodeLogRow>& episode_log() const { return log_; }

private:
    Observation observe() const {
        Observation o(obs_dim(), 0.0);
        o[0] = static_cast<double>(t_) / intervals_;
        const int last = static_cast<int>(state_.intervals.size()) - 1;
        for (size_t i = 0; i < observed_.size(); ++i) {
            const auto& link = net_->links[observed_[i]];
            if (last < 0) {
                o[1 + 2 * i] = 0.0;
                o[2 + 2 * i] = 1.0;
                continue;
            }
            const auto m = ctm::measure_link(*net_, state_, observed_[i], last);
            o[1 + 2 * i] = m.flow / (link.fd.capacity * link.lanes);
            o[2 + 2 * i] = m.speed / link.fd.free_flow_speed;
        }
        return o;
    }

    std::shared_ptr<const ctm::Network> net_;
    ctm::DemandProfile demand_;
    EnvSettings settings_;
    std::vector<InitialVehicles> initial_;
    std::vector<int> observed_;
    std::vector<int> controlled_;
    ActionLayout layout_;
    std::vector<std::vector<std::vector<double>>> fixed_;
    int intervals_ = 0;
    double scale_ = 1.0;
    RewardTracker* tracker_ = nullptr;

    ctm::SimState state_;
    std::vector<std::vector<double>> draws_;
    int t_ = 0;
    KahanSum ttt_;
    std::vector<double> finished_;
    std::vector<EpisodeLogRow> log_;
};

inline void write_episode_log_csv(std::ostream& os, int episode, const std::vector<EpisodeLogRow>& rows,
                                  bool header = true) {
    if (header) os << "episode,t,F_t,r_t,ttt_to_date\n";
    os.precision(10);
    for (const auto& r : rows)
        os << episode << ',' << r.t << ',' << r.finished << ',' << r.reward << ',' << r.ttt_to_date
           << '\n';
}

}  // namespace transrl::env

#endif
