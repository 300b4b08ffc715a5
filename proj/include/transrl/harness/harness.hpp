#ifndef TRANSRL_HARNESS_HARNESS_HPP
#define TRANSRL_HARNESS_HARNESS_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "transrl/agent/agent.hpp"
#include "transrl/common.hpp"
#include "transrl/env/routing_env.hpp"
#include "transrl/scenario.hpp"
#include "transrl/sodta/sodta.hpp"
#include "transrl/teacher/teacher.hpp"

namespace transrl::harness {

using json = nlohmann::json;

/// Maps (observation, interval) to a per-OD simplex action.
using PolicyFn = std::function<std::vector<double>(const env::Observation&, int)>;

struct RunReport {
    std::string method;
    std::vector<double> ttt;
    std::vector<std::uint64_t> seeds;
    double mean = 0.0;
    double sd = 0.0;  // n - 1 denominator
    json manifest;
};

/// Welford's update: exact zero spread for identical samples.
inline void summarize(RunReport& r) {
    double mean = 0.0, m2 = 0.0, k = 0.0;
    for (double x : r.ttt) {
        k += 1.0;
        const double d = x - mean;
        mean += d / k;
        m2 += d * (x - mean);
    }
    r.mean = mean;
    r.sd = k > 1.0 ? std::sqrt(m2 / (k - 1.0)) : 0.0;
}

/// Episode e of every evaluation uses demand seed mix_seed(seed, e), so all
/// methods face identical realizations.
inline RunReport evaluate(const std::string& method, const PolicyFn& policy, env::RoutingEnv env,
                          int n_episodes, std::uint64_t seed) {
    require(n_episodes >= 1, "need at least one evaluation episode");
    env.set_tracker(nullptr);
    RunReport rep;
    rep.method = method;
    for (int e = 0; e < n_episodes; ++e) {
        const auto s = mix_seed(seed, e);
        auto o = env.reset(s);
        while (!env.done()) {
            const auto a = policy(o, env.t());
            require(static_cast<int>(a.size()) == env.action_dim(),
                    "policy/scenario action dimension mismatch");
            o = env.step(a).obs;
        }
        rep.ttt.push_back(env.total_travel_time());
        rep.seeds.push_back(s);
    }
    summarize(rep);
    rep.manifest = {{"method", method}, {"episodes", n_episodes}, {"seed", seed},
                    {"beta", env.demand().beta}, {"intervals", env.intervals()}};
    return rep;
}

inline PolicyFn plan_policy_fn(std::shared_ptr<const sodta::PlanPolicy> p) {
    return [p](const env::Observation&, int t) { return p->act(t); };
}

inline PolicyFn agent_policy_fn(std::shared_ptr<const agent::Agent> a) {
    return [a](const env::Observation& o, int) { return a->act_deterministic(o); };
}

inline json report_json(const RunReport& r) {
    return {{"method", r.method}, {"mean", r.mean}, {"sd", r.sd}, {"ttt", r.ttt},
            {"seeds", r.seeds}, {"manifest", r.manifest}};
}

struct CompareRow {
    std::string label;
    const RunReport* report = nullptr;  // null: omitted with a warning
};

/// CSV (method, average, sd, episodes) plus an aligned text table.
inline std::string compare(const std::vector<CompareRow>& rows, std::ostream* csv = nullptr,
                           std::ostream* warn = &std::cerr) {
    std::ostringstream txt;
    txt << std::left << std::setw(24) << "Method" << std::right << std::setw(14) << "Average"
        << std::setw(12) << "SD" << '\n';
    if (csv) *csv << "method,average,sd,episodes\n";
    for (const auto& r : rows) {
        if (!r.report) {
            if (warn) *warn << "warning: no report for '" << r.label << "', row omitted\n";
            continue;
        }
        txt << std::left << std::setw(24) << r.label << std::right << std::fixed
            << std::setprecision(2) << std::setw(14) << r.report->mean << std::setw(12)
            << r.report->sd << '\n';
        if (csv) {
            std::ostringstream line;
            line.precision(12);
            line << r.label << ',' << r.report->mean << ',' << r.report->sd << ','
                 << r.report->ttt.size() << '\n';
            *csv << line.str();
        }
    }
    return txt.str();
}

struct PrepareOptions {
    int ue_warmup_episodes = 10;
    int imitation_rollouts = 20;
    double imitation_noise = 0.05;
    teacher::FitOptions fit;
    std::vector<int> teacher_hidden{64, 64};
    sodta::MsaOptions msa;
    std::uint64_t seed = 1;
    bool verbose = false;
};

/// Scenario with its solved plans, environment, warm-started reward baseline
/// and fitted teacher mean.
struct Pipeline {
    Scenario scenario;
    sodta::ModelSpec model;
    sodta::SolveResult so, ue;
    std::shared_ptr<const sodta::PlanPolicy> pre_dso, ue_policy;
    std::unique_ptr<env::RoutingEnv> env;
    env::RewardTracker tracker;
    double ue_warmup_ttt = 0.0;  // mean TTT of the warm-up episodes
    teacher::TeacherPolicy teacher;
    teacher::FitReport fit;
};

inline std::unique_ptr<Pipeline> prepare(const Scenario& sc, const PrepareOptions& opt = {}) {
    auto p = std::make_unique<Pipeline>();
    p->scenario = sc;
    p->model = sodta::model_from_scenario(sc);
    p->so = sodta::solve_sodta(p->model, opt.msa);
    p->ue = sodta::solve_ue(p->model, opt.msa);
    if (opt.verbose)
        std::cerr << "model TTT: SO " << p->so.ttt << " (" << p->so.iterations << " it), UE "
                  << p->ue.ttt << " (gap " << p->ue.gap << ")\n";
    p->env = std::make_unique<env::RoutingEnv>(sc);
    auto& env = *p->env;
    const auto& net = env.network();
    for (int o = 0; o < static_cast<int>(net.ods.size()); ++o) {
        bool controlled = false;
        for (int c : env.controlled_ods()) controlled = controlled || c == o;
        if (controlled) continue;
        std::vector<std::vector<double>> rows;
        for (int t = 0; t < env.horizon(); ++t) rows.push_back(p->ue.plan.od_ratios(net, o, t));
        env.set_fixed_ratios(o, rows);
    }
    p->pre_dso = std::make_shared<sodta::PlanPolicy>(net, p->so.plan, env.controlled_ods());
    p->ue_policy = std::make_shared<sodta::PlanPolicy>(net, p->ue.plan, env.controlled_ods());

    // Reward baseline: mean finished measure of UE warm-up episodes.
    p->tracker = env.make_tracker();
    std::vector<std::vector<double>> warm;
    double ttt = 0.0;
    for (int e = 0; e < opt.ue_warmup_episodes; ++e) {
        env.reset(mix_seed(opt.seed ^ 0x57A4, e));
        while (!env.done()) env.step(p->ue_policy->act(env.t()));
        warm.push_back(env.finished_sequence());
        ttt += env.total_travel_time() / opt.ue_warmup_episodes;
    }
    p->tracker.initialize(warm);
    p->ue_warmup_ttt = ttt;

    p->teacher = teacher::TeacherPolicy(env.obs_dim(), env.layout(), 0.1, opt.teacher_hidden);
    const auto data = teacher::collect_imitation_data(env, *p->pre_dso, opt.imitation_rollouts,
                                                      opt.imitation_noise, mix_seed(opt.seed, 77));
    auto fo = opt.fit;
    fo.seed = mix_seed(opt.seed, 78);
    p->fit = teacher::fit_imitation(p->teacher, data, fo);
    if (opt.verbose)
        std::cerr << "teacher fit: held-out MSE " << p->fit.heldout_mse << " after " << p->fit.epochs
                  << " epochs\n";
    return p;
}

struct TrainedMethod {
    std::string name;
    std::unique_ptr<teacher::TeacherPolicy> teacher;
    std::shared_ptr<agent::Agent> agent;
    agent::TrainResult result;
    env::RewardTracker tracker;
};

/// sigma <= 0 selects the uniform teacher (the max-entropy baseline).
inline TrainedMethod train_method(const Pipeline& p, const std::string& name, double sigma,
                                  const agent::AgentConfig& cfg, agent::TrainOptions topt) {
    TrainedMethod m;
    m.name = name;
    auto& env0 = *p.env;
    if (sigma > 0.0) {
        m.teacher = std::make_unique<teacher::TeacherPolicy>(p.teacher);
        m.teacher->set_sigma(sigma);
    } else {
        m.teacher = std::make_unique<teacher::TeacherPolicy>(
            teacher::TeacherPolicy::uniform(env0.obs_dim(), env0.layout()));
    }
    m.agent = std::make_shared<agent::Agent>(env0.obs_dim(), env0.layout(), *m.teacher, cfg);
    m.tracker = p.tracker;
    env::RoutingEnv env = env0;
    if (!std::isfinite(topt.watchdog_ttt)) topt.watchdog_ttt = p.ue_warmup_ttt;
    m.result = agent::train(env, m.tracker, *m.agent, topt);
    return m;
}

struct SweepCurve {
    double sigma = 0.0;
    std::vector<agent::EpisodeRecord> curve;
    RunReport final_eval;
};

/// One training run per sigma with shared seeds, plus a final evaluation.
inline std::vector<SweepCurve> sensitivity_sweep(const Pipeline& p, const std::vector<double>& sigmas,
                                                 const agent::AgentConfig& cfg,
                                                 const agent::TrainOptions& topt, int eval_episodes,
                                                 std::uint64_t eval_seed) {
    std::vector<SweepCurve> out;
    for (double s : sigmas) {
        auto m = train_method(p, "transrl", s, cfg, topt);
        SweepCurve c;
        c.sigma = s;
        c.curve = m.result.curve;
        c.final_eval = evaluate("transrl", agent_policy_fn(m.agent), *p.env, eval_episodes, eval_seed);
        out.push_back(std::move(c));
    }
    return out;
}

/// Least-squares slope of y[begin, end) against its index.
inline double slope(const std::vector<double>& y, size_t begin, size_t end) {
    require(end <= y.size() && end >= begin + 2, "slope needs at least two points");
    const double n = static_cast<double>(end - begin);
    const double xm = (n - 1.0) / 2.0;
    double ym = 0.0;
    for (size_t i = begin; i < end; ++i) ym += y[i] / n;
    double num = 0.0, den = 0.0;
    for (size_t i = begin; i < end; ++i) {
        const double dx = static_cast<double>(i - begin) - xm;
        num += dx * (y[i] - ym);
        den += dx * dx;
    }
    return num / den;
}

/// Falling over the first half of the horizon, rising over the second.
inline bool dip_then_rise(const std::vector<double>& profile, double threshold) {
    const size_t h = profile.size() / 2;
    if (h < 2 || profile.size() - h < 2) return false;
    return slope(profile, 0, h) < -threshold && slope(profile, h, profile.size()) > threshold;
}

/// First episode whose probe profile dips then rises; -1 if none.
inline int first_dip_then_rise(const std::vector<agent::EpisodeRecord>& curve, double threshold) {
    for (const auto& r : curve)
        if (dip_then_rise(r.probe_profile, threshold)) return r.episode;
    return -1;
}

inline void write_curve_csv(std::ostream& os, const std::vector<agent::EpisodeRecord>& curve) {
    os << "episode,return,ttt,critic_loss,actor_loss\n";
    os.precision(10);
    for (const auto& r : curve)
        os << r.episode << ',' << r.ret << ',' << r.ttt << ',' << r.critic_loss << ',' << r.actor_loss
           << '\n';
}

inline json agent_config_json(const agent::AgentConfig& c) {
    return {{"alpha", c.alpha}, {"gamma", c.gamma}, {"actor_lr", c.actor_lr},
            {"critic_lr", c.critic_lr}, {"tau", c.tau}, {"batch", c.batch},
            {"buffer", c.buffer}, {"warmup_steps", c.warmup_steps},
            {"update_every", c.update_every}, {"updates_per_step", c.updates_per_step},
            {"hidden", c.hidden}, {"log_std_min", c.log_std_min}, {"log_std_max", c.log_std_max},
            {"seed", c.seed}, {"init_from_teacher", c.init_from_teacher},
            {"relabel_rewards", c.relabel_rewards}};
}

}  // namespace transrl::harness

#endif
