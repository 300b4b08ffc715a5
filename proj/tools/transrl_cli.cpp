// Command-line front end: simulate, solve-sodta, train, evaluate, compare,
// sensitivity, tabular-verify.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "transrl/agent/agent.hpp"
#include "transrl/harness/harness.hpp"
#include "transrl/scenario.hpp"
#include "transrl/sodta/sodta.hpp"
#include "transrl/tabular/tabular.hpp"
#include "transrl/teacher/teacher.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace transrl;

namespace {

struct Common {
    std::string scenario;
    double beta = -1.0;  // < 0 keeps the scenario value
    std::uint64_t seed = 1;
    std::string out = "out";
};

Scenario load(const Common& c) {
    auto sc = load_scenario(c.scenario);
    if (c.beta >= 0.0) {
        sc.env.beta = c.beta;
        sc.demand.beta = c.beta;
    }
    return sc;
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream os(p);
    os << j.dump(2) << '\n';
}

fs::path ensure_dir(const std::string& d) {
    fs::create_directories(d);
    return fs::path(d);
}

agent::AgentConfig agent_config(const Scenario& sc, double alpha, std::uint64_t seed,
                                const std::vector<int>& hidden, int warmup) {
    agent::AgentConfig cfg;
    cfg.alpha = alpha;
    cfg.gamma = sc.env.gamma;
    cfg.seed = seed;
    cfg.hidden = hidden;
    cfg.warmup_steps = warmup;
    return cfg;
}

// Options left unset on the command line come from the scenario's train line.
void apply_train_defaults(const CLI::App& cmd, const Scenario& sc, int& episodes, int& warmup,
                          std::vector<int>& hidden, double& alpha) {
    if (!cmd.count("--episodes")) episodes = sc.train.episodes;
    if (!cmd.count("--warmup")) warmup = sc.train.warmup_steps;
    if (!cmd.count("--hidden")) hidden = sc.train.hidden;
    if (!cmd.count("--alpha")) alpha = sc.train.alpha;
}

json scenario_json(const Scenario& sc) {
    json pert = json::array();
    for (const auto& p : sc.perturbations)
        pert.push_back({{"link", p.link}, {"speed_factor", p.speed_factor},
                        {"capacity_factor", p.capacity_factor}});
    return {{"name", sc.name}, {"beta", sc.env.beta}, {"horizon", sc.horizon()},
            {"drain", sc.env.drain_intervals}, {"mismatch_seed", sc.mismatch.seed},
            {"perturbations", pert}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Teacher-guided RL for dynamic routing on CTM networks"};
    app.require_subcommand(1);

    // simulate
    Common sim;
    std::string sim_plan = "so";
    std::string sim_traj;
    auto* s_sim = app.add_subcommand("simulate", "Run one episode of a solver plan in the true environment");
    s_sim->add_option("--scenario", sim.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    s_sim->add_option("--plan", sim_plan, "uniform | so | ue")->check(CLI::IsMember({"uniform", "so", "ue"}));
    s_sim->add_option("--seed", sim.seed, "Demand seed");
    s_sim->add_option("--beta", sim.beta, "Override demand uncertainty");
    s_sim->add_option("--trajectory", sim_traj, "Write per-step cell occupancies to this CSV");
    s_sim->add_option("--out", sim.out, "Output directory");

    // solve-sodta
    Common sol;
    int sol_iters = 200;
    auto* s_sol = app.add_subcommand("solve-sodta", "Solve SO and UE plans on the internal model");
    s_sol->add_option("--scenario", sol.scenario)->required()->check(CLI::ExistingFile);
    s_sol->add_option("--iterations", sol_iters, "MSA iteration cap");
    s_sol->add_option("--out", sol.out);

    // train
    Common tr;
    std::string algo = "transrl";
    double sigma = 0.05, alpha = 0.2;
    int episodes = 200, warmup = 1000;
    std::vector<int> hidden{64, 64};
    auto* s_tr = app.add_subcommand("train", "Train TransRL or SAC");
    s_tr->add_option("--scenario", tr.scenario)->required()->check(CLI::ExistingFile);
    s_tr->add_option("--algo", algo)->check(CLI::IsMember({"transrl", "sac"}));
    s_tr->add_option("--sigma", sigma, "Teacher unreliability (logit std)");
    s_tr->add_option("--alpha", alpha, "Temperature");
    s_tr->add_option("--seed", tr.seed);
    s_tr->add_option("--beta", tr.beta);
    s_tr->add_option("--episodes", episodes);
    s_tr->add_option("--warmup", warmup, "Environment steps before learning starts");
    s_tr->add_option("--hidden", hidden, "Hidden widths")->delimiter(',');
    s_tr->add_option("--out", tr.out);

    // evaluate
    Common ev;
    std::string method = "pre-dso", checkpoint, teacher_ckpt, label;
    int ev_episodes = 100;
    auto* s_ev = app.add_subcommand("evaluate", "Evaluate a method over test episodes");
    s_ev->add_option("--scenario", ev.scenario)->required()->check(CLI::ExistingFile);
    s_ev->add_option("--method", method, "pre-dso | ue | agent")
        ->check(CLI::IsMember({"pre-dso", "ue", "agent"}));
    s_ev->add_option("--checkpoint", checkpoint, "Agent checkpoint (method agent)");
    s_ev->add_option("--teacher", teacher_ckpt, "Teacher checkpoint saved with the agent");
    s_ev->add_option("--label", label, "Method name in the report");
    s_ev->add_option("--episodes", ev_episodes);
    s_ev->add_option("--seed", ev.seed);
    s_ev->add_option("--beta", ev.beta);
    s_ev->add_option("--out", ev.out);

    // compare
    std::vector<std::string> reports;
    std::string cmp_out = "out";
    auto* s_cmp = app.add_subcommand("compare", "Tabulate evaluation reports");
    s_cmp->add_option("reports", reports, "Report JSON files")->required();
    s_cmp->add_option("--out", cmp_out);

    // sensitivity
    Common se;
    std::vector<double> sigmas{0.05, 0.10, 0.20};
    int se_episodes = 200, se_eval = 100;
    auto* s_se = app.add_subcommand("sensitivity", "Train one TransRL run per sigma");
    s_se->add_option("--scenario", se.scenario)->required()->check(CLI::ExistingFile);
    s_se->add_option("--sigmas", sigmas)->delimiter(',');
    s_se->add_option("--episodes", se_episodes);
    s_se->add_option("--eval-episodes", se_eval);
    s_se->add_option("--alpha", alpha);
    s_se->add_option("--warmup", warmup);
    s_se->add_option("--hidden", hidden)->delimiter(',');
    s_se->add_option("--seed", se.seed);
    s_se->add_option("--beta", se.beta);
    s_se->add_option("--out", se.out);

    // tabular-verify
    int trials = 100;
    std::uint64_t tab_seed = 1;
    auto* s_tab = app.add_subcommand("tabular-verify", "Check the tabular convergence results on random MDPs");
    s_tab->add_option("--trials", trials);
    s_tab->add_option("--seed", tab_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s_sim) {
            auto sc = load(sim);
            auto dir = ensure_dir(sim.out);
            env::RoutingEnv env(sc);
            auto model = sodta::model_from_scenario(sc);
            sodta::AssignmentPlan plan = sodta::uniform_plan(model.net, model.demand.horizon());
            if (sim_plan == "so") plan = sodta::solve_sodta(model).plan;
            if (sim_plan == "ue") plan = sodta::solve_ue(model).plan;
            sodta::PlanPolicy pol(env.network(), plan, env.controlled_ods());
            std::ofstream traj;
            if (!sim_traj.empty()) {
                traj.open(sim_traj);
                traj << "step,cell_id,path_id,occupancy\n";
                traj.precision(12);
                env.on_sim_step = [&](const ctm::SimState& st) {
                    ctm::write_trajectory_rows(traj, env.network(), st);
                };
            }
            auto o = env.reset(sim.seed);
            while (!env.done()) o = env.step(pol.act(env.t())).obs;
            std::ofstream log(dir / "episode_log.csv");
            env::write_episode_log_csv(log, 0, env.episode_log());
            std::cout << "TTT " << env.total_travel_time() << " veh-h\n";
            return 0;
        }
        if (*s_sol) {
            auto sc = load_scenario(sol.scenario);
            auto dir = ensure_dir(sol.out);
            auto model = sodta::model_from_scenario(sc);
            sodta::MsaOptions opt;
            opt.max_iterations = sol_iters;
            auto so = sodta::solve_sodta(model, opt);
            auto ue = sodta::solve_ue(model, opt);
            std::ofstream a(dir / "so_plan.csv"), b(dir / "ue_plan.csv");
            sodta::write_plan_csv(a, model.net, so.plan);
            sodta::write_plan_csv(b, model.net, ue.plan);
            write_json(dir / "solve.json",
                       {{"scenario", scenario_json(sc)},
                        {"so", {{"ttt", so.ttt}, {"iterations", so.iterations}, {"converged", so.converged}}},
                        {"ue", {{"ttt", ue.ttt}, {"gap", ue.gap}, {"iterations", ue.iterations},
                                {"converged", ue.converged}}}});
            std::cout << "SO model TTT " << so.ttt << " veh-h, UE model TTT " << ue.ttt << " veh-h\n";
            return 0;
        }
        if (*s_tr) {
            auto sc = load(tr);
            auto dir = ensure_dir(tr.out);
            apply_train_defaults(*s_tr, sc, episodes, warmup, hidden, alpha);
            harness::PrepareOptions po;
            po.seed = tr.seed;
            po.verbose = true;
            po.teacher_hidden = hidden;
            auto p = harness::prepare(sc, po);
            auto cfg = agent_config(sc, alpha, tr.seed, hidden, warmup);
            agent::TrainOptions topt;
            topt.episodes = episodes;
            topt.env_seed = mix_seed(tr.seed, 1);
            topt.on_episode = [](const agent::EpisodeRecord& r) {
                if (r.episode % 10 == 0)
                    std::cerr << "episode " << r.episode << " return " << r.ret << " TTT " << r.ttt << '\n';
            };
            auto m = harness::train_method(*p, algo, algo == "sac" ? 0.0 : sigma, cfg, topt);
            std::ofstream curve(dir / "curve.csv");
            harness::write_curve_csv(curve, m.result.curve);
            m.agent->save((dir / "agent.trlw").string());
            m.teacher->save((dir / "teacher.trlw").string());
            write_json(dir / "manifest.json",
                       {{"scenario", scenario_json(sc)}, {"algo", algo}, {"sigma", sigma},
                        {"episodes", episodes}, {"agent", harness::agent_config_json(cfg)},
                        {"aborted", m.result.aborted}, {"diagnostics", m.result.diagnostics},
                        {"teacher_fit_mse", p->fit.heldout_mse}});
            if (m.result.aborted) std::cerr << "aborted: " << m.result.diagnostics << '\n';
            return m.result.aborted ? 2 : 0;
        }
        if (*s_ev) {
            auto sc = load(ev);
            auto dir = ensure_dir(ev.out);
            env::RoutingEnv env(sc);
            auto model = sodta::model_from_scenario(sc);
            harness::PolicyFn fn;
            std::unique_ptr<teacher::TeacherPolicy> tp;
            if (method == "agent") {
                if (checkpoint.empty() || teacher_ckpt.empty())
                    throw Error("method 'agent' needs --checkpoint and --teacher");
                tp = std::make_unique<teacher::TeacherPolicy>(teacher::TeacherPolicy::load(teacher_ckpt));
                const auto c = nn::Checkpoint::load(checkpoint);
                auto cfg = agent::AgentConfig{};
                const auto& aw = c.int_list("actor_widths");
                cfg.hidden.assign(aw.begin() + 1, aw.end() - 1);
                auto ag = std::make_shared<agent::Agent>(env.obs_dim(), env.layout(), *tp, cfg);
                ag->load(checkpoint);
                fn = harness::agent_policy_fn(ag);
            } else {
                auto plan = method == "ue" ? sodta::solve_ue(model).plan : sodta::solve_sodta(model).plan;
                fn = harness::plan_policy_fn(
                    std::make_shared<sodta::PlanPolicy>(env.network(), plan, env.controlled_ods()));
            }
            auto rep = harness::evaluate(label.empty() ? method : label, fn, env, ev_episodes, ev.seed);
            rep.manifest["scenario"] = scenario_json(sc);
            write_json(dir / ("report_" + rep.method + ".json"), harness::report_json(rep));
            std::cout << rep.method << " mean TTT " << rep.mean << " sd " << rep.sd << '\n';
            return 0;
        }
        if (*s_cmp) {
            auto dir = ensure_dir(cmp_out);
            std::vector<harness::RunReport> reps;
            std::vector<harness::CompareRow> rows;
            for (const auto& f : reports) {
                std::ifstream is(f);
                if (!is) {
                    rows.push_back({f, nullptr});
                    continue;
                }
                json j = json::parse(is);
                harness::RunReport r;
                r.method = j.at("method").get<std::string>();
                r.ttt = j.at("ttt").get<std::vector<double>>();
                harness::summarize(r);
                reps.push_back(std::move(r));
            }
            for (const auto& r : reps) rows.push_back({r.method, &r});
            std::ofstream csv(dir / "table.csv");
            const auto txt = harness::compare(rows, &csv);
            std::ofstream(dir / "table.txt") << txt;
            std::cout << txt;
            return 0;
        }
        if (*s_se) {
            auto sc = load(se);
            auto dir = ensure_dir(se.out);
            apply_train_defaults(*s_se, sc, se_episodes, warmup, hidden, alpha);
            harness::PrepareOptions po;
            po.seed = se.seed;
            po.teacher_hidden = hidden;
            auto p = harness::prepare(sc, po);
            auto cfg = agent_config(sc, alpha, se.seed, hidden, warmup);
            agent::TrainOptions topt;
            topt.episodes = se_episodes;
            topt.env_seed = mix_seed(se.seed, 1);
            auto curves = harness::sensitivity_sweep(*p, sigmas, cfg, topt, se_eval, mix_seed(se.seed, 2));
            json summary = json::array();
            for (const auto& c : curves) {
                std::ostringstream name;
                name << "curve_sigma_" << c.sigma << ".csv";
                std::ofstream os(dir / name.str());
                harness::write_curve_csv(os, c.curve);
                summary.push_back({{"sigma", c.sigma}, {"mean_ttt", c.final_eval.mean}, {"sd_ttt", c.final_eval.sd}});
                std::cout << "sigma " << c.sigma << " mean TTT " << c.final_eval.mean << '\n';
            }
            write_json(dir / "sensitivity.json", {{"scenario", scenario_json(sc)}, {"runs", summary}});
            return 0;
        }
        if (*s_tab) {
            Rng rng(tab_seed);
            std::uniform_int_distribution<int> ds(1, 10), da(1, 5);
            std::uniform_real_distribution<double> dg(0.0, 0.95);
            int fail_l1 = 0, fail_l2 = 0, fail_pi = 0, fail_t1 = 0;
            for (int k = 0; k < trials; ++k) {
                const int S = ds(rng), A = da(rng);
                const double g = dg(rng), alpha = 0.5;
                auto m = tabular::random_mdp(S, A, g, rng);
                auto pi = tabular::random_policy(S, A, rng);
                auto exact = tabular::evaluate_policy_exact(m, pi, alpha);
                auto it = tabular::evaluate_policy_iterative(m, pi, alpha);
                if ((it.Q - exact).cwiseAbs().maxCoeff() > 1e-8) ++fail_l1;
                auto r1 = tabular::policy_iteration(m, alpha, pi);
                auto r2 = tabular::policy_iteration(m, alpha, tabular::uniform_policy(S, A));
                if (r1.worst_monotonicity < -1e-9 || r2.worst_monotonicity < -1e-9) ++fail_l2;
                if ((r1.Q - r2.Q).cwiseAbs().maxCoeff() > 1e-6) ++fail_pi;
                auto mu = m;
                mu.teacher = tabular::uniform_policy(S, A);
                auto ru = tabular::policy_iteration(mu, alpha, tabular::uniform_policy(S, A));
                auto soft = tabular::soft_value_iteration(mu, alpha);
                const double offset = g * alpha * std::log(static_cast<double>(A)) / (1.0 - g);
                if ((ru.pi - soft.pi).cwiseAbs().maxCoeff() > 1e-6 ||
                    (ru.Q.array() + offset - soft.Q.array()).abs().maxCoeff() > 1e-6)
                    ++fail_t1;
            }
            auto line = [](const char* what, int fails) {
                std::cout << (fails == 0 ? "PASS " : "FAIL ") << what << " (" << fails << " failures)\n";
            };
            line("iterative evaluation matches exact solve", fail_l1);
            line("monotone policy improvement", fail_l2);
            line("policy iteration: unique fixed point from two starts", fail_pi);
            line("uniform teacher equals soft policy iteration", fail_t1);
            return (fail_l1 + fail_l2 + fail_pi + fail_t1) == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
