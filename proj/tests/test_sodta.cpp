#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "transrl/sodta/sodta.hpp"

using namespace transrl;
using namespace transrl::sodta;

namespace {

ModelSpec two_route_model(std::vector<double> demand) {
    auto sc = support::bundled("two_route.scn");
    sc.demand.mean = {std::move(demand)};
    sc.model = sc.network;
    return model_from_scenario(sc);
}

AssignmentPlan constant_plan(const ctm::Network& net, int H, double route1) {
    AssignmentPlan p;
    p.ratios.assign(H, {route1, 1.0 - route1});
    (void)net;
    return p;
}

// Independent loading: every step until empty, TTT = dt * sum of end-of-step vehicles.
double direct_ttt(const ModelSpec& m, int path) {
    auto s = ctm::make_state(m.net);
    const int spi = m.net.steps_per_interval;
    double ttt = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const int t = k / spi;
        std::vector<double> a(m.net.path_count(), 0.0);
        if (t < m.demand.horizon()) a[path] = m.demand.mean[0][t] / spi;
        ctm::advance_step(m.net, s, a);
        ttt += ctm::total_vehicles(m.net, s) * m.net.dt_hours;
        if (t >= m.demand.horizon() && k % spi == spi - 1 && ctm::total_vehicles(m.net, s) <= 1e-6)
            break;
    }
    return ttt;
}

}  // namespace

TEST(SimulatePlan, SingleRouteMatchesDirectLoading) {
    const auto m = two_route_model({200, 300, 400, 300, 200});
    for (int path : {0, 1}) {
        const auto r = simulate_plan(m, constant_plan(m.net, 5, path == 0 ? 1.0 : 0.0));
        EXPECT_TRUE(r.drained);
        EXPECT_NEAR(r.ttt, direct_ttt(m, path), 1e-9 * r.ttt);
    }
}

TEST(SimulatePlan, ZeroDemand) {
    const auto m = two_route_model({0, 0, 0});
    EXPECT_EQ(simulate_plan(m, uniform_plan(m.net, 3)).ttt, 0.0);
}

TEST(SimulatePlan, InactiveRatiosDoNotMatter) {
    const auto m = two_route_model({100, 0, 100});
    auto a = constant_plan(m.net, 3, 0.5);
    auto b = a;
    b.ratios[1] = {0.9, 0.1};
    EXPECT_EQ(simulate_plan(m, a).ttt, simulate_plan(m, b).ttt);
}

TEST(SimulatePlan, RejectsInvalidPlans) {
    const auto m = two_route_model({100, 100});
    auto p = constant_plan(m.net, 2, 0.5);
    p.ratios[0] = {0.7, 0.7};
    EXPECT_THROW(simulate_plan(m, p), Error);
    EXPECT_THROW(simulate_plan(m, constant_plan(m.net, 1, 0.5)), Error);
}

TEST(PathMarginalCost, UncongestedEqualsFreeFlowTime) {
    const auto m = two_route_model({20, 20, 20, 20});
    const auto plan = uniform_plan(m.net, 4);
    for (int p = 0; p < 2; ++p) {
        const double fft = m.net.path_free_flow_hours(p);
        EXPECT_NEAR(path_marginal_cost(m, plan, p, 1), fft, 0.05 * fft);
    }
}

TEST(PathMarginalCost, SaturatedBottleneckExceedsFreeFlow) {
    const auto m = two_route_model({400, 400, 400, 400, 400, 400});
    const auto plan = constant_plan(m.net, 6, 1.0);
    EXPECT_GT(path_marginal_cost(m, plan, 0, 3), 1.5 * m.net.path_free_flow_hours(0));
}

TEST(PathMarginalCost, PastHorizonOnDrainedNetwork) {
    const auto m = two_route_model({50, 50});
    const auto plan = uniform_plan(m.net, 2);
    for (int p = 0; p < 2; ++p)
        EXPECT_NEAR(path_marginal_cost(m, plan, p, 12), m.net.path_free_flow_hours(p), 1e-9);
}

TEST(SolveSodta, SinglePathIsAllOnes) {
    auto sc = parse_scenario_string(support::single_link(2, 30.0, 6));
    const auto m = model_from_scenario(sc);
    const auto r = solve_sodta(m);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_TRUE(r.converged);
    for (const auto& row : r.plan.ratios) EXPECT_EQ(row[0], 1.0);
    const auto u = solve_ue(m);
    EXPECT_EQ(u.iterations, 1);
    for (const auto& row : u.plan.ratios) EXPECT_EQ(row[0], 1.0);
}

TEST(SolveSodta, LowDemandUsesFasterRoute) {
    const auto m = two_route_model(std::vector<double>(6, 30.0));
    const auto r = solve_sodta(m);
    for (const auto& row : r.plan.ratios) EXPECT_GT(row[0], 0.99);
}

TEST(SolveSodta, PeakedDemandDipsThenRecovers) {
    const auto m = model_from_scenario(support::bundled("two_route.scn"));
    const auto r = solve_sodta(m);
    validate_plan(m.net, r.plan, m.demand.horizon());
    std::vector<double> k1;
    for (const auto& row : r.plan.ratios) k1.push_back(row[0]);
    const auto lo = std::min_element(k1.begin(), k1.end());
    const auto at = static_cast<int>(lo - k1.begin());
    EXPECT_GT(at, 0);
    EXPECT_LT(at, static_cast<int>(k1.size()) - 1);
    EXPECT_LT(*lo, k1.front() - 0.1);
    EXPECT_GT(k1.back(), *lo + 0.1);
    // best iterate never worse than the uniform start or any visited iterate
    EXPECT_LE(r.ttt, simulate_plan(m, uniform_plan(m.net, m.demand.horizon())).ttt + 1e-9);
    EXPECT_LE(r.ttt, *std::min_element(r.history.begin(), r.history.end()) + 1e-9);
}

TEST(SolveUe, CongestedRoutesEquilibrate) {
    const auto m = model_from_scenario(support::bundled("two_route.scn"));
    const auto ue = solve_ue(m);
    const auto so = solve_sodta(m);
    validate_plan(m.net, ue.plan, m.demand.horizon());
    const auto times = simulate_plan(m, ue.plan, true).path_times;
    int used = 0;
    for (int t = 0; t < m.demand.horizon(); ++t) {
        const double k = ue.plan.ratios[t][0];
        if (k < 0.05 || k > 0.95) continue;
        ++used;
        const double c0 = times[t][0], c1 = times[t][1];
        EXPECT_LE(std::abs(c0 - c1) / std::min(c0, c1), 0.03) << "interval " << t;
    }
    EXPECT_GT(used, 0);
    EXPECT_GE(ue.ttt, so.ttt);
}

TEST(PlanPolicy, LookupAndBoundary) {
    const auto m = two_route_model({10, 10, 10, 10});
    AssignmentPlan p = uniform_plan(m.net, 4);
    p.ratios[3] = {0.7, 0.3};
    PlanPolicy pol(m.net, p, {0});
    EXPECT_EQ(pol.act(3), (std::vector<double>{0.7, 0.3}));
    EXPECT_EQ(pol.act(0), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(pol.act(40), (std::vector<double>{0.7, 0.3}));
    EXPECT_EQ(pol.act(3), pol.act(3));
}

TEST(PlanCsv, Columns) {
    const auto m = two_route_model({10});
    std::ostringstream os;
    write_plan_csv(os, m.net, uniform_plan(m.net, 1));
    EXPECT_EQ(os.str(), "g,e,t,path_index,ratio\n1,3,0,0,0.5\n1,3,0,1,0.5\n");
}
