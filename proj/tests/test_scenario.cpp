#include <gtest/gtest.h>

#include "support.hpp"
#include "transrl/ctm/network.hpp"
#include "transrl/scenario.hpp"

using namespace transrl;

TEST(Scenario, BundledFilesParse) {
    for (const char* f : {"two_route.scn", "corridor.scn", "corridor_incident.scn"}) {
        SCOPED_TRACE(f);
        const auto sc = support::bundled(f);
        EXPECT_NO_THROW(ctm::build_network(sc.network));
        EXPECT_NO_THROW(ctm::build_network(sc.model));
        EXPECT_GT(sc.horizon(), 0);
        EXPECT_EQ(sc.episode_intervals(), sc.horizon() + sc.env.drain_intervals);
    }
}

TEST(Scenario, TwoRouteSettings) {
    const auto sc = support::bundled("two_route.scn");
    EXPECT_EQ(sc.name, "two_route");
    EXPECT_DOUBLE_EQ(sc.env.beta, 0.05);
    EXPECT_DOUBLE_EQ(sc.demand.beta, 0.05);
    EXPECT_EQ(sc.env.controlled_ods, std::vector<std::string>{"A"});
    EXPECT_FALSE(sc.mismatch.enabled);
    ASSERT_EQ(sc.model.links.size(), sc.network.links.size());
    for (size_t i = 0; i < sc.model.links.size(); ++i) {
        EXPECT_EQ(sc.model.links[i].fd.free_flow_speed, sc.network.links[i].fd.free_flow_speed);
        EXPECT_EQ(sc.model.links[i].fd.capacity, sc.network.links[i].fd.capacity);
    }
}

TEST(Scenario, MismatchWithinRange) {
    const auto sc = support::bundled("corridor.scn");
    ASSERT_TRUE(sc.mismatch.enabled);
    ASSERT_EQ(sc.perturbations.size(), sc.network.links.size());
    for (size_t i = 0; i < sc.network.links.size(); ++i) {
        const auto& t = sc.network.links[i];
        const auto& m = sc.model.links[i];
        const double rs = std::abs(m.fd.free_flow_speed / t.fd.free_flow_speed - 1.0);
        const double rc = std::abs(m.fd.capacity / t.fd.capacity - 1.0);
        EXPECT_GE(rs, 0.10 - 1e-12);
        EXPECT_LE(rs, 0.20 + 1e-12);
        EXPECT_GE(rc, 0.10 - 1e-12);
        EXPECT_LE(rc, 0.20 + 1e-12);
        EXPECT_EQ(m.length_km, t.length_km);
        EXPECT_EQ(m.lanes, t.lanes);
    }
    // same seed, same perturbation
    const auto again = support::bundled("corridor.scn");
    for (size_t i = 0; i < sc.perturbations.size(); ++i) {
        EXPECT_EQ(sc.perturbations[i].speed_factor, again.perturbations[i].speed_factor);
        EXPECT_EQ(sc.perturbations[i].capacity_factor, again.perturbations[i].capacity_factor);
    }
}

TEST(Scenario, TrainSettings) {
    const auto sc = parse_scenario_string(support::single_link() +
                                          "train episodes=40 warmup=10 hidden=8,4 alpha=0.1\n");
    EXPECT_EQ(sc.train.episodes, 40);
    EXPECT_EQ(sc.train.warmup_steps, 10);
    EXPECT_EQ(sc.train.hidden, (std::vector<int>{8, 4}));
    EXPECT_DOUBLE_EQ(sc.train.alpha, 0.1);
    const auto def = parse_scenario_string(support::single_link());
    EXPECT_EQ(def.train.episodes, 200);
    EXPECT_EQ(def.train.hidden, (std::vector<int>{64, 64}));
}

TEST(Scenario, CommentsAndInitialVehicles) {
    const auto sc = parse_scenario_string("# header\n" + support::single_link() +
                                          "initial od=A path=0 veh=4  # queued at t=0\n");
    ASSERT_EQ(sc.initial.size(), 1u);
    EXPECT_EQ(sc.initial[0].veh, 4.0);
}

TEST(Scenario, Errors) {
    const std::string base = support::single_link();
    EXPECT_THROW(parse_scenario_string(base + "bogus x=1\n"), Error);
    EXPECT_THROW(parse_scenario_string("nodes 1,2\n"), Error);
    EXPECT_THROW(parse_scenario_string(base + "demand od=Z values=1,2,3,4\n"), Error);
    EXPECT_THROW(parse_scenario_string(base + "env gamma=1.5\n"), Error);
    EXPECT_THROW(parse_scenario_string(base + "train episodes=0\n"), Error);
    EXPECT_THROW(parse_scenario_string(base + "link id=M from=1 to=2 length_km=x lanes=1 vf=60 "
                                              "capacity=1800 jam=150\n"),
                 Error);
    EXPECT_THROW(load_scenario("/nonexistent/file.scn"), Error);
    try {
        parse_scenario_string(base + "bogus\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 8"), std::string::npos) << e.what();
    }
}
