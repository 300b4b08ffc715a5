#ifndef TRANSRL_SCENARIO_HPP
#define TRANSRL_SCENARIO_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "transrl/common.hpp"
#include "transrl/ctm/demand.hpp"
#include "transrl/ctm/network.hpp"

namespace transrl {

struct InitialVehicles {
    std::string od;
    int path = 0;  // index within the OD's path set
    double veh = 0.0;
};

struct EnvSettings {
    double beta = 0.0;
    double gamma = 0.99;
    double reward_scale = 0.0;  // 0 means (peak demand per interval) / 10
    double baseline_lambda = 0.05;
    int drain_intervals = 0;
    std::vector<std::string> observed_links;  // empty: every link
    std::vector<std::string> controlled_ods;  // empty: every OD
    std::uint64_t seed = 1;
};

/// Per-scenario learning budget and network size.
struct TrainSettings {
    int episodes = 200;
    int warmup_steps = 1000;
    std::vector<int> hidden{64, 64};
    double alpha = 0.2;
};

/// Free-flow speed and capacity of the internal model scaled by a random
/// factor 1 +/- U[min, max] per link (signs independent).
struct MismatchSpec {
    bool enabled = false;
    std::uint64_t seed = 0;
    double min_rel = 0.10;
    double max_rel = 0.20;
};

struct LinkPerturbation {
    std::string link;
    double speed_factor = 1.0;
    double capacity_factor = 1.0;
};

/// A true environment plus the internal model used by the transportation method.
struct Scenario {
    std::string name;
    ctm::NetworkSpec network;      // true environment
    ctm::NetworkSpec model;        // model used by the solver (perturbed copy)
    ctm::DemandProfile demand;     // mean OD demand, veh per interval
    EnvSettings env;
    TrainSettings train;
    MismatchSpec mismatch;
    std::vector<LinkPerturbation> perturbations;
    std::vector<InitialVehicles> initial;

    int horizon() const { return demand.horizon(); }
    int episode_intervals() const { return demand.horizon() + env.drain_intervals; }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double to_double(const std::string& v, const std::string& key, int line) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw Error("line " + std::to_string(line) + ": '" + key + "' expects a number, got '" +
                    v + "'");
    }
}

inline int to_int(const std::string& v, const std::string& key, int line) {
    double d = to_double(v, key, line);
    if (d != static_cast<int>(d))
        throw Error("line " + std::to_string(line) + ": '" + key + "' expects an integer");
    return static_cast<int>(d);
}

struct KeyValues {
    std::map<std::string, std::string> kv;
    int line = 0;

    bool has(const std::string& k) const { return kv.count(k) > 0; }
    const std::string& str(const std::string& k) const {
        auto it = kv.find(k);
        if (it == kv.end())
            throw Error("line " + std::to_string(line) + ": missing key '" + k + "'");
        return it->second;
    }
    double num(const std::string& k) const { return to_double(str(k), k, line); }
    double num(const std::string& k, double def) const { return has(k) ? num(k) : def; }
    int integer(const std::string& k) const { return to_int(str(k), k, line); }
    int integer(const std::string& k, int def) const { return has(k) ? integer(k) : def; }
};

}  // namespace detail

/// Scales free-flow speed and capacity of every model link. Deterministic in the seed.
inline std::vector<LinkPerturbation> apply_mismatch(ctm::NetworkSpec& model,
                                                    const MismatchSpec& m) {
    std::vector<LinkPerturbation> out;
    if (!m.enabled) return out;
    require(m.min_rel >= 0.0 && m.max_rel >= m.min_rel && m.max_rel < 1.0,
            "mismatch range must satisfy 0 <= min <= max < 1");
    Rng rng(mix_seed(m.seed, 0x6d69736d));
    std::uniform_real_distribution<double> mag(m.min_rel, m.max_rel);
    std::bernoulli_distribution sign(0.5);
    for (auto& l : model.links) {
        LinkPerturbation p;
        p.link = l.id;
        p.speed_factor = 1.0 + (sign(rng) ? 1.0 : -1.0) * mag(rng);
        p.capacity_factor = 1.0 + (sign(rng) ? 1.0 : -1.0) * mag(rng);
        l.fd.free_flow_speed *= p.speed_factor;
        l.fd.capacity *= p.capacity_factor;
        out.push_back(p);
    }
    return out;
}

/// Line-oriented `keyword key=value ...` format; '#' starts a comment.
inline Scenario parse_scenario(std::istream& in, const std::string& name = "scenario") {
    Scenario sc;
    sc.name = name;
    std::map<std::string, std::vector<double>> demand_rows;
    std::vector<std::string> od_order;
    std::string raw;
    int line_no = 0;
    bool have_sim = false;
    while (std::getline(in, raw)) {
        ++line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::string keyword;
        if (!(ls >> keyword)) continue;
        detail::KeyValues kv;
        kv.line = line_no;
        std::vector<std::string> bare;
        std::string tok;
        while (ls >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) {
                bare.push_back(tok);
                continue;
            }
            kv.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
        }
        const std::string at = "line " + std::to_string(line_no) + ": ";

        if (keyword == "name") {
            require(!bare.empty(), at + "name needs a value");
            sc.name = bare.front();
        } else if (keyword == "sim") {
            sc.network.dt_hours = kv.num("dt_min") / 60.0;
            sc.network.steps_per_interval = kv.integer("steps_per_interval");
            sc.env.drain_intervals = kv.integer("drain", 0);
            require(sc.env.drain_intervals >= 0, at + "drain must be >= 0");
            have_sim = true;
        } else if (keyword == "node" || keyword == "nodes") {
            for (const auto& b : bare)
                for (const auto& v : detail::split(b, ','))
                    sc.network.nodes.push_back(detail::to_int(v, "node", line_no));
        } else if (keyword == "link") {
            ctm::LinkSpec l;
            l.id = kv.str("id");
            l.from = kv.integer("from");
            l.to = kv.integer("to");
            l.length_km = kv.num("length_km");
            l.lanes = kv.integer("lanes");
            l.fd.free_flow_speed = kv.num("vf");
            l.fd.capacity = kv.num("capacity");
            l.fd.jam_density = kv.num("jam");
            sc.network.links.push_back(l);
        } else if (keyword == "od") {
            sc.network.ods.push_back({kv.str("id"), kv.integer("origin"), kv.integer("dest")});
            od_order.push_back(kv.str("id"));
        } else if (keyword == "path") {
            sc.network.paths.push_back({kv.str("od"), detail::split(kv.str("links"), ',')});
        } else if (keyword == "paths") {
            sc.network.k_shortest[kv.str("od")] = kv.integer("k");
        } else if (keyword == "demand") {
            std::vector<double> row;
            for (const auto& v : detail::split(kv.str("values"), ','))
                row.push_back(detail::to_double(v, "values", line_no));
            auto& dst = demand_rows[kv.str("od")];
            dst.insert(dst.end(), row.begin(), row.end());
        } else if (keyword == "incident") {
            ctm::IncidentSpec inc;
            inc.link = kv.str("link");
            inc.start_interval = kv.integer("start");
            inc.end_interval = kv.integer("end");
            inc.speed_factor = kv.num("vf_factor", 1.0);
            sc.network.incidents.push_back(inc);
        } else if (keyword == "env") {
            sc.env.beta = kv.num("beta", sc.env.beta);
            sc.env.gamma = kv.num("gamma", sc.env.gamma);
            if (kv.has("reward_scale") && kv.str("reward_scale") != "auto")
                sc.env.reward_scale = kv.num("reward_scale");
            sc.env.baseline_lambda = kv.num("lambda", sc.env.baseline_lambda);
            if (kv.has("observe")) sc.env.observed_links = detail::split(kv.str("observe"), ',');
            if (kv.has("control")) sc.env.controlled_ods = detail::split(kv.str("control"), ',');
            if (kv.has("seed"))
                sc.env.seed = static_cast<std::uint64_t>(kv.integer("seed"));
        } else if (keyword == "train") {
            sc.train.episodes = kv.integer("episodes", sc.train.episodes);
            sc.train.warmup_steps = kv.integer("warmup", sc.train.warmup_steps);
            sc.train.alpha = kv.num("alpha", sc.train.alpha);
            if (kv.has("hidden")) {
                sc.train.hidden.clear();
                for (const auto& v : detail::split(kv.str("hidden"), ','))
                    sc.train.hidden.push_back(detail::to_int(v, "hidden", line_no));
            }
            require(sc.train.episodes >= 1, at + "train episodes must be >= 1");
            require(sc.train.warmup_steps >= 0, at + "train warmup must be >= 0");
            require(sc.train.alpha > 0.0, at + "train alpha must be positive");
            for (int h : sc.train.hidden) require(h >= 1, at + "hidden widths must be positive");
        } else if (keyword == "mismatch") {
            sc.mismatch.enabled = true;
            sc.mismatch.seed = static_cast<std::uint64_t>(kv.integer("seed"));
            sc.mismatch.min_rel = kv.num("min", 0.10);
            sc.mismatch.max_rel = kv.num("max", 0.20);
        } else if (keyword == "initial") {
            sc.initial.push_back({kv.str("od"), kv.integer("path"), kv.num("veh")});
        } else {
            throw Error(at + "unknown keyword '" + keyword + "'");
        }
    }
    require(have_sim, "scenario has no 'sim' line");
    require(!sc.network.ods.empty(), "scenario has no OD pairs");
    for (const auto& [od, row] : demand_rows) {
        bool known = false;
        for (const auto& o : od_order) known = known || o == od;
        require(known, "demand for unknown OD '" + od + "'");
    }
    for (const auto& od : od_order) {
        auto it = demand_rows.find(od);
        require(it != demand_rows.end(), "no demand row for OD '" + od + "'");
        sc.demand.mean.push_back(it->second);
    }
    sc.demand.beta = sc.env.beta;
    sc.demand.validate();
    require(sc.env.gamma > 0.0 && sc.env.gamma <= 1.0, "gamma must be in (0, 1]");
    require(sc.env.reward_scale >= 0.0, "reward scale must be positive (or auto)");
    require(sc.env.baseline_lambda >= 0.0 && sc.env.baseline_lambda <= 1.0,
            "baseline lambda must be in [0, 1]");

    sc.model = sc.network;
    sc.perturbations = apply_mismatch(sc.model, sc.mismatch);
    // Both networks must be independently valid.
    ctm::build_network(sc.network);
    ctm::build_network(sc.model);
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file '" + path + "'");
    std::string stem = path;
    auto slash = stem.find_last_of('/');
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    auto dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    return parse_scenario(in, stem);
}

inline Scenario parse_scenario_string(const std::string& text, const std::string& name = "inline") {
    std::istringstream in(text);
    return parse_scenario(in, name);
}

/// Scenario bundled with the source tree.
inline std::string scenario_path(const std::string& file) {
#ifdef TRANSRL_SCENARIO_DIR
    return std::string(TRANSRL_SCENARIO_DIR) + "/" + file;
#else
    return "scenarios/" + file;
#endif
}

}  // namespace transrl

#endif
