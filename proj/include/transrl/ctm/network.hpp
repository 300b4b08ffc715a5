#ifndef TRANSRL_CTM_NETWORK_HPP
#define TRANSRL_CTM_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "transrl/common.hpp"

namespace transrl::ctm {

/// Triangular flow-density relation, per lane.
struct FundamentalDiagram {
    double free_flow_speed = 0.0;  // km/h
    double capacity = 0.0;         // veh/h per lane
    double jam_density = 0.0;      // veh/km per lane

    double critical_density() const { return capacity / free_flow_speed; }
    double wave_speed() const { return capacity / (jam_density - critical_density()); }

    void validate(const std::string& where) const {
        require(free_flow_speed > 0.0 && std::isfinite(free_flow_speed),
                where + ": free-flow speed must be positive");
        require(capacity > 0.0 && std::isfinite(capacity), where + ": capacity must be positive");
        require(jam_density > 0.0 && std::isfinite(jam_density),
                where + ": jam density must be positive");
        require(critical_density() < jam_density,
                where + ": critical density must be below jam density");
        require(wave_speed() <= free_flow_speed,
                where + ": wave speed exceeds free-flow speed (CFL)");
    }
};

struct LinkSpec {
    std::string id;
    int from = 0;
    int to = 0;
    double length_km = 0.0;
    int lanes = 1;
    FundamentalDiagram fd;
};

struct OdSpec {
    std::string id;
    int origin = 0;
    int dest = 0;
};

/// Explicit path (link ids in order) for an OD pair.
struct PathSpec {
    std::string od;
    std::vector<std::string> links;
};

/// One lane blocked and free-flow speed scaled on `link` for intervals [start, end).
struct IncidentSpec {
    std::string link;
    int start_interval = 0;
    int end_interval = 0;
    double speed_factor = 1.0;
};

struct NetworkSpec {
    double dt_hours = 1.0 / 60.0;
    int steps_per_interval = 5;
    std::vector<int> nodes;
    std::vector<LinkSpec> links;
    std::vector<OdSpec> ods;
    std::vector<PathSpec> paths;
    std::map<std::string, int> k_shortest;  // od id -> k, used when no explicit paths
    std::vector<IncidentSpec> incidents;
};

struct Link {
    std::string id;
    int from = 0;
    int to = 0;
    int lanes = 1;
    FundamentalDiagram fd;
    double length_km = 0.0;  // modeled length: cell_count * v_f * dt
    int first_cell = 0;
    int cell_count = 0;
    double cell_length_km = 0.0;

    double capacity_per_step(double dt) const { return fd.capacity * lanes * dt; }
    double cell_storage() const { return fd.jam_density * lanes * cell_length_km; }
    double free_flow_hours() const { return length_km / fd.free_flow_speed; }
};

struct Path {
    int od = 0;
    std::vector<int> links;
    int free_flow_steps = 0;
};

struct OdPair {
    std::string id;
    int origin = 0;
    int dest = 0;
    std::vector<int> paths;  // global path indices, in path-set order
};

struct Incident {
    int link = 0;
    int start_step = 0;
    int end_step = 0;
    double speed_factor = 1.0;
};

/// Node-level bookkeeping for the boundary flow rule.
struct NodeBoundary {
    int node = 0;
    std::vector<int> in_links;
    std::vector<int> out_links;
    std::vector<int> origin_paths;  // paths whose first link leaves this node
};

/// Validated, CFL-discretized network.
class Network {
public:
    double dt_hours = 1.0 / 60.0;
    int steps_per_interval = 5;
    std::vector<int> nodes;
    std::vector<Link> links;
    std::vector<OdPair> ods;
    std::vector<Path> paths;
    std::vector<Incident> incidents;
    std::vector<NodeBoundary> boundaries;
    std::vector<int> cell_link;  // cell index -> link index

    int cell_count() const { return static_cast<int>(cell_link.size()); }
    int path_count() const { return static_cast<int>(paths.size()); }
    int link_count() const { return static_cast<int>(links.size()); }
    double interval_hours() const { return dt_hours * steps_per_interval; }

    /// Next link of `path` after `link`; -1 when the path ends there, -2 when the
    /// path does not use the link.
    int next_link(int path, int link) const { return next_[path * link_count() + link]; }

    int link_index(const std::string& id) const {
        for (int i = 0; i < link_count(); ++i)
            if (links[i].id == id) return i;
        throw Error("unknown link '" + id + "'");
    }
    int od_index(const std::string& id) const {
        for (int i = 0; i < static_cast<int>(ods.size()); ++i)
            if (ods[i].id == id) return i;
        throw Error("unknown OD pair '" + id + "'");
    }

    double path_free_flow_hours(int p) const { return paths[p].free_flow_steps * dt_hours; }

    /// Effective (lanes, speed factor) of a link at a simulation step.
    std::pair<int, double> effective(int link, int step) const {
        int lanes = links[link].lanes;
        double factor = 1.0;
        for (const auto& inc : incidents) {
            if (inc.link == link && step >= inc.start_step && step < inc.end_step) {
                lanes -= 1;
                factor *= inc.speed_factor;
            }
        }
        return {std::max(lanes, 0), factor};
    }

    void finalize_tables() {
        const int L = link_count();
        next_.assign(static_cast<size_t>(path_count()) * L, -2);
        for (int p = 0; p < path_count(); ++p) {
            const auto& ls = paths[p].links;
            for (size_t i = 0; i < ls.size(); ++i)
                next_[p * L + ls[i]] = (i + 1 < ls.size()) ? ls[i + 1] : -1;
        }
        boundaries.clear();
        for (int v : nodes) {
            NodeBoundary nb;
            nb.node = v;
            for (int l = 0; l < L; ++l) {
                if (links[l].to == v) nb.in_links.push_back(l);
                if (links[l].from == v) nb.out_links.push_back(l);
            }
            for (int p = 0; p < path_count(); ++p)
                if (links[paths[p].links.front()].from == v) nb.origin_paths.push_back(p);
            boundaries.push_back(std::move(nb));
        }
    }

private:
    std::vector<int> next_;
};

namespace detail {

inline void enumerate_simple_paths(const std::vector<LinkSpec>& links, int at, int dest,
                                   std::vector<int>& stack, std::vector<int>& visited_nodes,
                                   std::vector<std::vector<int>>& out, size_t cap) {
    if (out.size() >= cap) return;
    if (at == dest && !stack.empty()) {
        out.push_back(stack);
        return;
    }
    for (int l = 0; l < static_cast<int>(links.size()); ++l) {
        if (links[l].from != at) continue;
        int nxt = links[l].to;
        if (std::find(visited_nodes.begin(), visited_nodes.end(), nxt) != visited_nodes.end())
            continue;
        stack.push_back(l);
        visited_nodes.push_back(nxt);
        enumerate_simple_paths(links, nxt, dest, stack, visited_nodes, out, cap);
        visited_nodes.pop_back();
        stack.pop_back();
    }
}

}  // namespace detail

/// All acyclic paths between two nodes, sorted by free-flow time (ties by
/// enumeration order). Capped at `cap` enumerated paths.
inline std::vector<std::vector<int>> enumerate_paths(const std::vector<LinkSpec>& links, int origin,
                                                     int dest, size_t cap = 10000) {
    std::vector<std::vector<int>> out;
    std::vector<int> stack;
    std::vector<int> visited{origin};
    detail::enumerate_simple_paths(links, origin, dest, stack, visited, out, cap);
    auto fft = [&](const std::vector<int>& p) {
        double t = 0.0;
        for (int l : p) t += links[l].length_km / links[l].fd.free_flow_speed;
        return t;
    };
    std::stable_sort(out.begin(), out.end(),
                     [&](const auto& a, const auto& b) { return fft(a) < fft(b) - 1e-12; });
    return out;
}

/// Validates a topology spec and discretizes every link into cells of length
/// v_f * dt. A link shorter than half a cell is rejected.
inline Network build_network(const NetworkSpec& spec) {
    require(spec.dt_hours > 0.0, "simulation step must be positive");
    require(spec.steps_per_interval >= 1, "steps per interval must be >= 1");
    Network net;
    net.dt_hours = spec.dt_hours;
    net.steps_per_interval = spec.steps_per_interval;
    net.nodes = spec.nodes;
    auto has_node = [&](int v) {
        return std::find(spec.nodes.begin(), spec.nodes.end(), v) != spec.nodes.end();
    };

    for (size_t i = 0; i < spec.links.size(); ++i) {
        const auto& ls = spec.links[i];
        const std::string where = "link " + ls.id;
        for (size_t j = 0; j < i; ++j)
            require(spec.links[j].id != ls.id, "duplicate link id " + ls.id);
        require(has_node(ls.from) && has_node(ls.to), where + ": unknown endpoint node");
        require(ls.from != ls.to, where + ": self loop");
        require(ls.lanes >= 1, where + ": lanes must be >= 1");
        require(ls.length_km > 0.0, where + ": length must be positive");
        ls.fd.validate(where);
        const double cell_len = ls.fd.free_flow_speed * spec.dt_hours;
        require(ls.length_km >= 0.5 * cell_len,
                where + ": length below minimum cell length (v_f * dt)");
        Link link;
        link.id = ls.id;
        link.from = ls.from;
        link.to = ls.to;
        link.lanes = ls.lanes;
        link.fd = ls.fd;
        link.cell_count = std::max(1, static_cast<int>(std::lround(ls.length_km / cell_len)));
        link.cell_length_km = cell_len;
        link.length_km = link.cell_count * cell_len;
        link.first_cell = net.cell_count();
        for (int c = 0; c < link.cell_count; ++c) net.cell_link.push_back(static_cast<int>(i));
        net.links.push_back(std::move(link));
    }

    for (const auto& od : spec.ods) {
        require(has_node(od.origin) && has_node(od.dest), "OD " + od.id + ": unknown node");
        require(od.origin != od.dest, "OD " + od.id + ": origin equals destination");
        OdPair pair{od.id, od.origin, od.dest, {}};
        net.ods.push_back(pair);
    }

    for (int o = 0; o < static_cast<int>(net.ods.size()); ++o) {
        auto& od = net.ods[o];
        std::vector<std::vector<int>> link_lists;
        for (const auto& ps : spec.paths) {
            if (ps.od != od.id) continue;
            std::vector<int> ids;
            for (const auto& lid : ps.links) ids.push_back(net.link_index(lid));
            link_lists.push_back(std::move(ids));
        }
        if (link_lists.empty()) {
            auto it = spec.k_shortest.find(od.id);
            int k = it == spec.k_shortest.end() ? 1 : it->second;
            require(k >= 1, "OD " + od.id + ": k must be >= 1");
            auto all = enumerate_paths(spec.links, od.origin, od.dest);
            require(!all.empty(), "OD " + od.id + ": origin and destination are disconnected");
            if (static_cast<int>(all.size()) > k) all.resize(k);
            link_lists = std::move(all);
        }
        for (const auto& ls : link_lists) {
            require(!ls.empty(), "OD " + od.id + ": empty path");
            require(net.links[ls.front()].from == od.origin,
                    "OD " + od.id + ": path does not start at origin");
            require(net.links[ls.back()].to == od.dest,
                    "OD " + od.id + ": path does not end at destination");
            std::vector<int> seen{od.origin};
            for (size_t i = 0; i < ls.size(); ++i) {
                if (i > 0)
                    require(net.links[ls[i - 1]].to == net.links[ls[i]].from,
                            "OD " + od.id + ": path is not connected");
                int v = net.links[ls[i]].to;
                require(std::find(seen.begin(), seen.end(), v) == seen.end(),
                        "OD " + od.id + ": path contains a cycle");
                seen.push_back(v);
            }
            Path p;
            p.od = o;
            p.links = ls;
            for (int l : ls) p.free_flow_steps += net.links[l].cell_count;
            od.paths.push_back(net.path_count());
            net.paths.push_back(std::move(p));
        }
        require(!od.paths.empty(), "OD " + od.id + ": empty path set");
    }

    for (const auto& inc : spec.incidents) {
        Incident in;
        in.link = net.link_index(inc.link);
        require(net.links[in.link].lanes >= 2, "incident link " + inc.link + " needs >= 2 lanes");
        require(inc.speed_factor > 0.0 && inc.speed_factor <= 1.0,
                "incident speed factor must be in (0, 1]");
        require(inc.end_interval > inc.start_interval && inc.start_interval >= 0,
                "incident window must be non-empty");
        in.start_step = inc.start_interval * spec.steps_per_interval;
        in.end_step = inc.end_interval * spec.steps_per_interval;
        in.speed_factor = inc.speed_factor;
        net.incidents.push_back(in);
    }

    net.finalize_tables();
    return net;
}

}  // namespace transrl::ctm

#endif
