#ifndef TRANSRL_CTM_SIMULATOR_HPP
#define TRANSRL_CTM_SIMULATOR_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "transrl/common.hpp"
#include "transrl/ctm/network.hpp"

namespace transrl::ctm {

/// Per-interval link measurements accumulated while the interval runs.
struct LinkIntervalStats {
    double exits = 0.0;      // veh crossing the last cell boundary
    double occ_sum = 0.0;    // sum over steps of end-of-step link occupancy
    double vkt = 0.0;        // veh-km travelled inside the link
    double vht = 0.0;        // veh-h spent inside the link (pre-step occupancy)
};

/// Interval-level history used for rewards and total travel time.
struct IntervalRecord {
    double finished = 0.0;            // F_t: vehicles leaving during the interval
    double avg_total_vehicles = 0.0;  // mean of end-of-step (cells + queues)
    double avg_cum_finished = 0.0;    // mean of end-of-step cumulative exits
    double avg_cum_injected = 0.0;    // mean of end-of-step cumulative arrivals
    std::vector<LinkIntervalStats> links;
};

struct SimState {
    int step = 0;
    std::vector<double> occupancy;  // [cell * P + path]
    std::vector<double> queue;      // origin point queue per path
    double initial_vehicles = 0.0;
    KahanSum injected;
    KahanSum finished;
    std::vector<double> path_injected;  // includes initial vehicles on that path
    std::vector<double> path_finished;
    std::vector<IntervalRecord> intervals;  // completed intervals
    IntervalRecord current;
    double current_finished = 0.0;
};

/// Optional per-step flow record (used by tests and travel-time curves).
struct StepFlows {
    std::vector<double> cell_inflow;      // total into each cell this step
    std::vector<double> cell_outflow;     // total out of each cell this step
    std::vector<double> cell_capacity;    // Q * lanes * dt in effect this step
    std::vector<double> link_entries;     // into first cell
    std::vector<double> link_exits;       // out of last cell
    std::vector<double> queue_departures; // per path, origin queue -> first cell
    std::vector<double> path_exits;       // per path, to the sink
};

inline SimState make_state(const Network& net) {
    SimState s;
    s.occupancy.assign(static_cast<size_t>(net.cell_count()) * net.path_count(), 0.0);
    s.queue.assign(net.path_count(), 0.0);
    s.path_injected.assign(net.path_count(), 0.0);
    s.path_finished.assign(net.path_count(), 0.0);
    s.current.links.assign(net.link_count(), {});
    return s;
}

/// Places initial vehicles in the first cell of a path (counted in N_0).
inline void place_initial(const Network& net, SimState& s, int path, double veh) {
    require(veh >= 0.0, "initial vehicles must be non-negative");
    const int c = net.links[net.paths[path].links.front()].first_cell;
    double total = 0.0;
    for (int p = 0; p < net.path_count(); ++p) total += s.occupancy[c * net.path_count() + p];
    require(total + veh <= net.links[net.paths[path].links.front()].cell_storage() + 1e-9,
            "initial vehicles exceed jam storage");
    s.occupancy[c * net.path_count() + path] += veh;
    s.initial_vehicles += veh;
    s.path_injected[path] += veh;
}

inline double cell_total(const Network& net, const SimState& s, int c) {
    double n = 0.0;
    const int P = net.path_count();
    for (int p = 0; p < P; ++p) n += s.occupancy[c * P + p];
    return n;
}

inline double link_occupancy(const Network& net, const SimState& s, int l) {
    double n = 0.0;
    const auto& link = net.links[l];
    for (int c = link.first_cell; c < link.first_cell + link.cell_count; ++c) n += cell_total(net, s, c);
    return n;
}

/// Vehicles in cells plus origin queues.
inline double total_vehicles(const Network& /*net*/, const SimState& s) {
    double n = 0.0;
    for (double v : s.occupancy) n += v;
    for (double q : s.queue) n += q;
    return n;
}

/// F_t for a completed interval; 0 for intervals not yet completed.
inline double finished_count(const SimState& s, int interval) {
    if (interval < 0 || interval >= static_cast<int>(s.intervals.size())) return 0.0;
    return s.intervals[interval].finished;
}

/// One CTM step. Arrivals (veh, per path) join the origin point queues first;
/// all transfers are computed from the pre-step state.
inline void advance_step(const Network& net, SimState& s, std::span<const double> arrivals,
                         StepFlows* flows = nullptr) {
    const int P = net.path_count();
    const int C = net.cell_count();
    const int L = net.link_count();
    require(static_cast<int>(arrivals.size()) == P, "arrivals must have one entry per path");
    for (int p = 0; p < P; ++p) {
        require(arrivals[p] >= 0.0 && std::isfinite(arrivals[p]), "arrivals must be non-negative");
        s.queue[p] += arrivals[p];
        s.injected.add(arrivals[p]);
        s.path_injected[p] += arrivals[p];
    }

    const double dt = net.dt_hours;
    std::vector<double> n(C), send(C), recv(C), cap(C);
    std::vector<double> vf_ratio(L), cap_link(L), recv_coef(L);
    for (int l = 0; l < L; ++l) {
        const auto& link = net.links[l];
        auto [lanes, factor] = net.effective(l, s.step);
        const double vf = link.fd.free_flow_speed * factor;
        cap_link[l] = link.fd.capacity * lanes * dt;
        vf_ratio[l] = std::min(1.0, vf * dt / link.cell_length_km);
        const double kc = link.fd.capacity / vf;
        const double w = kc < link.fd.jam_density ? link.fd.capacity / (link.fd.jam_density - kc)
                                                   : 0.0;
        recv_coef[l] = std::min(1.0, w * dt / link.cell_length_km);
    }
    for (int c = 0; c < C; ++c) {
        const int l = net.cell_link[c];
        n[c] = cell_total(net, s, c);
        cap[c] = cap_link[l];
        send[c] = std::min(n[c] * vf_ratio[l], cap[c]);
        const double space = net.links[l].cell_storage() - n[c];
        recv[c] = std::max(0.0, std::min(cap[c], recv_coef[l] * space));
    }

    std::vector<double> out(static_cast<size_t>(C) * P, 0.0), in(static_cast<size_t>(C) * P, 0.0);
    std::vector<double> qout(P, 0.0), exits(P, 0.0);
    std::vector<double> link_in(L, 0.0), link_out(L, 0.0);

    auto move_fraction = [&](int c, double ratio, auto&& sink_of_path) {
        if (ratio <= 0.0) return;
        ratio = std::min(ratio, 1.0);
        for (int p = 0; p < P; ++p) {
            const double f = s.occupancy[c * P + p] * ratio;
            if (f == 0.0) continue;
            out[c * P + p] += f;
            sink_of_path(p, f);
        }
    };

    // Within-link cell to cell.
    for (int l = 0; l < L; ++l) {
        const auto& link = net.links[l];
        for (int i = 0; i + 1 < link.cell_count; ++i) {
            const int c = link.first_cell + i;
            const int d = c + 1;
            if (n[c] <= 0.0) continue;
            const double y = std::min(send[c], recv[d]);
            move_fraction(c, y / n[c], [&](int p, double f) { in[d * P + p] += f; });
        }
    }

    // Node boundaries: merge proportional to sending, FIFO diverge by path tags.
    std::vector<double> demand(L, 0.0), accept(L, 1.0);
    for (const auto& nb : net.boundaries) {
        for (int j : nb.out_links) demand[j] = 0.0;
        for (int l : nb.in_links) {
            const int c = net.links[l].first_cell + net.links[l].cell_count - 1;
            if (n[c] <= 0.0) continue;
            for (int p = 0; p < P; ++p) {
                const double occ = s.occupancy[c * P + p];
                if (occ == 0.0) continue;
                const int j = net.next_link(p, l);
                if (j == -2) throw InvariantViolation("vehicle on a link outside its path");
                if (j >= 0) demand[j] += send[c] * occ / n[c];
            }
        }
        for (int p : nb.origin_paths) {
            if (s.queue[p] > 0.0) demand[net.paths[p].links.front()] += s.queue[p];
        }
        for (int j : nb.out_links) {
            const int d = net.links[j].first_cell;
            accept[j] = demand[j] <= recv[d] ? 1.0 : recv[d] / demand[j];
        }
        for (int l : nb.in_links) {
            const int c = net.links[l].first_cell + net.links[l].cell_count - 1;
            if (n[c] <= 0.0) continue;
            double theta = 1.0;
            for (int p = 0; p < P; ++p) {
                if (s.occupancy[c * P + p] == 0.0) continue;
                const int j = net.next_link(p, l);
                if (j >= 0) theta = std::min(theta, accept[j]);
            }
            move_fraction(c, send[c] * theta / n[c], [&](int p, double f) {
                const int j = net.next_link(p, l);
                link_out[l] += f;
                if (j >= 0) {
                    in[net.links[j].first_cell * P + p] += f;
                    link_in[j] += f;
                } else {
                    exits[p] += f;
                }
            });
        }
        for (int p : nb.origin_paths) {
            if (s.queue[p] <= 0.0) continue;
            const int j = net.paths[p].links.front();
            const double f = accept[j] >= 1.0 ? s.queue[p] : s.queue[p] * accept[j];
            qout[p] = f;
            in[net.links[j].first_cell * P + p] += f;
            link_in[j] += f;
        }
    }

    // Per-interval link statistics use the pre-step occupancy for time spent.
    for (int c = 0; c < C; ++c) {
        const int l = net.cell_link[c];
        double oc = 0.0;
        for (int p = 0; p < P; ++p) oc += out[c * P + p];
        s.current.links[l].vht += n[c] * dt;
        s.current.links[l].vkt += oc * net.links[l].cell_length_km;
    }

    for (size_t i = 0; i < s.occupancy.size(); ++i) {
        double v = s.occupancy[i] - out[i];
        if (v < 0.0) v = 0.0;  // only reachable through rounding of a full-cell move
        s.occupancy[i] = v + in[i];
    }
    double exited = 0.0;
    for (int p = 0; p < P; ++p) {
        s.queue[p] -= qout[p];
        if (s.queue[p] < 0.0) s.queue[p] = 0.0;
        s.path_finished[p] += exits[p];
        s.finished.add(exits[p]);
        exited += exits[p];
    }
    for (int c = 0; c < C; ++c) {
        const double tot = cell_total(net, s, c);
        if (tot > net.links[net.cell_link[c]].cell_storage() + 1e-9)
            throw InvariantViolation("cell occupancy exceeds jam storage");
    }

    if (flows) {
        flows->cell_inflow.assign(C, 0.0);
        flows->cell_outflow.assign(C, 0.0);
        flows->cell_capacity = cap;
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < P; ++p) {
                flows->cell_inflow[c] += in[c * P + p];
                flows->cell_outflow[c] += out[c * P + p];
            }
        flows->link_entries = link_in;
        flows->link_exits = link_out;
        flows->queue_departures = qout;
        flows->path_exits = exits;
    }

    // Interval bookkeeping.
    for (int l = 0; l < L; ++l) {
        s.current.links[l].exits += link_out[l];
        s.current.links[l].occ_sum += link_occupancy(net, s, l);
    }
    s.current_finished += exited;
    const double spi = net.steps_per_interval;
    s.current.avg_total_vehicles += total_vehicles(net, s) / spi;
    s.current.avg_cum_finished += s.finished.value() / spi;
    s.current.avg_cum_injected += (s.injected.value() + s.initial_vehicles) / spi;
    s.step += 1;
    if (s.step % net.steps_per_interval == 0) {
        s.current.finished = s.current_finished;
        s.intervals.push_back(std::move(s.current));
        s.current = IntervalRecord{};
        s.current.links.assign(L, {});
        s.current_finished = 0.0;
    }
}

/// Functional form: returns the successor state.
inline SimState advance(const Network& net, SimState s, std::span<const double> arrivals) {
    advance_step(net, s, arrivals);
    return s;
}

/// Conservation residual: injected + N_0 - (in network + queued + finished).
inline double conservation_residual(const Network& net, const SimState& s) {
    return s.injected.value() + s.initial_vehicles - total_vehicles(net, s) - s.finished.value();
}

/// Link flow (veh/h) and space-mean speed (km/h) over a completed interval.
/// Speed is veh-km over veh-h inside the link, free-flow speed when empty.
struct LinkMeasurement {
    double flow = 0.0;
    double speed = 0.0;
};

inline LinkMeasurement measure_link(const Network& net, const SimState& s, int link, int interval) {
    require(interval >= 0 && interval < static_cast<int>(s.intervals.size()),
            "interval not yet elapsed");
    const auto& st = s.intervals[interval].links[link];
    LinkMeasurement m;
    m.flow = st.exits / net.interval_hours();
    const double vf = net.links[link].fd.free_flow_speed;
    m.speed = st.vht > 1e-12 ? std::min(vf, st.vkt / st.vht) : vf;
    return m;
}

/// Runs one interval with per-path interval totals spread evenly across its steps.
inline void run_interval(const Network& net, SimState& s, std::span<const double> path_veh,
                         std::vector<StepFlows>* record = nullptr) {
    const int m = net.steps_per_interval;
    std::vector<double> per_step(path_veh.begin(), path_veh.end());
    for (double& v : per_step) v /= m;
    for (int k = 0; k < m; ++k) {
        if (record) {
            record->emplace_back();
            advance_step(net, s, per_step, &record->back());
        } else {
            advance_step(net, s, per_step);
        }
    }
}

/// Appends the non-zero occupancies after the current step: step,cell_id,path_id,occupancy.
inline void write_trajectory_rows(std::ostream& os, const Network& net, const SimState& s) {
    const int P = net.path_count();
    for (int c = 0; c < net.cell_count(); ++c)
        for (int p = 0; p < P; ++p) {
            const double v = s.occupancy[c * P + p];
            if (v != 0.0) os << s.step << ',' << c << ',' << p << ',' << v << '\n';
        }
}

}  // namespace transrl::ctm

#endif
