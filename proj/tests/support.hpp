#ifndef TRANSRL_TESTS_SUPPORT_HPP
#define TRANSRL_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "transrl/scenario.hpp"

namespace support {

/// |a - b| / max(|a|, |b|, floor)
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f at x[i].
template <class F>
double central_diff(double* x, long i, double h, F&& f) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f();
    x[i] = x0 - h;
    const double fm = f();
    x[i] = x0;
    return (fp - fm) / (2.0 * h);
}

/// One OD over a single link of `cells` CFL cells (v_f 60 km/h, 1-minute steps).
inline std::string single_link(int cells = 2, double demand = 10.0, int horizon = 4, int drain = 4,
                               int lanes = 1, double capacity = 1800.0) {
    std::string vals;
    for (int t = 0; t < horizon; ++t) vals += (t ? "," : "") + std::to_string(demand);
    return "sim dt_min=1 steps_per_interval=5 drain=" + std::to_string(drain) +
           "\nnodes 1,2\nlink id=L from=1 to=2 length_km=" + std::to_string(cells) +
           " lanes=" + std::to_string(lanes) + " vf=60 capacity=" + std::to_string(capacity) +
           " jam=150\nod id=A origin=1 dest=2\npath od=A links=L\ndemand od=A values=" + vals +
           "\nenv beta=0\n";
}

inline transrl::Scenario bundled(const std::string& file) {
    return transrl::load_scenario(transrl::scenario_path(file));
}

}  // namespace support

#endif
