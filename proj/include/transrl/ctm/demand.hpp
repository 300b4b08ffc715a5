#ifndef TRANSRL_CTM_DEMAND_HPP
#define TRANSRL_CTM_DEMAND_HPP

#include <algorithm>
#include <random>
#include <vector>

#include "transrl/common.hpp"

namespace transrl::ctm {

/// Time-indexed mean OD demand (veh per interval) with relative uncertainty
/// beta: q ~ max(0, Normal(mu, beta * mu)).
struct DemandProfile {
    std::vector<std::vector<double>> mean;  // [od][interval]
    double beta = 0.0;

    int horizon() const { return mean.empty() ? 0 : static_cast<int>(mean.front().size()); }
    int od_count() const { return static_cast<int>(mean.size()); }

    double mean_at(int od, int t) const {
        if (t < 0 || t >= static_cast<int>(mean[od].size())) return 0.0;
        return mean[od][t];
    }

    double peak_total() const {
        double peak = 0.0;
        for (int t = 0; t < horizon(); ++t) {
            double s = 0.0;
            for (int o = 0; o < od_count(); ++o) s += mean[o][t];
            peak = std::max(peak, s);
        }
        return peak;
    }

    void validate() const {
        require(beta >= 0.0, "demand uncertainty beta must be non-negative");
        for (const auto& row : mean) {
            require(row.size() == mean.front().size(), "demand rows must share one horizon");
            for (double m : row) require(m >= 0.0, "mean demand must be non-negative");
        }
    }
};

/// Draws the demand of every OD pair for interval t. One normal draw per OD,
/// in OD order, so streams stay aligned across policies.
inline std::vector<double> sample_demand(const DemandProfile& profile, int t, Rng& rng) {
    require(t >= 0 && t < profile.horizon(), "demand interval outside horizon");
    std::vector<double> q(profile.od_count());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int o = 0; o < profile.od_count(); ++o) {
        const double mu = profile.mean[o][t];
        const double z = normal(rng);
        q[o] = std::max(0.0, mu + profile.beta * mu * z);
    }
    return q;
}

/// Full-horizon realization: [interval][od].
inline std::vector<std::vector<double>> sample_demand_horizon(const DemandProfile& profile,
                                                              Rng& rng) {
    std::vector<std::vector<double>> out;
    out.reserve(profile.horizon());
    for (int t = 0; t < profile.horizon(); ++t) out.push_back(sample_demand(profile, t, rng));
    return out;
}

}  // namespace transrl::ctm

#endif
