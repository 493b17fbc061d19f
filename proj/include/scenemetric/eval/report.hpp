#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <string>

#include <json.hpp>

#include "scenemetric/eval/clustering.hpp"
#include "scenemetric/eval/novelty.hpp"
#include "scenemetric/eval/stability.hpp"

namespace scenemetric {

inline constexpr std::array<GroupLevel, 3> kAllLevels = {GroupLevel::C, GroupLevel::G, GroupLevel::R};

struct EvalReport {
    std::array<double, 3> auc{}; ///< indexed like kAllLevels
    std::array<double, 3> acc{};
    StabilityReport stability;
};

/// Runs novelty detection and clustering at the requested levels, then
/// nearest-neighbour feature stability. Levels that were not requested or
/// have a single group are reported as NaN.
inline EvalReport evaluate(const Embeddings& z, const Dataset& d, std::size_t neighbors = 15,
                           const std::vector<GroupLevel>& levels = {kAllLevels.begin(), kAllLevels.end()})
{
    require(z.size() == d.size(), "embeddings and dataset differ in length");
    EvalReport r;
    for (std::size_t l = 0; l < kAllLevels.size(); ++l) {
        const auto& labels = d.groups.level(kAllLevels[l]);
        const bool wanted = std::find(levels.begin(), levels.end(), kAllLevels[l]) != levels.end();
        if (!wanted || group_count(labels) < 2) {
            r.auc[l] = r.acc[l] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        r.auc[l] = novelty_experiment(z, labels).mean_auc;
        r.acc[l] = clustering_experiment(z, labels);
    }
    r.stability = feature_stability(z, d, neighbors);
    return r;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r)
{
    nlohmann::ordered_json j;
    for (std::size_t l = 0; l < kAllLevels.size(); ++l)
        j["auc_" + std::string(group_level_name(kAllLevels[l]))] = r.auc[l];
    for (std::size_t l = 0; l < kAllLevels.size(); ++l)
        j["acc_" + std::string(group_level_name(kAllLevels[l]))] = r.acc[l];
    j["d_I"] = r.stability.d_image;
    j["d_T"] = r.stability.d_trajectory;
    j["d_v"] = r.stability.d_speed;
    j["d_a_lon"] = r.stability.d_accel_lon;
    j["d_a_lat"] = r.stability.d_accel_lat;
    j["d_psi"] = r.stability.d_heading;
    return j;
}

} // namespace scenemetric
