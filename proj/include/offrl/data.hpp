#pragma once

#include "offrl/mdp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace offrl {

struct Step {
    int state = 0;
    int action = 0;
    real reward = 0.0;
    int next_state = 0;
};

struct Trajectory {
    std::vector<Step> steps;

    int length() const { return static_cast<int>(steps.size()); }
    real discounted_return(real gamma) const {
        real g = 0.0, w = 1.0;
        for (const Step& st : steps) {
            g += w * st.reward;
            w *= gamma;
        }
        return g;
    }
};

struct TrajectoryDataset {
    std::vector<Trajectory> trajectories;
    StationaryPolicy behavior;
    int horizon = 0;
    uint64_t seed = 0;
};

struct TupleDataset {
    std::vector<Step> tuples;
    std::optional<OccupancyMeasure> data_dist; // true d^D when generated synthetically
    uint64_t seed = 0;

    int size() const { return static_cast<int>(tuples.size()); }
};

/// n trajectories of length <= H under the behavior policy. Each trajectory
/// has its own random stream derived from (seed, index), so generation is
/// schedule independent. Sampling stops early in absorbing zero-reward states.
TrajectoryDataset sample_trajectories(const TabularMDP& mdp, const StationaryPolicy& behavior,
                                      int n, int H, uint64_t seed);

/// n i.i.d. tuples (s,a) ~ d_D, r from the MDP reward (noise honored),
/// s' ~ P(.|s,a). The sampling distribution is recorded as data_dist.
TupleDataset sample_tuples(const TabularMDP& mdp, const OccupancyMeasure& d_D, int n,
                           uint64_t seed);

/// All per-step transition tuples of the dataset, in trajectory-then-step
/// order. data_dist is left unset: these tuples are not i.i.d.
TupleDataset tuples_from_trajectories(const TrajectoryDataset& td);

void save_tuples(const TupleDataset& ds, const std::string& path);
TupleDataset load_tuples(const std::string& path);
void save_trajectories(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset load_trajectories(const std::string& path);

} // namespace offrl
