#include "offrl/data.hpp"

#include "offrl/dp.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace offrl;
using namespace offrl::testing;

TEST_CASE("deterministic MDP and policy give identical trajectories") {
    TabularMDP m = loop_mdp(0.9);
    StationaryPolicy a1 = StationaryPolicy::deterministic(1, 2, {0});
    TrajectoryDataset td = sample_trajectories(m, a1, 5, 4, 99);
    for (const Trajectory& t : td.trajectories) {
        REQUIRE(t.length() == 4);
        for (int k = 0; k < 4; ++k) {
            CHECK(t.steps[k].action == 0);
            CHECK(t.steps[k].reward == 1.0);
        }
    }
}

TEST_CASE("empirical action frequency matches the behavior policy") {
    TabularMDP m = loop_mdp(0.9);
    StationaryPolicy uniform = StationaryPolicy::uniform(1, 2);
    const int n = 100000, H = 5;
    TrajectoryDataset td = sample_trajectories(m, uniform, n, H, 7);
    for (int t = 0; t < H; ++t) {
        real freq = 0.0;
        for (const Trajectory& traj : td.trajectories) freq += traj.steps[t].action == 0 ? 1 : 0;
        freq /= n;
        CHECK(std::abs(freq - 0.5) <= 3.0 * std::sqrt(0.25 / n));
    }
}

TEST_CASE("same seed reproduces the dataset exactly") {
    TabularMDP m = random_mdp(3, 2, 0.9, 5);
    StationaryPolicy pi = random_policy(3, 2, 6);
    TrajectoryDataset a = sample_trajectories(m, pi, 50, 8, 1234);
    TrajectoryDataset b = sample_trajectories(m, pi, 50, 8, 1234);
    REQUIRE(a.trajectories.size() == b.trajectories.size());
    for (size_t i = 0; i < a.trajectories.size(); ++i) {
        REQUIRE(a.trajectories[i].length() == b.trajectories[i].length());
        for (int k = 0; k < a.trajectories[i].length(); ++k) {
            CHECK(a.trajectories[i].steps[k].state == b.trajectories[i].steps[k].state);
            CHECK(a.trajectories[i].steps[k].action == b.trajectories[i].steps[k].action);
            CHECK(a.trajectories[i].steps[k].reward == b.trajectories[i].steps[k].reward);
            CHECK(a.trajectories[i].steps[k].next_state == b.trajectories[i].steps[k].next_state);
        }
    }
}

TEST_CASE("trajectories stop early at the absorbing cutoff state") {
    // loop with horizon 3: states 0,1,2 then absorbing 3
    TabularMDP m;
    m.n_states = 4;
    m.n_actions = 2;
    m.gamma = 0.9;
    m.r_max = 1.0;
    m.transition = Mat::Zero(8, 4);
    for (int t = 0; t < 3; ++t)
        for (int a = 0; a < 2; ++a) m.transition(m.sa(t, a), t + 1 == 3 ? 3 : t + 1) = 1.0;
    for (int a = 0; a < 2; ++a) m.transition(m.sa(3, a), 3) = 1.0;
    m.reward = Mat::Zero(4, 2);
    m.reward(0, 0) = m.reward(1, 0) = m.reward(2, 0) = 1.0;
    m.init_dist = Vec::Zero(4);
    m.init_dist[0] = 1.0;
    m.validate();

    TrajectoryDataset td = sample_trajectories(m, StationaryPolicy::uniform(4, 2), 20, 10, 3);
    for (const Trajectory& t : td.trajectories) CHECK(t.length() == 3);
}

TEST_CASE("point-mass tuple distribution repeats one pair") {
    TabularMDP m = random_mdp(3, 2, 0.9, 15);
    Mat d = Mat::Zero(3, 2);
    d(1, 1) = 1.0;
    TupleDataset ds = sample_tuples(m, OccupancyMeasure{d, std::nullopt}, 100, 4);
    for (const Step& st : ds.tuples) {
        CHECK(st.state == 1);
        CHECK(st.action == 1);
    }
}

TEST_CASE("tuple frequencies concentrate around d_D") {
    TabularMDP m = random_mdp(3, 2, 0.9, 25);
    OccupancyMeasure d = random_occupancy(3, 2, 26);
    const int n = 100000;
    TupleDataset ds = sample_tuples(m, d, n, 27);
    Mat freq = Mat::Zero(3, 2);
    for (const Step& st : ds.tuples) freq(st.state, st.action) += 1.0;
    freq /= n;
    real tv = 0.5 * (freq - d.dist).cwiseAbs().sum();
    CHECK(tv <= 2.0 * std::sqrt(6.0 / n));
}

TEST_CASE("deterministic transitions give P-consistent next states") {
    TabularMDP m = loop_mdp(0.5);
    TupleDataset ds = sample_tuples(m, OccupancyMeasure{Mat::Constant(1, 2, 0.5), std::nullopt},
                                    200, 8);
    for (const Step& st : ds.tuples) CHECK(st.next_state == 0);
}

TEST_CASE("tuples_from_trajectories preserves order and count") {
    TabularMDP m = random_mdp(3, 2, 0.9, 35);
    StationaryPolicy pi = random_policy(3, 2, 36);
    TrajectoryDataset td = sample_trajectories(m, pi, 7, 5, 37);
    TupleDataset ts = tuples_from_trajectories(td);
    CHECK(ts.size() == 35);
    CHECK_FALSE(ts.data_dist.has_value());
    size_t k = 0;
    for (const Trajectory& traj : td.trajectories)
        for (const Step& st : traj.steps) {
            CHECK(ts.tuples[k].state == st.state);
            CHECK(ts.tuples[k].action == st.action);
            ++k;
        }
}

TEST_CASE("dataset io round trips") {
    TabularMDP m = random_mdp(3, 2, 0.9, 45);
    StationaryPolicy pi = random_policy(3, 2, 46);
    auto dir = std::filesystem::temp_directory_path();

    TupleDataset ts = sample_tuples(m, random_occupancy(3, 2, 47), 50, 48);
    std::string tpath = (dir / "offrl_tuples.txt").string();
    save_tuples(ts, tpath);
    TupleDataset ts2 = load_tuples(tpath);
    REQUIRE(ts2.size() == ts.size());
    CHECK(ts2.seed == ts.seed);
    for (int i = 0; i < ts.size(); ++i) {
        CHECK(ts2.tuples[i].state == ts.tuples[i].state);
        CHECK(ts2.tuples[i].action == ts.tuples[i].action);
        CHECK(ts2.tuples[i].reward == ts.tuples[i].reward);
        CHECK(ts2.tuples[i].next_state == ts.tuples[i].next_state);
    }

    TrajectoryDataset td = sample_trajectories(m, pi, 6, 4, 49);
    std::string path = (dir / "offrl_trajs.txt").string();
    save_trajectories(td, path);
    TrajectoryDataset td2 = load_trajectories(path);
    REQUIRE(td2.trajectories.size() == td.trajectories.size());
    CHECK(td2.horizon == td.horizon);
    CHECK((td2.behavior.probs - td.behavior.probs).cwiseAbs().maxCoeff() == 0.0);
    for (size_t i = 0; i < td.trajectories.size(); ++i) {
        REQUIRE(td2.trajectories[i].length() == td.trajectories[i].length());
        for (int k = 0; k < td.trajectories[i].length(); ++k)
            CHECK(td2.trajectories[i].steps[k].reward == td.trajectories[i].steps[k].reward);
    }
    std::filesystem::remove(tpath);
    std::filesystem::remove(path);
}

TEST_CASE("empty dataset saves a header-only file") {
    TupleDataset empty;
    empty.seed = 5;
    auto path = (std::filesystem::temp_directory_path() / "offrl_empty.txt").string();
    save_tuples(empty, path);
    TupleDataset back = load_tuples(path);
    CHECK(back.size() == 0);
    CHECK(back.seed == 5);
    std::filesystem::remove(path);
}

TEST_CASE("corrupted line is reported with its line number") {
    auto path = (std::filesystem::temp_directory_path() / "offrl_bad.txt").string();
    {
        std::ofstream out(path);
        out << "# offrl tuples seed=1 count=2\n";
        out << "0 1 0.5 2\n";
        out << "0 1 0.5\n"; // missing field on line 3
    }
    try {
        load_tuples(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& ex) {
        CHECK(std::string(ex.what()).find(":3:") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("sampled mean return converges to the oracle J") {
    TabularMDP m = random_mdp(3, 2, 0.9, 55);
    StationaryPolicy pi = random_policy(3, 2, 56);
    const int n = 100000, H = 200;
    TrajectoryDataset td = sample_trajectories(m, pi, n, H, 57);
    real mean = 0.0;
    for (const Trajectory& t : td.trajectories) mean += t.discounted_return(m.gamma);
    mean /= n;
    real j = policy_return(m, pi);
    CHECK(std::abs(mean - j) <= 3.0 * m.v_max() / std::sqrt(static_cast<real>(n)));
}

TEST_CASE("stochastic rewards honor the declared distribution mean") {
    TabularMDP m = loop_mdp(0.0);
    m.reward(0, 0) = 0.7;
    m.reward_noise.resize(2);
    m.reward_noise[0] = RewardNoise{{0.0, 1.0}, {0.3, 0.7}};
    m.validate();
    Mat d = Mat::Zero(1, 2);
    d(0, 0) = 1.0;
    TupleDataset ds = sample_tuples(m, OccupancyMeasure{d, std::nullopt}, 50000, 58);
    real mean = 0.0;
    for (const Step& st : ds.tuples) {
        CHECK((st.reward == 0.0 || st.reward == 1.0));
        mean += st.reward;
    }
    mean /= ds.size();
    CHECK(std::abs(mean - 0.7) < 3.0 * std::sqrt(0.21 / 50000.0));
}
