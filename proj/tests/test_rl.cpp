#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "pvolab/error.hpp"
#include "pvolab/harness.hpp"
#include "pvolab/rl.hpp"
#include "pvolab/rng.hpp"

using namespace pvolab;
namespace fs = std::filesystem;

namespace {

/// A QFunction loaded with the oracle's exact action-values.
QFunction q_from_oracle(const Maze& maze, const OracleSolution& sol) {
    TabularFn table(4);
    for (int r = 0; r < maze.height(); ++r)
        for (int c = 0; c < maze.width(); ++c) {
            if (!maze.is_empty(r, c) || CellPos{r, c} == maze.goal()) continue;
            std::vector<double> q(4);
            for (int a = 0; a < 4; ++a) q[a] = sol.q[a].at(r, c);
            table.mean_update(encode_observation(maze.with_agent({r, c})), q);
        }
    QFunction q;
    q.fn = std::move(table);
    return q;
}

bool greedy_in_oracle_set(const QFunction& q, const Maze& maze,
                          const OracleSolution& sol) {
    const auto occupiable = oracles::occupiable_cells(maze);
    for (int r = 0; r < maze.height(); ++r)
        for (int c = 0; c < maze.width(); ++c) {
            if (!maze.is_empty(r, c) || CellPos{r, c} == maze.goal()) continue;
            if (!occupiable[r * maze.width() + c]) continue;
            const auto greedy = static_cast<Action>(
                q.greedy_action(encode_observation(maze.with_agent({r, c}))));
            const auto optimal = sol.optimal_actions({r, c});
            if (std::find(optimal.begin(), optimal.end(), greedy) == optimal.end())
                return false;
        }
    return true;
}

} // namespace

TEST_CASE("value iteration satisfies the closed form and the bellman identity") {
    for (std::uint32_t seed = 1; seed <= 10; ++seed) {
        const Maze maze = Maze::generate(seed, 7, 7, MazeStyle::Obstacles);
        const OracleSolution sol = value_iteration_oracle(maze, 0.9);
        const auto dist = oracles::bfs_from_goal(maze);

        for (int r = 0; r < maze.height(); ++r)
            for (int c = 0; c < maze.width(); ++c) {
                if (!maze.is_empty(r, c)) continue;
                const int d = dist[r * maze.width() + c];
                if (CellPos{r, c} == maze.goal()) {
                    CHECK(sol.v.at(r, c) == 0.0); // terminal by convention
                    continue;
                }
                if (d < 0) {
                    CHECK(sol.v.at(r, c) == 0.0); // unreachable pocket
                    continue;
                }
                // deterministic shortest path: V* = gamma^(d-1)
                CHECK(sol.v.at(r, c) ==
                      doctest::Approx(oracles::gamma_power(0.9, d - 1)).epsilon(1e-10));
                CHECK(std::abs(sol.max_q(r, c) - sol.v.at(r, c)) < 1e-10);
            }
    }
}

TEST_CASE("adjacent-to-goal states have max-action Q of exactly 1") {
    const Maze maze = Maze::generate(4, 6, 6, MazeStyle::Empty);
    const OracleSolution sol = value_iteration_oracle(maze, 0.9);
    const auto dist = oracles::bfs_from_goal(maze);
    for (int r = 0; r < maze.height(); ++r)
        for (int c = 0; c < maze.width(); ++c)
            if (dist[r * maze.width() + c] == 1)
                CHECK(sol.max_q(r, c) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sparse target cuts at genuine terminals only") {
    const Maze maze = Maze::generate(5, 6, 6, MazeStyle::Empty);
    const Observation obs = encode_observation(maze);
    QFunction zero;

    Transition done_tr{obs, Action::Up, 1.0, obs, true, false};
    CHECK(q_target_sparse(done_tr, zero, 0.9) == 1.0);

    Transition live_tr{obs, Action::Up, 0.0, obs, false, false};
    CHECK(q_target_sparse(live_tr, zero, 0.9) == 0.0); // zero Q, zero reward

    // cap-truncated transitions bootstrap
    TabularFn table(4, {0.5, 0.25, 0.0, 0.0});
    QFunction rich;
    rich.fn = std::move(table);
    Transition capped{obs, Action::Up, 0.0, obs, true, true};
    CHECK(q_target_sparse(capped, rich, 0.9) == doctest::Approx(0.45));
}

TEST_CASE("sparse target reproduces the oracle backup") {
    const Maze maze = Maze::generate(6, 6, 6, MazeStyle::Obstacles);
    const OracleSolution sol = value_iteration_oracle(maze, 0.9);
    const QFunction oracle_q = q_from_oracle(maze, sol);

    for (int r = 0; r < maze.height(); ++r)
        for (int c = 0; c < maze.width(); ++c) {
            if (!maze.is_empty(r, c) || CellPos{r, c} == maze.goal()) continue;
            const Maze at = maze.with_agent({r, c});
            for (int a = 0; a < 4; ++a) {
                auto [next, res] = step(at, static_cast<Action>(a));
                const Transition tr{encode_observation(at), static_cast<Action>(a),
                                    res.reward, res.observation, res.done,
                                    res.truncated};
                CHECK(q_target_sparse(tr, oracle_q, 0.9) ==
                      doctest::Approx(sol.q[a].at(r, c)).epsilon(1e-9));
            }
        }
}

TEST_CASE("pvo-value target is gamma V of the successor") {
    const Maze maze = Maze::generate(7, 6, 6, MazeStyle::Empty);
    const ValueFunction zero{0.9, TabularFn(1)};
    const Observation obs = encode_observation(maze);
    Transition tr{obs, Action::Up, 0.0, obs, false, false};
    CHECK(q_target_pvo_value(tr, zero, 0.9) == 0.0);

    // entering the goal: V(post-terminal) is trained toward 1, target = gamma
    const ValueFunction exact = exact_value_table(maze, 0.9);
    const auto dist = oracles::bfs_from_goal(maze);
    for (int r = 0; r < maze.height(); ++r)
        for (int c = 0; c < maze.width(); ++c) {
            if (dist[r * maze.width() + c] != 1) continue;
            const Maze at = maze.with_agent({r, c});
            for (int a = 0; a < 4; ++a) {
                auto [next, res] = step(at, static_cast<Action>(a));
                if (res.reward != 1.0) continue;
                const Transition enter{encode_observation(at), static_cast<Action>(a),
                                       res.reward, res.observation, res.done,
                                       res.truncated};
                CHECK(q_target_pvo_value(enter, exact, 0.9) == doctest::Approx(0.9));
            }
        }
}

TEST_CASE("constant potentials shape to (gamma - 1) c") {
    const Maze maze = Maze::generate(8, 6, 6, MazeStyle::Empty);
    const Observation obs = encode_observation(maze);
    const ValueFunction constant{0.9, TabularFn(1, {2.0})}; // default 2 everywhere
    Transition tr{obs, Action::Up, 0.0, obs, false, false};
    CHECK(shaped_reward(tr, constant, 0.9) == doctest::Approx((0.9 - 1.0) * 2.0));

    const ValueFunction zero{0.9, TabularFn(1)};
    Transition rewarded{obs, Action::Up, 1.0, obs, true, false};
    CHECK(shaped_reward(rewarded, zero, 0.9) == 1.0); // zero V keeps env reward
    CHECK(shaped_reward(rewarded, zero, 0.9, false) == 0.0);
}

TEST_CASE("shaped rewards telescope along an episode") {
    const Maze level = Maze::generate(9, 6, 6, MazeStyle::Obstacles);
    const ValueFunction values = exact_value_table(level, 0.9);

    Maze maze = level;
    Observation obs = encode_observation(maze);
    const Observation first = obs;
    double total_env = 0.0;
    double total_shaped = 0.0;
    Rng rng(3);
    Observation last = obs;
    while (!maze.done()) {
        const auto action = kActions[rng.below_int(4)];
        auto [next, res] = step(maze, action);
        const Transition tr{obs, action, res.reward, res.observation, res.done,
                            res.truncated};
        total_env += res.reward;
        total_shaped += shaped_reward(tr, values, 1.0); // gamma = 1 telescopes
        maze = std::move(next);
        obs = res.observation;
        last = std::move(res.observation);
    }
    const double expected =
        total_env + values.evaluate(last) - values.evaluate(first);
    CHECK(total_shaped == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("epsilon schedule is linear then flat") {
    const EpsSchedule eps{1.0, 0.05, 1000};
    CHECK(eps.at(0) == 1.0);
    CHECK(eps.at(500) == doctest::Approx(0.525));
    CHECK(eps.at(1000) == 0.05);
    CHECK(eps.at(5000) == 0.05);
}

TEST_CASE("mode and value pairing is validated") {
    const Maze level = Maze::generate(10, 4, 4, MazeStyle::Empty);
    AgentConfig config;
    config.mode = AgentMode::PvoValue;
    config.gamma = 0.9;
    config.max_steps = 10;
    CHECK_THROWS_AS(train_agent(level, config, nullptr, 1), ConfigError);

    const ValueFunction values = exact_value_table(level, 0.95); // wrong gamma
    CHECK_THROWS_AS(train_agent(level, config, &values, 1), ConfigError);
}

TEST_CASE("baseline tabular agent converges to the oracle policy on 4x4") {
    const Maze level = Maze::generate(11, 4, 4, MazeStyle::Empty);
    const OracleSolution sol = value_iteration_oracle(level, 0.9);

    AgentConfig config;
    config.mode = AgentMode::SparseBaseline;
    config.gamma = 0.9;
    config.alpha = 0.2;
    config.max_steps = 15000;
    config.eval_interval = 1000;
    const AgentResult result = train_agent(level, config, nullptr, 2);

    CHECK(greedy_in_oracle_set(result.q, level, sol));
    CHECK(result.metrics.back().eval_success_rate == 1.0);
}

TEST_CASE("tabular shaping converges to the same policy as the baseline") {
    const Maze level = Maze::generate(12, 4, 4, MazeStyle::Empty);
    const OracleSolution sol = value_iteration_oracle(level, 0.9);
    const ValueFunction values = exact_value_table(level, 0.9);

    AgentConfig config;
    config.mode = AgentMode::PvoShaping;
    config.gamma = 0.9;
    config.alpha = 0.2;
    config.max_steps = 15000;
    config.eval_interval = 1000;
    const AgentResult shaped = train_agent(level, config, &values, 3);
    CHECK(greedy_in_oracle_set(shaped.q, level, sol));

    config.mode = AgentMode::SparseBaseline;
    const AgentResult baseline = train_agent(level, config, nullptr, 3);
    CHECK(greedy_in_oracle_set(baseline.q, level, sol));
}

TEST_CASE("pvo-value with the exact table solves 6x6 within 10k steps") {
    const Maze level = Maze::generate(13, 6, 6, MazeStyle::Obstacles);
    const ValueFunction values = exact_value_table(level, 0.9);

    AgentConfig config;
    config.mode = AgentMode::PvoValue;
    config.gamma = 0.9;
    config.alpha = 0.2;
    config.max_steps = 10000;
    config.eval_interval = 1000;
    const AgentResult result = train_agent(level, config, &values, 4);
    CHECK(result.metrics.back().eval_success_rate == 1.0);
}

TEST_CASE("no action-values are ever learned at terminal states") {
    const Maze level = Maze::generate(14, 5, 5, MazeStyle::Empty);
    AgentConfig config;
    config.mode = AgentMode::SparseBaseline;
    config.gamma = 0.9;
    config.max_steps = 3000;
    config.eval_interval = 3000;
    const AgentResult result = train_agent(level, config, nullptr, 5);

    for (const auto& key : std::get<TabularFn>(result.q.fn).keys()) {
        const auto bits = oracles::unpack_key(key);
        const int canvas = static_cast<int>(key[0]);
        const int c2 = canvas * canvas;
        int goal_bits = 0;
        for (int i = 0; i < c2; ++i) goal_bits += bits[kGoalPlane * c2 + i];
        CHECK(goal_bits == 1); // a post-terminal observation would have none
    }
}

TEST_CASE("training runs are reproducible bit for bit") {
    const Maze level = Maze::generate(15, 6, 6, MazeStyle::Obstacles);
    const ValueFunction values = exact_value_table(level, 0.9);
    AgentConfig config;
    config.mode = AgentMode::PvoShaping;
    config.gamma = 0.9;
    config.max_steps = 4000;
    config.eval_interval = 500;

    const AgentResult a = train_agent(level, config, &values, 6);
    const AgentResult b = train_agent(level, config, &values, 6);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(a.metrics[i].eval_success_rate == b.metrics[i].eval_success_rate);
        CHECK(a.metrics[i].eval_mean_return == b.metrics[i].eval_mean_return);
        CHECK(a.metrics[i].loss == b.metrics[i].loss);
    }
    CHECK(std::get<TabularFn>(a.q.fn) == std::get<TabularFn>(b.q.fn));

    // a different seed explores differently (converged Q can still coincide)
    const AgentResult c = train_agent(level, config, &values, 7);
    bool any_loss_differs = false;
    for (std::size_t i = 0; i < a.metrics.size(); ++i)
        if (c.metrics[i].loss != a.metrics[i].loss) any_loss_differs = true;
    CHECK(any_loss_differs);
}

TEST_CASE("metrics csv round-trips with the exact header") {
    const fs::path dir = fs::temp_directory_path() /
                         ("pvolab-test-rl-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::vector<MetricsRow> rows{{1000, 0.5, 0.25, 12.5, 0.8, 0.01},
                                       {2000, 1.0, 0.9, 3.0, 0.05, 0.001}};
    save_metrics_csv(rows, dir / "m.csv");

    std::ifstream in(dir / "m.csv", std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "env_steps,eval_success_rate,eval_mean_return,eval_mean_episode_len,"
          "epsilon,loss");

    const auto loaded = load_metrics_csv(dir / "m.csv");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].env_steps == 2000);
    CHECK(loaded[1].eval_mean_return == 0.9);
    fs::remove_all(dir);
}
