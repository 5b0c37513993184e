#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "pvolab/approx.hpp"
#include "pvolab/gridworld.hpp"
#include "pvolab/pvo.hpp"

namespace pvolab {

/// SparseBaseline bootstraps off a frozen copy of Q (the standard moving
/// target). PvoValue replaces that bootstrap with gamma * V(s'). PvoShaping
/// keeps the bootstrap but feeds it a potential-shaped reward.
enum class AgentMode : std::uint8_t { SparseBaseline = 0, PvoValue = 1, PvoShaping = 2 };

const char* to_string(AgentMode mode);
AgentMode agent_mode_from_string(const std::string& name);

struct Transition {
    Observation s;
    Action a = Action::Up;
    double r = 0.0;
    Observation s_next;
    bool done = false;
    /// Episode ended by the step cap; not a real terminal, targets bootstrap
    /// through it.
    bool truncated = false;
};

struct EpsSchedule {
    double start = 1.0;
    double end = 0.05;
    long decay_steps = 1;

    double at(long step) const {
        if (step >= decay_steps) return end;
        const double f = static_cast<double>(step) / static_cast<double>(decay_steps);
        return start + (end - start) * f;
    }
};

struct AgentConfig {
    AgentMode mode = AgentMode::SparseBaseline;
    double gamma = 0.99;
    double alpha = 0.2;
    Backend backend = Backend::Tabular;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_frac = 0.2; // fraction of max_steps spent annealing
    long replay_capacity = 50000;
    int batch_size = 32;
    long target_sync = 500; // baseline mode only
    long max_steps = 40000;
    long eval_interval = 1000;
    int eval_episodes = 10;
    bool pure_shaping = false; // drop the env reward from the shaped signal
};

struct QFunction {
    std::variant<TabularFn, MlpFn> fn{TabularFn(4)};

    Backend backend() const {
        return std::holds_alternative<TabularFn>(fn) ? Backend::Tabular : Backend::Mlp;
    }
    std::vector<double> evaluate(const Observation& obs) const;
    int greedy_action(const Observation& obs) const; // lowest index wins ties
};

/// r for a genuine terminal, else r + gamma * max_a Q_frozen(s', a).
double q_target_sparse(const Transition& tr, const QFunction& frozen, double gamma);

/// gamma * V(s') for every transition, terminal-entering ones included
/// (V of the goal observation is trained toward 1). No max, no frozen copy.
double q_target_pvo_value(const Transition& tr, const ValueFunction& values,
                          double gamma);

/// Potential-based shaping with the env reward retained:
/// r + gamma * V(s') - V(s). include_env_reward=false gives the pure form.
double shaped_reward(const Transition& tr, const ValueFunction& values, double gamma,
                     bool include_env_reward = true);

struct MetricsRow {
    long env_steps = 0;
    double eval_success_rate = 0.0;
    double eval_mean_return = 0.0;
    double eval_mean_episode_len = 0.0;
    double epsilon = 0.0;
    double loss = 0.0;
};

void save_metrics_csv(const std::vector<MetricsRow>& rows,
                      const std::filesystem::path& path);
std::vector<MetricsRow> load_metrics_csv(const std::filesystem::path& path);

struct AgentResult {
    QFunction q;
    std::vector<MetricsRow> metrics;
};

/// Epsilon-greedy Q-learning with uniform replay on one fixed level.
/// Greedy evaluation episodes run every eval_interval env steps and never
/// touch the training RNG stream. Bit-for-bit reproducible from
/// (level, config, values, seed).
AgentResult train_agent(const Maze& level, const AgentConfig& config,
                        const ValueFunction* values, std::uint64_t seed);

/// Exact dynamic programming on one maze under the reward-on-entering-goal
/// convention: sweeps to a sup-norm residual below 1e-12. The goal state is
/// terminal (V* = 0 there, no action-values).
struct OracleSolution {
    ValueGrid v;
    std::array<ValueGrid, 4> q;
    int sweeps = 0;

    double max_q(int row, int col) const;
    /// Actions within tol of the best Q at this cell.
    std::vector<Action> optimal_actions(CellPos pos, double tol = 1e-9) const;
};

OracleSolution value_iteration_oracle(const Maze& maze, double gamma);

} // namespace pvolab
