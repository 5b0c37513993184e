#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pvolab/approx.hpp"
#include "pvolab/expert.hpp"
#include "pvolab/gridworld.hpp"

namespace pvolab {

enum class Backend : std::uint8_t { Tabular = 0, Mlp = 1 };

const char* to_string(Backend b);
Backend backend_from_string(const std::string& name);

/// Value-learning parameters. epochs counts dataset passes; one epoch is
/// ceil(total training states / batch_size) regression steps.
struct PvoConfig {
    double gamma = 0.99;
    int epochs = 200;
    int batch_size = 32;
    double alpha = 1e-3;
    double eval_split = 0.02;
};

/// Regression target for the state at offset t of a length-T trajectory:
/// gamma^(T-t-1), i.e. gamma to the number of steps remaining. Computed by
/// repeated multiplication from the terminal 1.0 so that
/// target(t) == gamma * target(t+1) holds bit-exactly.
double pvo_target(int trajectory_length, int t, double gamma);

/// A trained state-value estimate plus the discount it was trained with.
struct ValueFunction {
    double gamma = 0.99;
    std::variant<TabularFn, MlpFn> fn{TabularFn(1)};

    Backend backend() const {
        return std::holds_alternative<TabularFn>(fn) ? Backend::Tabular : Backend::Mlp;
    }
    double evaluate(const Observation& obs) const;
};

struct ValueTrainTrace {
    std::vector<double> train_loss;                    // one entry per update
    std::vector<std::pair<long, double>> eval_loss;    // sparse (update, loss)
};

struct ValueTrainResult {
    ValueFunction values;
    ValueTrainTrace trace;
};

/// Train V on action-free demonstrations. The MLP path samples a trajectory
/// uniformly, then an offset t uniformly in {0,...,T-1}, and takes one
/// adaptive-moment step per batch. The tabular path sweeps every
/// (trajectory, t) pair once with an exact incremental mean, which is the
/// least-squares fixed point the sampled loop only approaches.
/// The last eval_split fraction of trajectories is held out for loss
/// reporting and never trained on.
ValueTrainResult train_values(const DemoSet& demos, const PvoConfig& config,
                              Backend backend, std::uint64_t seed);

/// Per-cell values of a maze: the agent is placed on every empty cell in
/// turn (including the goal, which yields the post-terminal observation).
/// Walls read as NaN.
struct ValueGrid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int row, int col) const { return values[row * width + col]; }
    bool present(int row, int col) const { return !std::isnan(at(row, col)); }
};

ValueGrid evaluate_values(const ValueFunction& values, const Maze& maze);

/// Ground-truth table for one maze: gamma^(shortest steps to goal) per
/// reachable cell, exactly 1 on the goal. Used as the oracle-grade V in
/// control experiments.
ValueFunction exact_value_table(const Maze& maze, double gamma);

/// Sidecar recorded next to every value snapshot so value functions and
/// agents cannot silently mix gammas or demo sets.
struct ValueMeta {
    Backend backend = Backend::Mlp;
    double gamma = 0.99;
    std::string demo_file_hash;
    std::uint64_t seed = 0;
    int epochs = 0;
};

void save_value_function(const ValueFunction& values, const ValueMeta& meta,
                         const std::filesystem::path& path);

struct LoadedValueFunction {
    ValueFunction values;
    ValueMeta meta;
};

LoadedValueFunction load_value_function(const std::filesystem::path& path);

/// Hidden layer widths of the value/action-value networks.
inline constexpr int kHiddenWidth = 128;
inline constexpr int kHiddenLayers = 2;

std::vector<int> value_net_layer_sizes(int canvas, int output_dim);

} // namespace pvolab
