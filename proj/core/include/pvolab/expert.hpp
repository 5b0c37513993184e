#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvolab/gridworld.hpp"

namespace pvolab {

struct MazeMeta {
    std::uint32_t seed = 0;
    int width = 0;
    int height = 0;
    MazeStyle style = MazeStyle::Empty;
    bool operator==(const MazeMeta&) const = default;
};

/// One expert episode, stored action-free: the observation sequence plus the
/// row-string grid per step (the persisted form). length() is T; the final
/// state always has the agent on the goal.
struct Trajectory {
    MazeMeta meta;
    std::vector<std::vector<std::string>> grids;
    std::vector<Observation> states;

    int length() const { return static_cast<int>(states.size()); }
    bool operator==(const Trajectory&) const = default;
};

/// Generation parameters embedded in the demonstration file header.
struct DemoGenConfig {
    int canvas = kDefaultCanvas;
    MazeStyle style = MazeStyle::Empty;
    int size_min = 4;
    int size_max = 10;
    double gamma = 0.99;
    bool operator==(const DemoGenConfig&) const = default;
};

struct DemoSet {
    DemoGenConfig config;
    std::vector<Trajectory> trajectories;
    bool operator==(const DemoSet&) const = default;
};

/// Minimum-length action sequence from agent to goal. Deterministic:
/// Manhattan-distance heuristic, f-score ties broken by frontier insertion
/// order, neighbors expanded in canonical action order.
/// Throws SearchError when the goal is unreachable.
std::vector<Action> astar_solve(const Maze& maze);

/// count trajectories, one fresh maze each. Trajectory i draws everything
/// from its own stream seeded rng_seed + i, so generation order (or a
/// parallel split) cannot change the output.
DemoSet generate_demonstrations(const DemoGenConfig& config, int count,
                                std::uint64_t rng_seed);

/// JSON Lines: header object first, then one trajectory object per line.
void save_demos(const DemoSet& demos, const std::filesystem::path& path);

/// Inverse of save_demos. Malformed input raises ParseError naming the line;
/// a canvas above the configured one raises ConfigError.
DemoSet load_demos(const std::filesystem::path& path);

inline constexpr int kDemoSchemaVersion = 1;

} // namespace pvolab
