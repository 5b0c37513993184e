#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pvolab {

/// Fixed observation footprint. Mazes up to canvas x canvas are padded onto
/// it so one value network serves every size.
inline constexpr int kDefaultCanvas = 12;

enum class Tile : std::uint8_t { Wall = 0, Empty = 1 };

enum class MazeStyle : std::uint8_t { Empty = 0, Obstacles = 1 };

const char* to_string(MazeStyle style);
MazeStyle maze_style_from_string(const std::string& name);

/// Canonical action order. Tie-breaking, neighbor expansion and file
/// encodings all rely on this exact ordering.
enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr std::array<Action, 4> kActions{Action::Up, Action::Down,
                                                Action::Left, Action::Right};

/// (row delta, col delta) per action, row 0 at the top.
inline constexpr std::array<std::pair<int, int>, 4> kActionDelta{
    {{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

const char* to_string(Action a);

struct CellPos {
    int row = 0;
    int col = 0;
    bool operator==(const CellPos&) const = default;
};

int manhattan(CellPos a, CellPos b);

/// Binary observation: four planes (wall, empty, agent, goal) over the
/// canvas, flattened row-major within each plane, planes concatenated.
/// Padding outside the maze footprint reads as wall. The goal plane is empty
/// exactly when the agent stands on the goal (the post-terminal observation).
struct Observation {
    int canvas = 0;
    std::vector<std::uint8_t> planes;

    bool operator==(const Observation&) const = default;

    std::size_t flat_size() const { return planes.size(); }

    /// Bit-packed representation, used as the tabular lookup key.
    std::string packed_key() const;

    std::vector<double> as_doubles() const;
};

inline constexpr int kWallPlane = 0;
inline constexpr int kEmptyPlane = 1;
inline constexpr int kAgentPlane = 2;
inline constexpr int kGoalPlane = 3;

class Maze;

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    /// Episode ended by the step cap rather than by reaching the goal.
    bool truncated = false;
};

/// A maze plus agent/goal positions and episode progress. Value semantics
/// throughout: transitions copy, nothing is shared.
class Maze {
public:
    /// Deterministic function of (seed, width, height, style). Style Empty
    /// has no interior walls; style Obstacles carves a depth-first
    /// backtracker maze on the odd lattice and then opens 10% (rounded up)
    /// of the remaining interior walls. Agent and goal are distinct empty
    /// cells; generation retries until the goal is reachable.
    static Maze generate(std::uint32_t seed, int width, int height,
                         MazeStyle style, int canvas = kDefaultCanvas);

    /// Reconstruct a maze from its row-string form ('#' wall, '.' empty,
    /// 'A' agent, 'G' goal; 'A' covers 'G' when they coincide).
    static Maze from_rows(const std::vector<std::string>& rows,
                          std::uint32_t seed, MazeStyle style,
                          int canvas = kDefaultCanvas);

    int width() const { return width_; }
    int height() const { return height_; }
    int canvas() const { return canvas_; }
    std::uint32_t seed() const { return seed_; }
    MazeStyle style() const { return style_; }
    CellPos agent() const { return agent_; }
    CellPos goal() const { return goal_; }
    long steps_taken() const { return steps_; }
    bool done() const { return done_; }

    /// Episode horizon: 4 * width * height steps.
    long step_cap() const { return 4L * width_ * height_; }

    Tile tile(int row, int col) const { return tiles_[row * width_ + col]; }
    bool is_empty(int row, int col) const { return tile(row, col) == Tile::Empty; }
    bool in_bounds(int row, int col) const {
        return row >= 0 && row < height_ && col >= 0 && col < width_;
    }

    /// Copy with the agent placed on an empty cell, episode state reset.
    /// Placing the agent on the goal yields the post-terminal configuration.
    Maze with_agent(CellPos pos) const;

    std::vector<std::string> to_rows() const;

    bool layout_equals(const Maze& other) const {
        return width_ == other.width_ && height_ == other.height_ &&
               tiles_ == other.tiles_;
    }

private:
    friend std::pair<Maze, StepResult> step(const Maze& maze, Action action);

    int width_ = 0;
    int height_ = 0;
    int canvas_ = kDefaultCanvas;
    std::uint32_t seed_ = 0;
    MazeStyle style_ = MazeStyle::Empty;
    std::vector<Tile> tiles_;
    CellPos agent_;
    CellPos goal_;
    long steps_ = 0;
    bool done_ = false;
};

/// Pure transition. The agent moves one cell if the target is empty, else
/// stays. Reward 1 exactly on the step that enters the goal; the episode
/// also ends (reward 0, truncated) once the step cap is hit.
/// Stepping a finished episode is a usage error (std::logic_error).
std::pair<Maze, StepResult> step(const Maze& maze, Action action);

Observation encode_observation(const Maze& maze);

/// Observation straight from row strings, without a full Maze.
Observation observation_from_rows(const std::vector<std::string>& rows,
                                  int canvas);

/// BFS distance from every cell to the goal over empty cells, row-major;
/// -1 for walls and unreachable cells, 0 at the goal.
std::vector<int> distances_to_goal(const Maze& maze);

bool goal_reachable(const Maze& maze);

} // namespace pvolab
