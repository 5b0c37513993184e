#include "pvolab/gridworld.hpp"

#include <cmath>
#include <cstdlib>
#include <deque>
#include <stdexcept>

#include "pvolab/error.hpp"
#include "pvolab/rng.hpp"

namespace pvolab {

const char* to_string(MazeStyle style) {
    return style == MazeStyle::Empty ? "empty" : "obstacles";
}

MazeStyle maze_style_from_string(const std::string& name) {
    if (name == "empty") return MazeStyle::Empty;
    if (name == "obstacles") return MazeStyle::Obstacles;
    throw ConfigError("unknown maze style: " + name);
}

const char* to_string(Action a) {
    switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
    }
    return "?";
}

int manhattan(CellPos a, CellPos b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

std::string Observation::packed_key() const {
    std::string key;
    key.reserve(1 + (planes.size() + 7) / 8);
    key.push_back(static_cast<char>(canvas));
    std::uint8_t acc = 0;
    int nbits = 0;
    for (std::uint8_t v : planes) {
        acc = static_cast<std::uint8_t>((acc << 1) | (v & 1));
        if (++nbits == 8) {
            key.push_back(static_cast<char>(acc));
            acc = 0;
            nbits = 0;
        }
    }
    if (nbits > 0) key.push_back(static_cast<char>(acc << (8 - nbits)));
    return key;
}

std::vector<double> Observation::as_doubles() const {
    return std::vector<double>(planes.begin(), planes.end());
}

namespace {

std::vector<Tile> carve_empty(int width, int height) {
    std::vector<Tile> tiles(static_cast<std::size_t>(width) * height, Tile::Wall);
    for (int r = 1; r < height - 1; ++r)
        for (int c = 1; c < width - 1; ++c)
            tiles[r * width + c] = Tile::Empty;
    return tiles;
}

// Depth-first backtracker over the odd lattice, then open ceil(10%) of the
// interior walls that remain so the maze has extra routes. Even-sized mazes
// have an even strip of cells off the lattice; the opening pass is the only
// thing that can reclaim those.
std::vector<Tile> carve_obstacles(int width, int height, Rng& rng) {
    std::vector<Tile> tiles(static_cast<std::size_t>(width) * height, Tile::Wall);
    auto at = [&](int r, int c) -> Tile& { return tiles[r * width + c]; };

    std::vector<CellPos> rooms;
    for (int r = 1; r < height - 1; r += 2)
        for (int c = 1; c < width - 1; c += 2)
            rooms.push_back({r, c});

    std::vector<std::uint8_t> visited(rooms.size(), 0);
    auto room_index = [&](int r, int c) {
        return static_cast<std::size_t>((r - 1) / 2) * ((width - 2 + 1) / 2) +
               static_cast<std::size_t>((c - 1) / 2);
    };

    std::vector<CellPos> stack;
    const CellPos start = rooms[rng.below(rooms.size())];
    visited[room_index(start.row, start.col)] = 1;
    at(start.row, start.col) = Tile::Empty;
    stack.push_back(start);

    std::vector<int> dirs{0, 1, 2, 3};
    while (!stack.empty()) {
        const CellPos cur = stack.back();
        rng.shuffle(dirs);
        bool advanced = false;
        for (int d : dirs) {
            const auto [dr, dc] = kActionDelta[d];
            const int nr = cur.row + 2 * dr;
            const int nc = cur.col + 2 * dc;
            if (nr < 1 || nr >= height - 1 || nc < 1 || nc >= width - 1) continue;
            if (nr % 2 == 0 || nc % 2 == 0) continue;
            if (visited[room_index(nr, nc)]) continue;
            visited[room_index(nr, nc)] = 1;
            at(cur.row + dr, cur.col + dc) = Tile::Empty;
            at(nr, nc) = Tile::Empty;
            stack.push_back({nr, nc});
            advanced = true;
            break;
        }
        if (!advanced) stack.pop_back();
    }

    std::vector<std::size_t> walls;
    for (int r = 1; r < height - 1; ++r)
        for (int c = 1; c < width - 1; ++c)
            if (at(r, c) == Tile::Wall) walls.push_back(static_cast<std::size_t>(r) * width + c);

    if (!walls.empty()) {
        const auto open_count = static_cast<std::size_t>(
            std::ceil(0.10 * static_cast<double>(walls.size())));
        // partial Fisher-Yates: the first open_count slots become the sample
        for (std::size_t i = 0; i < open_count; ++i) {
            const std::size_t j = i + rng.below(walls.size() - i);
            std::swap(walls[i], walls[j]);
            tiles[walls[i]] = Tile::Empty;
        }
    }
    return tiles;
}

} // namespace

Maze Maze::generate(std::uint32_t seed, int width, int height, MazeStyle style,
                    int canvas) {
    if (width < 4 || height < 4 || width > canvas || height > canvas)
        throw ConfigError("maze size " + std::to_string(width) + "x" +
                          std::to_string(height) + " outside [4, " +
                          std::to_string(canvas) + "]");

    Rng rng(mix_seed(seed));
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Maze maze;
        maze.width_ = width;
        maze.height_ = height;
        maze.canvas_ = canvas;
        maze.seed_ = seed;
        maze.style_ = style;
        maze.tiles_ = style == MazeStyle::Empty ? carve_empty(width, height)
                                                : carve_obstacles(width, height, rng);

        std::vector<CellPos> empties;
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                if (maze.is_empty(r, c)) empties.push_back({r, c});
        if (empties.size() < 2) continue;

        const std::size_t ai = rng.below(empties.size());
        maze.agent_ = empties[ai];
        empties.erase(empties.begin() + static_cast<std::ptrdiff_t>(ai));
        maze.goal_ = empties[rng.below(empties.size())];

        if (goal_reachable(maze)) return maze;
    }
    throw std::logic_error("maze generation failed to produce a reachable goal");
}

Maze Maze::from_rows(const std::vector<std::string>& rows, std::uint32_t seed,
                     MazeStyle style, int canvas) {
    if (rows.empty()) throw ParseError("maze grid has no rows");
    const int height = static_cast<int>(rows.size());
    const int width = static_cast<int>(rows[0].size());
    if (width < 4 || height < 4 || width > canvas || height > canvas)
        throw ConfigError("maze grid " + std::to_string(width) + "x" +
                          std::to_string(height) + " outside [4, " +
                          std::to_string(canvas) + "]");

    Maze maze;
    maze.width_ = width;
    maze.height_ = height;
    maze.canvas_ = canvas;
    maze.seed_ = seed;
    maze.style_ = style;
    maze.tiles_.assign(static_cast<std::size_t>(width) * height, Tile::Wall);

    bool have_agent = false;
    bool have_goal = false;
    for (int r = 0; r < height; ++r) {
        if (static_cast<int>(rows[r].size()) != width)
            throw ParseError("maze grid row " + std::to_string(r) + " has ragged width");
        for (int c = 0; c < width; ++c) {
            switch (rows[r][c]) {
            case '#':
                break;
            case '.':
                maze.tiles_[r * width + c] = Tile::Empty;
                break;
            case 'A':
                maze.tiles_[r * width + c] = Tile::Empty;
                maze.agent_ = {r, c};
                have_agent = true;
                break;
            case 'G':
                maze.tiles_[r * width + c] = Tile::Empty;
                maze.goal_ = {r, c};
                have_goal = true;
                break;
            default:
                throw ParseError(std::string("unknown maze character '") +
                                 rows[r][c] + "'");
            }
        }
    }
    if (!have_agent) throw ParseError("maze grid has no agent");
    if (!have_goal) maze.goal_ = maze.agent_; // agent covers the goal
    maze.done_ = maze.agent_ == maze.goal_;
    return maze;
}

Maze Maze::with_agent(CellPos pos) const {
    if (!in_bounds(pos.row, pos.col) || !is_empty(pos.row, pos.col))
        throw std::logic_error("agent placed on a wall");
    Maze copy = *this;
    copy.agent_ = pos;
    copy.steps_ = 0;
    copy.done_ = pos == goal_;
    return copy;
}

std::vector<std::string> Maze::to_rows() const {
    std::vector<std::string> rows(height_, std::string(width_, '#'));
    for (int r = 0; r < height_; ++r)
        for (int c = 0; c < width_; ++c)
            if (is_empty(r, c)) rows[r][c] = '.';
    rows[goal_.row][goal_.col] = 'G';
    rows[agent_.row][agent_.col] = 'A'; // covers 'G' on the goal cell
    return rows;
}

std::pair<Maze, StepResult> step(const Maze& maze, Action action) {
    if (maze.done()) throw std::logic_error("step() on a finished episode");

    Maze next = maze;
    const auto [dr, dc] = kActionDelta[static_cast<int>(action)];
    const int nr = maze.agent().row + dr;
    const int nc = maze.agent().col + dc;
    if (maze.in_bounds(nr, nc) && maze.is_empty(nr, nc)) next.agent_ = {nr, nc};
    next.steps_ = maze.steps_taken() + 1;

    StepResult result;
    result.reward = next.agent_ == next.goal_ ? 1.0 : 0.0;
    result.truncated = result.reward == 0.0 && next.steps_ >= maze.step_cap();
    result.done = result.reward == 1.0 || result.truncated;
    next.done_ = result.done;
    result.observation = encode_observation(next);
    return {std::move(next), result};
}

Observation encode_observation(const Maze& maze) {
    const int canvas = maze.canvas();
    Observation obs;
    obs.canvas = canvas;
    obs.planes.assign(static_cast<std::size_t>(4) * canvas * canvas, 0);
    const auto plane = [&](int p) { return obs.planes.data() + p * canvas * canvas; };

    for (int r = 0; r < canvas; ++r) {
        for (int c = 0; c < canvas; ++c) {
            const bool inside = r < maze.height() && c < maze.width();
            const bool empty = inside && maze.is_empty(r, c);
            plane(kWallPlane)[r * canvas + c] = empty ? 0 : 1;
            plane(kEmptyPlane)[r * canvas + c] = empty ? 1 : 0;
        }
    }
    plane(kAgentPlane)[maze.agent().row * canvas + maze.agent().col] = 1;
    if (!(maze.agent() == maze.goal()))
        plane(kGoalPlane)[maze.goal().row * canvas + maze.goal().col] = 1;
    return obs;
}

Observation observation_from_rows(const std::vector<std::string>& rows,
                                  int canvas) {
    if (rows.empty()) throw ParseError("observation grid has no rows");
    const int height = static_cast<int>(rows.size());
    const int width = static_cast<int>(rows[0].size());
    if (width > canvas || height > canvas)
        throw ConfigError("grid " + std::to_string(width) + "x" +
                          std::to_string(height) + " exceeds canvas " +
                          std::to_string(canvas));

    Observation obs;
    obs.canvas = canvas;
    obs.planes.assign(static_cast<std::size_t>(4) * canvas * canvas, 0);
    const auto plane = [&](int p) { return obs.planes.data() + p * canvas * canvas; };

    for (int r = 0; r < canvas; ++r) {
        for (int c = 0; c < canvas; ++c) {
            char ch = '#';
            if (r < height && c < width) {
                if (static_cast<int>(rows[r].size()) != width)
                    throw ParseError("observation grid row " + std::to_string(r) +
                                     " has ragged width");
                ch = rows[r][c];
            }
            switch (ch) {
            case '#':
                plane(kWallPlane)[r * canvas + c] = 1;
                break;
            case 'A':
                plane(kAgentPlane)[r * canvas + c] = 1;
                plane(kEmptyPlane)[r * canvas + c] = 1;
                break;
            case 'G':
                plane(kGoalPlane)[r * canvas + c] = 1;
                plane(kEmptyPlane)[r * canvas + c] = 1;
                break;
            case '.':
                plane(kEmptyPlane)[r * canvas + c] = 1;
                break;
            default:
                throw ParseError(std::string("unknown maze character '") + ch + "'");
            }
        }
    }
    return obs;
}

std::vector<int> distances_to_goal(const Maze& maze) {
    std::vector<int> dist(static_cast<std::size_t>(maze.width()) * maze.height(), -1);
    std::deque<CellPos> frontier;
    dist[maze.goal().row * maze.width() + maze.goal().col] = 0;
    frontier.push_back(maze.goal());
    while (!frontier.empty()) {
        const CellPos cur = frontier.front();
        frontier.pop_front();
        const int d = dist[cur.row * maze.width() + cur.col];
        for (const auto& [dr, dc] : kActionDelta) {
            const int nr = cur.row + dr;
            const int nc = cur.col + dc;
            if (!maze.in_bounds(nr, nc) || !maze.is_empty(nr, nc)) continue;
            int& cell = dist[nr * maze.width() + nc];
            if (cell >= 0) continue;
            cell = d + 1;
            frontier.push_back({nr, nc});
        }
    }
    return dist;
}

bool goal_reachable(const Maze& maze) {
    const auto dist = distances_to_goal(maze);
    return dist[maze.agent().row * maze.width() + maze.agent().col] >= 0;
}

} // namespace pvolab
