#include "pvolab/expert.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <tuple>

#include <json.hpp>

#include "pvolab/error.hpp"
#include "pvolab/rng.hpp"

namespace pvolab {

using nlohmann::json;

std::vector<Action> astar_solve(const Maze& maze) {
    const int w = maze.width();
    const int h = maze.height();
    const int n = w * h;
    const auto idx = [w](CellPos p) { return p.row * w + p.col; };

    // (f, insertion counter, cell index); lower f wins, FIFO among equals
    using Node = std::tuple<int, std::uint64_t, int>;
    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> frontier;

    std::vector<int> g(n, -1);
    std::vector<int> parent_action(n, -1);
    std::vector<std::uint8_t> closed(n, 0);

    std::uint64_t counter = 0;
    g[idx(maze.agent())] = 0;
    frontier.emplace(manhattan(maze.agent(), maze.goal()), counter++, idx(maze.agent()));

    const int goal_index = idx(maze.goal());
    while (!frontier.empty()) {
        const auto [f, order, cur] = frontier.top();
        frontier.pop();
        if (closed[cur]) continue;
        closed[cur] = 1;
        if (cur == goal_index) break;

        const CellPos pos{cur / w, cur % w};
        for (int a = 0; a < 4; ++a) {
            const auto [dr, dc] = kActionDelta[a];
            const int nr = pos.row + dr;
            const int nc = pos.col + dc;
            if (!maze.in_bounds(nr, nc) || !maze.is_empty(nr, nc)) continue;
            const int next = nr * w + nc;
            const int tentative = g[cur] + 1;
            if (g[next] >= 0 && g[next] <= tentative) continue;
            g[next] = tentative;
            parent_action[next] = a;
            frontier.emplace(tentative + manhattan({nr, nc}, maze.goal()), counter++, next);
        }
    }

    if (!closed[goal_index]) throw SearchError("goal unreachable from agent");

    std::vector<Action> actions;
    int cur = goal_index;
    while (cur != idx(maze.agent())) {
        const int a = parent_action[cur];
        actions.push_back(static_cast<Action>(a));
        const auto [dr, dc] = kActionDelta[a];
        cur -= dr * w + dc;
    }
    std::reverse(actions.begin(), actions.end());
    return actions;
}

DemoSet generate_demonstrations(const DemoGenConfig& config, int count,
                                std::uint64_t rng_seed) {
    if (count <= 0) throw ConfigError("demonstration count must be positive");
    if (config.size_min < 4 || config.size_max > config.canvas ||
        config.size_min > config.size_max)
        throw ConfigError("demonstration size range outside [4, canvas]");

    DemoSet demos;
    demos.config = config;
    demos.trajectories.reserve(static_cast<std::size_t>(count));

    for (int i = 0; i < count; ++i) {
        Rng stream(mix_seed(rng_seed + static_cast<std::uint64_t>(i)));
        const int size =
            config.size_min + stream.below_int(config.size_max - config.size_min + 1);
        const auto maze_seed = stream.next_u32();

        Maze maze = Maze::generate(maze_seed, size, size, config.style, config.canvas);
        const auto actions = astar_solve(maze);

        Trajectory traj;
        traj.meta = {maze_seed, size, size, config.style};
        traj.grids.push_back(maze.to_rows());
        traj.states.push_back(encode_observation(maze));
        for (const Action a : actions) {
            auto [next, result] = step(maze, a);
            maze = std::move(next);
            traj.grids.push_back(maze.to_rows());
            traj.states.push_back(std::move(result.observation));
        }
        // actions are dropped here; the stored record is state-only
        demos.trajectories.push_back(std::move(traj));
    }
    return demos;
}

namespace {

json header_json(const DemoGenConfig& config) {
    return json{{"schema_version", kDemoSchemaVersion},
                {"canvas", config.canvas},
                {"gamma", config.gamma},
                {"style", to_string(config.style)},
                {"size_range", {config.size_min, config.size_max}}};
}

void validate_trajectory(const Trajectory& traj, int line) {
    const auto fail = [line](const std::string& msg) {
        throw ParseError("line " + std::to_string(line) + ": " + msg);
    };
    if (traj.grids.size() < 2) fail("trajectory shorter than 2 states");
    const auto agent_pos = [&fail](const std::vector<std::string>& grid) {
        for (std::size_t r = 0; r < grid.size(); ++r) {
            const auto c = grid[r].find('A');
            if (c != std::string::npos)
                return CellPos{static_cast<int>(r), static_cast<int>(c)};
        }
        fail("state has no agent");
        return CellPos{};
    };
    for (std::size_t i = 0; i + 1 < traj.grids.size(); ++i) {
        const auto& a = traj.grids[i];
        const auto& b = traj.grids[i + 1];
        if (a.size() != b.size()) fail("grid height changes mid-trajectory");
        for (std::size_t r = 0; r < a.size(); ++r) {
            if (a[r].size() != b[r].size()) fail("grid width changes mid-trajectory");
            for (std::size_t c = 0; c < a[r].size(); ++c) {
                if ((a[r][c] == '#') != (b[r][c] == '#'))
                    fail("walls change mid-trajectory");
            }
        }
        if (manhattan(agent_pos(a), agent_pos(b)) != 1)
            fail("consecutive states are not one transition apart");
    }
    bool goal_visible_at_end = false;
    for (const auto& row : traj.grids.back())
        if (row.find('G') != std::string::npos) goal_visible_at_end = true;
    if (goal_visible_at_end) fail("trajectory does not end on the goal");
}

} // namespace

void save_demos(const DemoSet& demos, const std::filesystem::path& path) {
    if (demos.trajectories.empty()) throw ConfigError("refusing to save an empty demo set");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");

    out << header_json(demos.config).dump() << '\n';
    for (const auto& traj : demos.trajectories) {
        json row{{"maze_meta",
                  {{"seed", traj.meta.seed},
                   {"width", traj.meta.width},
                   {"height", traj.meta.height},
                   {"style", to_string(traj.meta.style)}}},
                 {"states", traj.grids}};
        out << row.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

DemoSet load_demos(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    DemoSet demos;
    std::string line;
    int line_no = 0;

    const auto parse_line = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    };

    if (!std::getline(in, line)) throw ParseError("line 1: missing header");
    ++line_no;
    try {
        const json header = parse_line(line);
        if (header.at("schema_version").get<int>() != kDemoSchemaVersion)
            throw ParseError("line 1: unsupported schema_version");
        demos.config.canvas = header.at("canvas").get<int>();
        demos.config.gamma = header.at("gamma").get<double>();
        demos.config.style = maze_style_from_string(header.at("style").get<std::string>());
        demos.config.size_min = header.at("size_range").at(0).get<int>();
        demos.config.size_max = header.at("size_range").at(1).get<int>();
    } catch (const json::exception& e) {
        throw ParseError("line 1: " + std::string(e.what()));
    }
    if (demos.config.canvas > kDefaultCanvas * 8 || demos.config.canvas < 4)
        throw ConfigError("demo file canvas " + std::to_string(demos.config.canvas) +
                          " is not usable");

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json row = parse_line(line);
        Trajectory traj;
        try {
            const json& meta = row.at("maze_meta");
            traj.meta.seed = meta.at("seed").get<std::uint32_t>();
            traj.meta.width = meta.at("width").get<int>();
            traj.meta.height = meta.at("height").get<int>();
            traj.meta.style = maze_style_from_string(meta.at("style").get<std::string>());
            traj.grids = row.at("states").get<std::vector<std::vector<std::string>>>();
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        validate_trajectory(traj, line_no);
        traj.states.reserve(traj.grids.size());
        for (const auto& grid : traj.grids) {
            if (static_cast<int>(grid.size()) > demos.config.canvas)
                throw ConfigError("line " + std::to_string(line_no) +
                                  ": grid exceeds configured canvas");
            traj.states.push_back(observation_from_rows(grid, demos.config.canvas));
        }
        demos.trajectories.push_back(std::move(traj));
    }
    if (demos.trajectories.empty()) throw ParseError("demo file contains no trajectories");
    return demos;
}

} // namespace pvolab
