#pragma once

// Reference implementations used only by tests. They are written against
// the public Maze/Observation surface and share no code with the library
// paths they check.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pvolab/gridworld.hpp"

namespace oracles {

/// Layered flood fill from the goal: distance d+1 cells are exactly the
/// empty neighbors of distance d cells. -1 where unreachable or wall.
inline std::vector<int> bfs_from_goal(const pvolab::Maze& maze) {
    const int w = maze.width();
    const int h = maze.height();
    std::vector<int> dist(static_cast<std::size_t>(w) * h, -1);
    dist[maze.goal().row * w + maze.goal().col] = 0;
    for (int d = 0;; ++d) {
        bool grew = false;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                if (dist[r * w + c] != d) continue;
                const int nr[4] = {r - 1, r + 1, r, r};
                const int nc[4] = {c, c, c - 1, c + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
                    if (!maze.is_empty(nr[k], nc[k])) continue;
                    int& cell = dist[nr[k] * w + nc[k]];
                    if (cell < 0) {
                        cell = d + 1;
                        grew = true;
                    }
                }
            }
        }
        if (!grew) return dist;
    }
}

inline int bfs_agent_distance(const pvolab::Maze& maze) {
    return bfs_from_goal(maze)[maze.agent().row * maze.width() + maze.agent().col];
}

inline bool reachable(const pvolab::Maze& maze) { return bfs_agent_distance(maze) >= 0; }

/// Cells an episode can actually occupy: flood from the start with the goal
/// absorbing (entering it ends the episode, so nothing beyond it is ever
/// visited). Greedy-policy checks against the oracle quantify over these.
inline std::vector<bool> occupiable_cells(const pvolab::Maze& maze) {
    const int w = maze.width();
    const int h = maze.height();
    std::vector<bool> seen(static_cast<std::size_t>(w) * h, false);
    std::vector<pvolab::CellPos> frontier{maze.agent()};
    seen[maze.agent().row * w + maze.agent().col] = true;
    while (!frontier.empty()) {
        const pvolab::CellPos cur = frontier.back();
        frontier.pop_back();
        if (cur == maze.goal()) continue;
        const int nr[4] = {cur.row - 1, cur.row + 1, cur.row, cur.row};
        const int nc[4] = {cur.col, cur.col, cur.col - 1, cur.col + 1};
        for (int k = 0; k < 4; ++k) {
            if (nr[k] < 0 || nr[k] >= h || nc[k] < 0 || nc[k] >= w) continue;
            if (!maze.is_empty(nr[k], nc[k]) || seen[nr[k] * w + nc[k]]) continue;
            seen[nr[k] * w + nc[k]] = true;
            frontier.push_back({nr[k], nc[k]});
        }
    }
    return seen;
}

/// gamma^exponent by repeated multiplication.
inline double gamma_power(double gamma, int exponent) {
    double v = 1.0;
    for (int i = 0; i < exponent; ++i) v *= gamma;
    return v;
}

/// Agent position read back out of an observation's agent plane.
inline pvolab::CellPos decode_agent(const pvolab::Observation& obs) {
    const int c2 = obs.canvas * obs.canvas;
    for (int i = 0; i < c2; ++i)
        if (obs.planes[pvolab::kAgentPlane * c2 + i])
            return {i / obs.canvas, i % obs.canvas};
    return {-1, -1};
}

inline bool goal_plane_empty(const pvolab::Observation& obs) {
    const int c2 = obs.canvas * obs.canvas;
    for (int i = 0; i < c2; ++i)
        if (obs.planes[pvolab::kGoalPlane * c2 + i]) return false;
    return true;
}

/// Brute-force average ranks: rank_i = 1 + #less + (#equal - 1)/2.
inline std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int less = 0;
        int equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        ranks[i] = 1.0 + less + 0.5 * (equal - 1);
    }
    return ranks;
}

/// Spearman from first principles: Pearson of brute-force ranks.
inline double brute_spearman(const std::vector<double>& a,
                             const std::vector<double>& b) {
    const auto ra = brute_ranks(a);
    const auto rb = brute_ranks(b);
    const std::size_t n = a.size();
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

/// Unpack the tabular key back into plane bits (tests only).
inline std::vector<std::uint8_t> unpack_key(const std::string& key) {
    if (key.empty()) return {};
    const int canvas = static_cast<int>(key[0]);
    const std::size_t nbits = static_cast<std::size_t>(4) * canvas * canvas;
    std::vector<std::uint8_t> bits;
    bits.reserve(nbits);
    for (std::size_t i = 0; i < nbits; ++i) {
        const unsigned char byte = static_cast<unsigned char>(key[1 + i / 8]);
        bits.push_back((byte >> (7 - i % 8)) & 1);
    }
    return bits;
}

} // namespace oracles
