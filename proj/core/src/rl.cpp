#include "pvolab/rl.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "pvolab/error.hpp"
#include "pvolab/format.hpp"
#include "pvolab/rng.hpp"

namespace pvolab {

const char* to_string(AgentMode mode) {
    switch (mode) {
    case AgentMode::SparseBaseline: return "sparse";
    case AgentMode::PvoValue: return "pvo-value";
    case AgentMode::PvoShaping: return "pvo-shaping";
    }
    return "?";
}

AgentMode agent_mode_from_string(const std::string& name) {
    if (name == "sparse") return AgentMode::SparseBaseline;
    if (name == "pvo-value") return AgentMode::PvoValue;
    if (name == "pvo-shaping") return AgentMode::PvoShaping;
    throw ConfigError("unknown agent mode: " + name);
}

std::vector<double> QFunction::evaluate(const Observation& obs) const {
    return std::visit([&](const auto& f) { return f.forward(obs); }, fn);
}

int QFunction::greedy_action(const Observation& obs) const {
    const auto q = evaluate(obs);
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

double q_target_sparse(const Transition& tr, const QFunction& frozen, double gamma) {
    if (tr.done && !tr.truncated) return tr.r;
    const auto q = frozen.evaluate(tr.s_next);
    return tr.r + gamma * *std::max_element(q.begin(), q.end());
}

double q_target_pvo_value(const Transition& tr, const ValueFunction& values,
                          double gamma) {
    return gamma * values.evaluate(tr.s_next);
}

double shaped_reward(const Transition& tr, const ValueFunction& values, double gamma,
                     bool include_env_reward) {
    const double f = gamma * values.evaluate(tr.s_next) - values.evaluate(tr.s);
    return include_env_reward ? tr.r + f : f;
}

// ---------------- metrics csv ----------------

void save_metrics_csv(const std::vector<MetricsRow>& rows,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "env_steps,eval_success_rate,eval_mean_return,eval_mean_episode_len,"
           "epsilon,loss\n";
    for (const auto& row : rows) {
        out << row.env_steps << ',' << format_double(row.eval_success_rate) << ','
            << format_double(row.eval_mean_return) << ','
            << format_double(row.eval_mean_episode_len) << ','
            << format_double(row.epsilon) << ',' << format_double(row.loss) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricsRow> load_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty metrics file");
    std::vector<MetricsRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::array<double, 6> vals{};
        for (int i = 0; i < 6; ++i) {
            if (!std::getline(ss, field, ','))
                throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                                 ": expected 6 fields");
            vals[i] = std::stod(field);
        }
        rows.push_back({static_cast<long>(vals[0]), vals[1], vals[2], vals[3], vals[4],
                        vals[5]});
    }
    return rows;
}

// ---------------- training ----------------

namespace {

class ReplayBuffer {
public:
    explicit ReplayBuffer(long capacity) : capacity_(capacity) {}

    void push(Transition tr) {
        if (static_cast<long>(buffer_.size()) < capacity_) {
            buffer_.push_back(std::move(tr));
        } else {
            buffer_[next_] = std::move(tr);
        }
        next_ = (next_ + 1) % static_cast<std::size_t>(capacity_);
    }

    std::size_t size() const { return buffer_.size(); }
    const Transition& at(std::size_t i) const { return buffer_[i]; }

private:
    long capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> buffer_;
};

/// Memoizes V over the (tiny) set of observations one level can produce.
class CachedValue {
public:
    explicit CachedValue(const ValueFunction* values) : values_(values) {}

    double at(const Observation& obs) {
        const auto [it, inserted] = cache_.try_emplace(obs.packed_key(), 0.0);
        if (inserted) it->second = values_->evaluate(obs);
        return it->second;
    }

private:
    const ValueFunction* values_;
    std::unordered_map<std::string, double> cache_;
};

struct EvalStats {
    double success = 0.0;
    double mean_return = 0.0;
    double mean_len = 0.0;
};

EvalStats greedy_eval(const QFunction& q, const Maze& level, int episodes,
                      double gamma) {
    EvalStats stats;
    for (int e = 0; e < episodes; ++e) {
        Maze maze = level.with_agent(level.agent());
        Observation obs = encode_observation(maze);
        bool success = false;
        long len = 0;
        while (!maze.done()) {
            const auto action = static_cast<Action>(q.greedy_action(obs));
            auto [next, res] = step(maze, action);
            maze = std::move(next);
            obs = std::move(res.observation);
            ++len;
            if (res.reward > 0.0) success = true;
        }
        stats.success += success ? 1.0 : 0.0;
        stats.mean_len += static_cast<double>(len);
        if (success) {
            double ret = 1.0;
            for (long k = 0; k < len - 1; ++k) ret *= gamma;
            stats.mean_return += ret;
        }
    }
    stats.success /= episodes;
    stats.mean_return /= episodes;
    stats.mean_len /= episodes;
    return stats;
}

void validate_agent_config(const AgentConfig& config, const ValueFunction* values) {
    if (!(config.gamma > 0.0 && config.gamma < 1.0))
        throw ConfigError("gamma must lie in (0,1)");
    if (config.alpha <= 0.0) throw ConfigError("alpha must be positive");
    if (config.batch_size < 1 || config.replay_capacity < config.batch_size)
        throw ConfigError("replay capacity must hold at least one batch");
    if (config.max_steps < 1) throw ConfigError("max_steps must be >= 1");
    if (config.eval_interval < 1 || config.eval_episodes < 1)
        throw ConfigError("evaluation cadence must be positive");

    const bool needs_values = config.mode != AgentMode::SparseBaseline;
    if (needs_values && values == nullptr)
        throw ConfigError(std::string(to_string(config.mode)) +
                          " mode requires a trained value function");
    if (needs_values && values->gamma != config.gamma)
        throw ConfigError("gamma mismatch: agent " + format_double(config.gamma) +
                          " vs value function " + format_double(values->gamma));
}

} // namespace

AgentResult train_agent(const Maze& level, const AgentConfig& config,
                        const ValueFunction* values, std::uint64_t seed) {
    validate_agent_config(config, values);

    QFunction q;
    if (config.backend == Backend::Tabular)
        q.fn = TabularFn(4);
    else
        q.fn = MlpFn(value_net_layer_sizes(level.canvas(), 4), mix_seed(seed, 0x71));

    QFunction frozen = q; // baseline bootstrap source
    const bool uses_frozen = config.mode == AgentMode::SparseBaseline;

    CachedValue v_cache(values);
    EpsSchedule eps{config.eps_start, config.eps_end,
                    std::max<long>(1, static_cast<long>(config.eps_decay_frac *
                                                        static_cast<double>(config.max_steps)))};

    Rng rng(mix_seed(seed, 0x616774));
    ReplayBuffer replay(config.replay_capacity);

    Maze maze = level.with_agent(level.agent());
    Observation obs = encode_observation(maze);

    AgentResult result;
    double loss_sum = 0.0;
    long loss_count = 0;

    Minibatch batch;
    std::vector<double> target_scratch;

    for (long env_step = 1; env_step <= config.max_steps; ++env_step) {
        assert(!maze.done()); // Q never acts or updates from a terminal state
        const double epsilon = eps.at(env_step - 1);
        const int action = rng.unit() < epsilon ? rng.below_int(4) : q.greedy_action(obs);

        auto [next, res] = step(maze, static_cast<Action>(action));
        Transition tr{std::move(obs), static_cast<Action>(action), res.reward,
                      res.observation, res.done, res.truncated};
        maze = std::move(next);
        obs = std::move(res.observation);
        replay.push(std::move(tr));

        if (maze.done()) {
            maze = level.with_agent(level.agent());
            obs = encode_observation(maze);
        }

        if (replay.size() >= static_cast<std::size_t>(config.batch_size)) {
            const auto target_for = [&](const Transition& sample) {
                switch (config.mode) {
                case AgentMode::SparseBaseline:
                    return q_target_sparse(sample, frozen, config.gamma);
                case AgentMode::PvoValue:
                    return config.gamma * v_cache.at(sample.s_next);
                case AgentMode::PvoShaping: {
                    double r_shaped = config.gamma * v_cache.at(sample.s_next) -
                                      v_cache.at(sample.s);
                    if (!config.pure_shaping) r_shaped += sample.r;
                    if (sample.done && !sample.truncated) return r_shaped;
                    const auto qv = q.evaluate(sample.s_next); // live Q
                    return r_shaped +
                           config.gamma * *std::max_element(qv.begin(), qv.end());
                }
                }
                return 0.0;
            };

            if (config.backend == Backend::Tabular) {
                auto& table = std::get<TabularFn>(q.fn);
                double batch_loss = 0.0;
                for (int k = 0; k < config.batch_size; ++k) {
                    const Transition& sample = replay.at(rng.below(replay.size()));
                    const double target = target_for(sample);
                    const double current =
                        table.forward(sample.s)[static_cast<int>(sample.a)];
                    const double err = target - current;
                    batch_loss += err * err;
                    table.td_update(sample.s, static_cast<int>(sample.a), target,
                                    config.alpha);
                }
                loss_sum += batch_loss / config.batch_size;
                ++loss_count;
            } else {
                auto& net = std::get<MlpFn>(q.fn);
                batch.clear();
                for (int k = 0; k < config.batch_size; ++k) {
                    const Transition& sample = replay.at(rng.below(replay.size()));
                    const double target = target_for(sample);
                    target_scratch = net.forward(sample.s);
                    target_scratch[static_cast<int>(sample.a)] = target;
                    batch.add(sample.s, target_scratch);
                }
                loss_sum += net.grad_step(batch, config.alpha);
                ++loss_count;
            }
        }

        if (uses_frozen && env_step % config.target_sync == 0) frozen = q;

        if (env_step % config.eval_interval == 0) {
            const EvalStats stats =
                greedy_eval(q, level, config.eval_episodes, config.gamma);
            result.metrics.push_back({env_step, stats.success, stats.mean_return,
                                      stats.mean_len, epsilon,
                                      loss_count > 0 ? loss_sum / loss_count : 0.0});
            loss_sum = 0.0;
            loss_count = 0;
        }
    }

    result.q = std::move(q);
    return result;
}

// ---------------- value iteration ----------------

double OracleSolution::max_q(int row, int col) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& grid : q) best = std::max(best, grid.at(row, col));
    return best;
}

std::vector<Action> OracleSolution::optimal_actions(CellPos pos, double tol) const {
    const double best = max_q(pos.row, pos.col);
    std::vector<Action> actions;
    for (int a = 0; a < 4; ++a)
        if (q[a].at(pos.row, pos.col) >= best - tol) actions.push_back(static_cast<Action>(a));
    return actions;
}

OracleSolution value_iteration_oracle(const Maze& maze, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    const int w = maze.width();
    const int h = maze.height();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    const auto successor = [&](int r, int c, int a) {
        const auto [dr, dc] = kActionDelta[a];
        const int nr = r + dr;
        const int nc = c + dc;
        if (maze.in_bounds(nr, nc) && maze.is_empty(nr, nc)) return CellPos{nr, nc};
        return CellPos{r, c};
    };
    const CellPos goal = maze.goal();

    std::vector<double> v(static_cast<std::size_t>(w) * h, 0.0);
    OracleSolution sol;
    constexpr double kTol = 1e-12;
    for (sol.sweeps = 1; sol.sweeps <= 100000; ++sol.sweeps) {
        double residual = 0.0;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                if (!maze.is_empty(r, c) || CellPos{r, c} == goal) continue;
                double best = -std::numeric_limits<double>::infinity();
                for (int a = 0; a < 4; ++a) {
                    const CellPos s2 = successor(r, c, a);
                    const bool terminal = s2 == goal;
                    const double qv =
                        (terminal ? 1.0 : 0.0) + gamma * (terminal ? 0.0 : v[s2.row * w + s2.col]);
                    best = std::max(best, qv);
                }
                residual = std::max(residual, std::abs(best - v[r * w + c]));
                v[r * w + c] = best;
            }
        }
        if (residual < kTol) break;
    }

    sol.v.width = w;
    sol.v.height = h;
    sol.v.values.assign(static_cast<std::size_t>(w) * h, nan);
    for (auto& grid : sol.q) {
        grid.width = w;
        grid.height = h;
        grid.values.assign(static_cast<std::size_t>(w) * h, nan);
    }
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!maze.is_empty(r, c)) continue;
            if (CellPos{r, c} == goal) {
                sol.v.values[r * w + c] = 0.0; // terminal
                continue;
            }
            sol.v.values[r * w + c] = v[r * w + c];
            for (int a = 0; a < 4; ++a) {
                const CellPos s2 = successor(r, c, a);
                const bool terminal = s2 == goal;
                sol.q[a].values[r * w + c] =
                    (terminal ? 1.0 : 0.0) + gamma * (terminal ? 0.0 : v[s2.row * w + s2.col]);
            }
        }
    }
    return sol;
}

} // namespace pvolab
