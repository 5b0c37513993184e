#include "pvolab/pvo.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "pvolab/error.hpp"
#include "pvolab/rng.hpp"

namespace pvolab {

using nlohmann::json;

const char* to_string(Backend b) { return b == Backend::Tabular ? "tabular" : "mlp"; }

Backend backend_from_string(const std::string& name) {
    if (name == "tabular") return Backend::Tabular;
    if (name == "mlp") return Backend::Mlp;
    throw ConfigError("unknown backend: " + name);
}

double pvo_target(int trajectory_length, int t, double gamma) {
    if (trajectory_length < 1) throw std::out_of_range("trajectory length must be >= 1");
    if (t < 0 || t >= trajectory_length)
        throw std::out_of_range("offset t outside {0,...,T-1}");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");

    double value = 1.0;
    for (int k = 0; k < trajectory_length - t - 1; ++k) value *= gamma;
    return value;
}

double ValueFunction::evaluate(const Observation& obs) const {
    return std::visit([&](const auto& f) { return f.forward(obs)[0]; }, fn);
}

std::vector<int> value_net_layer_sizes(int canvas, int output_dim) {
    std::vector<int> sizes{4 * canvas * canvas};
    for (int i = 0; i < kHiddenLayers; ++i) sizes.push_back(kHiddenWidth);
    sizes.push_back(output_dim);
    return sizes;
}

namespace {

void validate_pvo_config(const PvoConfig& config) {
    if (!(config.gamma > 0.0 && config.gamma < 1.0))
        throw ConfigError("gamma must lie in (0,1)");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (config.eval_split < 0.0 || config.eval_split > 0.5)
        throw ConfigError("eval split must lie in [0, 0.5]");
}

double dataset_mse(const ValueFunction& values,
                   std::span<const Trajectory* const> split, double gamma) {
    double loss = 0.0;
    long n = 0;
    for (const Trajectory* traj : split) {
        const int T = traj->length();
        for (int t = 0; t < T; ++t) {
            const double err =
                values.evaluate(traj->states[t]) - pvo_target(T, t, gamma);
            loss += err * err;
            ++n;
        }
    }
    return n > 0 ? loss / static_cast<double>(n) : 0.0;
}

} // namespace

ValueTrainResult train_values(const DemoSet& demos, const PvoConfig& config,
                              Backend backend, std::uint64_t seed) {
    validate_pvo_config(config);
    if (demos.trajectories.empty()) throw ConfigError("demo set is empty");

    const std::size_t total = demos.trajectories.size();
    const auto n_eval = static_cast<std::size_t>(
        std::floor(config.eval_split * static_cast<double>(total)));
    const std::size_t n_train = total - n_eval;
    if (n_train == 0) throw ConfigError("eval split leaves no training trajectories");

    std::vector<const Trajectory*> train;
    std::vector<const Trajectory*> held_out;
    train.reserve(n_train);
    held_out.reserve(n_eval);
    for (std::size_t i = 0; i < total; ++i)
        (i < n_train ? train : held_out).push_back(&demos.trajectories[i]);

    ValueTrainResult result;
    result.values.gamma = config.gamma;

    if (backend == Backend::Tabular) {
        TabularFn table(1);
        for (const Trajectory* traj : train) {
            const int T = traj->length();
            for (int t = 0; t < T; ++t) {
                const double target = pvo_target(T, t, config.gamma);
                table.mean_update(traj->states[t], std::span<const double>(&target, 1));
            }
        }
        result.values.fn = std::move(table);
        result.trace.train_loss.push_back(dataset_mse(result.values, train, config.gamma));
        if (!held_out.empty())
            result.trace.eval_loss.emplace_back(
                1, dataset_mse(result.values, held_out, config.gamma));
        return result;
    }

    long total_states = 0;
    for (const Trajectory* traj : train) total_states += traj->length();
    const long batches_per_epoch =
        std::max<long>(1, (total_states + config.batch_size - 1) / config.batch_size);
    const long total_updates = batches_per_epoch * config.epochs;
    const long eval_every = std::max<long>(1, total_updates / 20);

    MlpFn net(value_net_layer_sizes(demos.config.canvas, 1), seed);
    Rng rng(mix_seed(seed, 0x70766f));
    result.trace.train_loss.reserve(static_cast<std::size_t>(total_updates));

    Minibatch batch;
    for (long update = 1; update <= total_updates; ++update) {
        batch.clear();
        for (int k = 0; k < config.batch_size; ++k) {
            const Trajectory* traj = train[rng.below(train.size())];
            const int T = traj->length();
            const int t = rng.below_int(T);
            const double target = pvo_target(T, t, config.gamma);
            batch.add(traj->states[t], std::span<const double>(&target, 1));
        }
        result.trace.train_loss.push_back(net.grad_step(batch, config.alpha));

        if (!held_out.empty() && (update % eval_every == 0 || update == total_updates)) {
            ValueFunction probe{config.gamma, net};
            result.trace.eval_loss.emplace_back(
                update, dataset_mse(probe, held_out, config.gamma));
        }
    }
    result.values.fn = std::move(net);
    return result;
}

ValueGrid evaluate_values(const ValueFunction& values, const Maze& maze) {
    ValueGrid grid;
    grid.width = maze.width();
    grid.height = maze.height();
    grid.values.assign(static_cast<std::size_t>(grid.width) * grid.height,
                       std::numeric_limits<double>::quiet_NaN());
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c)
            if (maze.is_empty(r, c))
                grid.values[r * grid.width + c] =
                    values.evaluate(encode_observation(maze.with_agent({r, c})));
    return grid;
}

ValueFunction exact_value_table(const Maze& maze, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    TabularFn table(1);
    const auto dist = distances_to_goal(maze);
    for (int r = 0; r < maze.height(); ++r) {
        for (int c = 0; c < maze.width(); ++c) {
            const int d = dist[r * maze.width() + c];
            if (d < 0) continue;
            double v = 1.0;
            for (int k = 0; k < d; ++k) v *= gamma;
            const Observation obs = encode_observation(maze.with_agent({r, c}));
            table.mean_update(obs, std::span<const double>(&v, 1));
        }
    }
    ValueFunction values;
    values.gamma = gamma;
    values.fn = std::move(table);
    return values;
}

void save_value_function(const ValueFunction& values, const ValueMeta& meta,
                         const std::filesystem::path& path) {
    std::visit([&](const auto& f) { f.save(path); }, values.fn);
    const json sidecar{{"schema_version", kSnapshotSchemaVersion},
                       {"backend", to_string(values.backend())},
                       {"gamma", values.gamma},
                       {"demo_file_hash", meta.demo_file_hash},
                       {"seed", meta.seed},
                       {"epochs", meta.epochs}};
    std::filesystem::path meta_path = path;
    meta_path += ".meta.json";
    std::ofstream out(meta_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + meta_path.string() + " for writing");
    out << sidecar.dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + meta_path.string());
}

LoadedValueFunction load_value_function(const std::filesystem::path& path) {
    std::filesystem::path meta_path = path;
    meta_path += ".meta.json";
    std::ifstream in(meta_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + meta_path.string());

    LoadedValueFunction loaded;
    try {
        json sidecar;
        in >> sidecar;
        if (sidecar.at("schema_version").get<int>() != kSnapshotSchemaVersion)
            throw ParseError("unsupported value sidecar schema");
        loaded.meta.backend = backend_from_string(sidecar.at("backend").get<std::string>());
        loaded.meta.gamma = sidecar.at("gamma").get<double>();
        loaded.meta.demo_file_hash = sidecar.at("demo_file_hash").get<std::string>();
        loaded.meta.seed = sidecar.at("seed").get<std::uint64_t>();
        loaded.meta.epochs = sidecar.at("epochs").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(meta_path.string() + ": " + e.what());
    }

    loaded.values.gamma = loaded.meta.gamma;
    if (loaded.meta.backend == Backend::Tabular)
        loaded.values.fn = TabularFn::load(path);
    else
        loaded.values.fn = MlpFn::load(path);
    return loaded;
}

} // namespace pvolab
