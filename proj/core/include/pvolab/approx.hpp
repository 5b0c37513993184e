#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pvolab/gridworld.hpp"

namespace pvolab {

inline constexpr int kSnapshotSchemaVersion = 1;

/// A batch of (input, target) rows for one regression step.
struct Minibatch {
    int input_dim = 0;
    int output_dim = 0;
    int count = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    void add(std::span<const double> input, std::span<const double> target);
    void add(const Observation& obs, std::span<const double> target);
    void clear();
};

/// Exact lookup table keyed by the packed observation bits. Unseen keys read
/// as the default vector. mean_update keeps an incremental per-key mean of
/// all targets it has seen, which is the least-squares fixed point;
/// td_update is a plain alpha-step on one output, for Q-learning.
class TabularFn {
public:
    explicit TabularFn(int output_dim, std::vector<double> default_value = {});

    int output_dim() const { return output_dim_; }
    std::size_t size() const { return table_.size(); }

    std::vector<double> forward(const Observation& obs) const;

    /// Stored keys in sorted order (packed observation bits).
    std::vector<std::string> keys() const;

    void mean_update(const Observation& obs, std::span<const double> target);
    void td_update(const Observation& obs, int output_index, double target,
                   double alpha);

    void save(const std::filesystem::path& path) const;
    static TabularFn load(const std::filesystem::path& path);

    bool operator==(const TabularFn&) const = default;

private:
    struct Entry {
        std::vector<double> values;
        std::uint64_t count = 0;
        bool operator==(const Entry&) const = default;
    };

    int output_dim_;
    std::vector<double> default_;
    std::map<std::string, Entry> table_;
};

/// Fully-connected net with rectified-linear hidden layers and a linear
/// output head. Parameters live in one flat vector, layer by layer
/// (weights row-major out x in, then biases), which is also the snapshot
/// byte order. Training uses adaptive-moment steps on mean squared error.
class MlpFn {
public:
    /// He-style uniform fan-in init for weights, zero biases, from seed.
    MlpFn(std::vector<int> layer_sizes, std::uint64_t init_seed);

    static MlpFn zeros(std::vector<int> layer_sizes);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    std::size_t param_count() const { return params_.size(); }

    std::span<const double> params() const { return params_; }
    std::span<double> params_mutable() { return params_; }

    std::vector<double> forward(std::span<const double> input) const;
    std::vector<double> forward(const Observation& obs) const;

    /// One adaptive-moment step on the batch MSE
    ///   L = (1/count) * sum_b ||target_b - f(input_b)||^2.
    /// Returns the pre-update loss.
    double grad_step(const Minibatch& batch, double alpha);

    /// Loss and parameter gradient without updating anything.
    double loss_and_grads(const Minibatch& batch, std::vector<double>& grads) const;

    /// Loss only; optionally records the rectifier gate pattern so callers
    /// can tell whether a perturbation crossed an activation kink.
    double loss_only(const Minibatch& batch, std::vector<std::uint8_t>* gates) const;

    void save(const std::filesystem::path& path) const;
    static MlpFn load(const std::filesystem::path& path);

    bool operator==(const MlpFn& other) const {
        return sizes_ == other.sizes_ && params_ == other.params_;
    }

private:
    explicit MlpFn(std::vector<int> layer_sizes);

    std::vector<int> sizes_;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    std::vector<double> params_;

    // adaptive-moment state (not persisted in snapshots)
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    long adam_t_ = 0;
};

/// Max relative disagreement between analytic and central-difference
/// gradients over a random 5% sample of parameters. Sampled parameters whose
/// perturbation flips a rectifier gate are skipped: a central difference is
/// not a derivative estimate across the kink.
double finite_diff_check(const MlpFn& fn, const Observation& obs,
                         std::span<const double> target, double eps,
                         std::uint64_t seed);

} // namespace pvolab
