#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pvolab/expert.hpp"
#include "pvolab/pvo.hpp"
#include "pvolab/rl.hpp"

namespace pvolab {

/// Every constant one experiment needs. A single gamma feeds the demo
/// header, the value trainer and the agents, so artifacts cannot mix
/// discounts silently.
struct ExperimentConfig {
    int canvas = kDefaultCanvas;
    MazeStyle style = MazeStyle::Empty;
    int train_size_min = 4;
    int train_size_max = 10;
    std::vector<int> eval_sizes{12};
    int demo_count = 1000;
    double gamma = 0.99;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> agent_seeds; // empty: seed+1 .. seed+5
    Backend value_backend = Backend::Mlp;
    PvoConfig pvo;
    AgentConfig agent;
    int heatmap_count = 20;
    int level_size = 8; // side of the RL comparison levels
    std::string output_dir = "out";
};

/// Strict JSON loader: unknown keys and nested gammas are config errors.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_canonical_json(const ExperimentConfig& config);

/// Checks ranges and syncs the single gamma into the nested configs.
void validate_experiment_config(ExperimentConfig& config);

// ---------------- hashing ----------------

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t state = 0xcbf29ce484222325ULL);
std::string file_hash_hex(const std::filesystem::path& path);
std::string string_hash_hex(const std::string& text);

// ---------------- statistics ----------------

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Order-statistic quantile (index floor((n-1)*p) of the sorted sample).
/// +inf entries sort last, so a median can be infinite.
double quantile(std::vector<double> sample, double p);

/// First env_steps at which eval success reaches threshold; +inf if never.
double steps_to_success_threshold(const std::vector<MetricsRow>& rows,
                                  double threshold);

// ---------------- heatmap export ----------------

/// (a) raw CSV grid, absent cells empty; (b) 8-bit grayscale PGM mapping
/// [min,max] of the present cells onto [0,255]. A degenerate range renders
/// as all-zero pixels. This is the only place values get clamped.
void export_heatmap(const ValueGrid& grid, const std::filesystem::path& csv_path,
                    const std::filesystem::path& pgm_path);

ValueGrid load_value_grid_csv(const std::filesystem::path& path);

// ---------------- manifests ----------------

struct RunManifest {
    std::string config_hash;
    std::string demo_file;
    std::string demo_file_hash;
    std::string value_snapshot;
    std::string value_snapshot_hash;
    std::map<std::string, std::string> metric_files; // "<mode>-seed<seed>" -> path
    std::vector<std::string> heatmap_files;
    std::string correlations_csv;
    std::string summary_csv;
    std::map<std::string, long> wall_clock_ms;
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

/// Re-hash every file the manifest references.
bool verify_manifest(const std::filesystem::path& path, std::ostream* log = nullptr);

// ---------------- pipelines ----------------

/// Demos -> value function -> heatmaps + rank-correlation summary on
/// held-out larger mazes. Existing artifacts are reused when their headers
/// and sidecars match the config.
RunManifest run_value_pipeline(const ExperimentConfig& config);

/// Three agent modes x agent_seeds, each on its own unseen level; writes one
/// metrics CSV per run and a cross-mode summary (median steps to 90%
/// success, final stats, IQR bands).
RunManifest run_rl_comparison(const ExperimentConfig& config);

/// Fast invariant suites behind the `verify` CLI subcommand. Logs one line
/// per suite; true when everything held.
bool run_verification_suites(std::ostream& log);

} // namespace pvolab
