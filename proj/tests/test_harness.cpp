#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "pvolab/error.hpp"
#include "pvolab/harness.hpp"

using namespace pvolab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() /
                         ("pvolab-test-harness-" + std::to_string(::getpid()) + "-" +
                          std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Small deterministic pipeline: tabular values, tiny demo set.
ExperimentConfig tiny_value_config(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.style = MazeStyle::Empty;
    cfg.train_size_min = 4;
    cfg.train_size_max = 6;
    cfg.eval_sizes = {7};
    cfg.demo_count = 25;
    cfg.gamma = 0.9;
    cfg.seed = 3;
    cfg.value_backend = Backend::Tabular;
    cfg.heatmap_count = 3;
    cfg.output_dir = out.string();
    return cfg;
}

ExperimentConfig tiny_compare_config(const fs::path& out) {
    ExperimentConfig cfg = tiny_value_config(out);
    cfg.style = MazeStyle::Obstacles;
    cfg.level_size = 6;
    cfg.agent_seeds = {11, 12};
    cfg.agent.backend = Backend::Tabular;
    cfg.agent.alpha = 0.2;
    cfg.agent.max_steps = 2000;
    cfg.agent.eval_interval = 500;
    cfg.agent.replay_capacity = 2000;
    return cfg;
}

} // namespace

TEST_CASE("spearman agrees with the brute-force definition") {
    const std::vector<double> a{0.3, 0.1, 0.9, 0.5, 0.5, 0.2};
    const std::vector<double> b{1.0, 2.0, 0.5, 0.7, 0.9, 1.4};
    CHECK(spearman(a, b) == doctest::Approx(oracles::brute_spearman(a, b)).epsilon(1e-12));

    const std::vector<double> up{1, 2, 3, 4, 5};
    const std::vector<double> down{9, 7, 5, 3, 1};
    CHECK(spearman(up, up) == doctest::Approx(1.0));
    CHECK(spearman(up, down) == doctest::Approx(-1.0));

    // hand-worked tie case: a ranks (2.5, 1, 2.5, 4), b ranks (1, 2, 3, 4)
    const std::vector<double> ta{1.0, 0.0, 1.0, 3.0};
    const std::vector<double> tb{0.1, 0.2, 0.3, 0.4};
    // pearson of those ranks: cov = 1.25, sd_a = sqrt(4.5-... ) -> 0.6325
    CHECK(spearman(ta, tb) ==
          doctest::Approx(oracles::brute_spearman(ta, tb)).epsilon(1e-12));
    CHECK(spearman(ta, tb) == doctest::Approx(0.632455532).epsilon(1e-6));
}

TEST_CASE("quantiles are plain order statistics, infinities sort last") {
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(quantile({5, 1, 3}, 0.5) == 3.0);
    CHECK(quantile({5, 1, 3, inf, inf}, 0.5) == 5.0);
    CHECK(std::isinf(quantile({1, inf, inf, inf, inf}, 0.5)));
    CHECK(quantile({4, 2, 8, 6, 10}, 0.25) == 4.0);
    CHECK(quantile({4, 2, 8, 6, 10}, 0.75) == 8.0);
}

TEST_CASE("steps to success threshold") {
    const std::vector<MetricsRow> rows{{1000, 0.2, 0, 0, 0, 0},
                                       {2000, 0.9, 0, 0, 0, 0},
                                       {3000, 1.0, 0, 0, 0, 0}};
    CHECK(steps_to_success_threshold(rows, 0.9) == 2000.0);
    CHECK(std::isinf(steps_to_success_threshold(rows, 1.1)));
}

TEST_CASE("heatmap export: degenerate and two-level grids") {
    const fs::path dir = temp_dir();

    ValueGrid uniform;
    uniform.width = 2;
    uniform.height = 1;
    uniform.values = {0.7, 0.7};
    export_heatmap(uniform, dir / "u.csv", dir / "u.pgm");
    const std::string upgm = read_file(dir / "u.pgm");
    CHECK(upgm == std::string("P5\n2 1\n255\n") + '\0' + '\0');

    ValueGrid two;
    two.width = 2;
    two.height = 1;
    two.values = {0.0, 1.0};
    export_heatmap(two, dir / "t.csv", dir / "t.pgm");
    const std::string tpgm = read_file(dir / "t.pgm");
    CHECK(tpgm == std::string("P5\n2 1\n255\n") + '\0' + '\xff');

    fs::remove_all(dir);
}

TEST_CASE("heatmap csv re-parses to the same grid") {
    const fs::path dir = temp_dir();
    const Maze maze = Maze::generate(21, 8, 8, MazeStyle::Obstacles);
    const ValueGrid grid = evaluate_values(exact_value_table(maze, 0.9), maze);
    export_heatmap(grid, dir / "g.csv", dir / "g.pgm");

    const ValueGrid loaded = load_value_grid_csv(dir / "g.csv");
    REQUIRE(loaded.width == grid.width);
    REQUIRE(loaded.height == grid.height);
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) {
            CHECK(loaded.present(r, c) == grid.present(r, c));
            if (grid.present(r, c))
                CHECK(std::abs(loaded.at(r, c) - grid.at(r, c)) <= 1e-12);
        }
    fs::remove_all(dir);
}

TEST_CASE("config parsing: defaults, overrides and strictness") {
    const ExperimentConfig cfg = parse_experiment_config(
        R"({"gamma": 0.9, "demo_count": 50, "style": "obstacles",
            "train_size_range": [4, 8], "pvo": {"epochs": 10},
            "agent": {"alpha": 0.3, "max_steps": 5000}})");
    CHECK(cfg.gamma == 0.9);
    CHECK(cfg.demo_count == 50);
    CHECK(cfg.style == MazeStyle::Obstacles);
    CHECK(cfg.train_size_max == 8);
    CHECK(cfg.pvo.epochs == 10);
    CHECK(cfg.pvo.gamma == 0.9);   // synced from the single gamma
    CHECK(cfg.agent.gamma == 0.9);
    CHECK(cfg.agent.alpha == 0.3);

    CHECK_THROWS_AS(parse_experiment_config(R"({"gama": 0.9})"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"pvo": {"gamma": 0.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"agent": {"gamma": 0.5}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"eval_sizes": [13]})"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"gamma": 1.5})"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("not json"), ParseError);
}

TEST_CASE("value pipeline produces its artifacts and is cacheable") {
    const fs::path dir = temp_dir();
    const ExperimentConfig cfg = tiny_value_config(dir / "run");
    const RunManifest first = run_value_pipeline(cfg);

    CHECK(fs::exists(dir / "run" / "demos.jsonl"));
    CHECK(fs::exists(dir / "run" / "values.json"));
    CHECK(fs::exists(dir / "run" / "correlations.csv"));
    CHECK(fs::exists(dir / "run" / "manifest.json"));
    int heatmap_files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "run" / "heatmaps"))
        (void)entry, ++heatmap_files;
    CHECK(heatmap_files == 2 * cfg.heatmap_count);

    CHECK(verify_manifest(dir / "run" / "manifest.json"));

    // rerun in place: cache hit, same hashes
    const RunManifest second = run_value_pipeline(cfg);
    CHECK(second.demo_file_hash == first.demo_file_hash);
    CHECK(second.value_snapshot_hash == first.value_snapshot_hash);

    // fresh directory: byte-identical outputs
    ExperimentConfig cfg2 = cfg;
    cfg2.output_dir = (dir / "run2").string();
    run_value_pipeline(cfg2);
    CHECK(file_hash_hex(dir / "run" / "demos.jsonl") ==
          file_hash_hex(dir / "run2" / "demos.jsonl"));
    CHECK(file_hash_hex(dir / "run" / "values.json") ==
          file_hash_hex(dir / "run2" / "values.json"));
    CHECK(file_hash_hex(dir / "run" / "correlations.csv") ==
          file_hash_hex(dir / "run2" / "correlations.csv"));
    CHECK(read_file(dir / "run" / "heatmaps" / "heatmap_00.csv") ==
          read_file(dir / "run2" / "heatmaps" / "heatmap_00.csv"));

    fs::remove_all(dir);
}

TEST_CASE("rl comparison produces per-run metrics and a summary") {
    const fs::path dir = temp_dir();
    const ExperimentConfig cfg = tiny_compare_config(dir / "cmp");
    const RunManifest manifest = run_rl_comparison(cfg);

    CHECK(manifest.metric_files.size() == 6); // 3 modes x 2 seeds
    for (const auto& [key, rel] : manifest.metric_files) {
        (void)key;
        CHECK(fs::exists(dir / "cmp" / rel));
    }
    CHECK(fs::exists(dir / "cmp" / "summary.csv"));
    CHECK(verify_manifest(dir / "cmp" / "manifest.json"));

    const std::string summary = read_file(dir / "cmp" / "summary.csv");
    CHECK(summary.find("sparse") != std::string::npos);
    CHECK(summary.find("pvo-value") != std::string::npos);
    CHECK(summary.find("pvo-shaping") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("per-seed results are keyed by seed value, not list position") {
    const fs::path dir = temp_dir();
    ExperimentConfig cfg = tiny_compare_config(dir / "a");
    cfg.agent_seeds = {11, 12};
    run_rl_comparison(cfg);

    ExperimentConfig permuted = cfg;
    permuted.agent_seeds = {12, 11};
    permuted.output_dir = (dir / "b").string();
    run_rl_comparison(permuted);

    for (const std::string mode : {"sparse", "pvo-value", "pvo-shaping"})
        for (const std::string seed : {"11", "12"}) {
            const std::string rel = "metrics/" + mode + "-seed" + seed + ".csv";
            CHECK(read_file(dir / "a" / rel) == read_file(dir / "b" / rel));
        }
    fs::remove_all(dir);
}

TEST_CASE("manifest hash verification notices tampering") {
    const fs::path dir = temp_dir();
    const ExperimentConfig cfg = tiny_value_config(dir / "run");
    run_value_pipeline(cfg);
    REQUIRE(verify_manifest(dir / "run" / "manifest.json"));

    std::ofstream out(dir / "run" / "demos.jsonl", std::ios::app);
    out << "tampered\n";
    out.close();
    CHECK_FALSE(verify_manifest(dir / "run" / "manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("verification suites pass") {
    std::ostringstream log;
    CHECK(run_verification_suites(log));
    CHECK(log.str().find("FAIL") == std::string::npos);
}
