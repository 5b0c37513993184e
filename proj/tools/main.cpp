// pvolab command line: demonstration generation, value learning, heatmaps,
// agent training, the three-mode comparison, and self-verification.
//
// Exit codes: 0 success, 2 configuration error, 3 verification failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pvolab/error.hpp"
#include "pvolab/expert.hpp"
#include "pvolab/format.hpp"
#include "pvolab/gridworld.hpp"
#include "pvolab/harness.hpp"
#include "pvolab/pvo.hpp"
#include "pvolab/rl.hpp"

namespace fs = std::filesystem;
using namespace pvolab;

namespace {

int cmd_gen_demos(const std::string& out, int count, const std::string& style,
                  int size_min, int size_max, int canvas, double gamma,
                  std::uint64_t seed) {
    DemoGenConfig config{canvas, maze_style_from_string(style), size_min, size_max,
                         gamma};
    const DemoSet demos = generate_demonstrations(config, count, seed);
    save_demos(demos, out);
    long states = 0;
    for (const auto& traj : demos.trajectories) states += traj.length();
    std::cout << "wrote " << demos.trajectories.size() << " trajectories (" << states
              << " states) to " << out << '\n';
    return 0;
}

int cmd_train_values(const std::optional<std::string>& config_path,
                     const std::string& demos_path, const std::string& out,
                     const std::string& backend_name, int epochs, int batch,
                     double alpha, double eval_split, std::optional<double> gamma,
                     std::uint64_t seed, const std::optional<std::string>& out_dir) {
    if (config_path) {
        ExperimentConfig cfg = load_experiment_config(*config_path);
        cfg.seed = seed;
        if (out_dir) cfg.output_dir = *out_dir;
        const RunManifest manifest = run_value_pipeline(cfg);
        std::cout << "value pipeline done; manifest at "
                  << (fs::path(cfg.output_dir) / "manifest.json").string() << '\n'
                  << "correlations: "
                  << (fs::path(cfg.output_dir) / manifest.correlations_csv).string()
                  << '\n';
        return 0;
    }

    if (demos_path.empty() || out.empty())
        throw ConfigError("train-values needs --demos and --out (or --config)");
    const DemoSet demos = load_demos(demos_path);
    PvoConfig pvo;
    pvo.gamma = gamma.value_or(demos.config.gamma);
    pvo.epochs = epochs;
    pvo.batch_size = batch;
    pvo.alpha = alpha;
    pvo.eval_split = eval_split;
    if (pvo.gamma != demos.config.gamma)
        throw ConfigError("gamma " + format_double(pvo.gamma) +
                          " does not match demo file gamma " +
                          format_double(demos.config.gamma));

    const Backend backend = backend_from_string(backend_name);
    const ValueTrainResult result = train_values(demos, pvo, backend, seed);
    const ValueMeta meta{backend, pvo.gamma, file_hash_hex(demos_path), seed,
                         pvo.epochs};
    save_value_function(result.values, meta, out);

    std::cout << "trained " << backend_name << " values over "
              << demos.trajectories.size() << " trajectories";
    if (!result.trace.train_loss.empty())
        std::cout << "; first loss " << format_double(result.trace.train_loss.front())
                  << ", last loss " << format_double(result.trace.train_loss.back());
    std::cout << "; snapshot at " << out << '\n';
    return 0;
}

int cmd_heatmap(const std::string& values_path, const std::string& out_dir,
                std::uint32_t maze_seed, int size, const std::string& style,
                int canvas) {
    const LoadedValueFunction loaded = load_value_function(values_path);

    int effective_canvas = canvas;
    if (loaded.values.backend() == Backend::Mlp) {
        const auto& net = std::get<MlpFn>(loaded.values.fn);
        int c = 1;
        while (4 * c * c < net.input_dim()) ++c;
        if (4 * c * c != net.input_dim())
            throw ConfigError("snapshot input size is not a 4*C*C canvas");
        effective_canvas = c;
    }

    const Maze maze = Maze::generate(maze_seed, size, size,
                                     maze_style_from_string(style), effective_canvas);
    const ValueGrid grid = evaluate_values(loaded.values, maze);

    fs::create_directories(out_dir);
    char name[48];
    std::snprintf(name, sizeof(name), "heatmap_seed%u_%dx%d", maze_seed, size, size);
    const fs::path csv = fs::path(out_dir) / (std::string(name) + ".csv");
    const fs::path pgm = fs::path(out_dir) / (std::string(name) + ".pgm");
    export_heatmap(grid, csv, pgm);
    std::cout << "wrote " << csv.string() << " and " << pgm.string() << '\n';
    return 0;
}

int cmd_train_agent(const std::string& mode_name, std::uint32_t level_seed,
                    int level_size, const std::string& style, int canvas,
                    const std::string& values_path, const std::string& out,
                    AgentConfig agent, std::optional<double> gamma,
                    std::uint64_t seed) {
    agent.mode = agent_mode_from_string(mode_name);

    std::optional<LoadedValueFunction> loaded;
    if (!values_path.empty()) {
        loaded = load_value_function(values_path);
        agent.gamma = gamma.value_or(loaded->meta.gamma);
    } else {
        agent.gamma = gamma.value_or(agent.gamma);
    }

    const Maze level = Maze::generate(level_seed, level_size, level_size,
                                      maze_style_from_string(style), canvas);
    const AgentResult result = train_agent(
        level, agent, loaded ? &loaded->values : nullptr, seed);
    save_metrics_csv(result.metrics, out);

    const double to90 = steps_to_success_threshold(result.metrics, 0.9);
    std::cout << mode_name << " on level seed " << level_seed << ": ";
    if (std::isinf(to90))
        std::cout << "never reached 90% greedy success";
    else
        std::cout << "reached 90% greedy success at " << format_double(to90)
                  << " env steps";
    std::cout << "; metrics at " << out << '\n';
    return 0;
}

int cmd_compare(const std::string& config_path, std::uint64_t seed,
                const std::optional<std::string>& out_dir) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    cfg.seed = seed;
    if (out_dir) cfg.output_dir = *out_dir;
    const RunManifest manifest = run_rl_comparison(cfg);
    std::cout << "comparison done; summary at "
              << (fs::path(cfg.output_dir) / manifest.summary_csv).string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"value learning from action-free demonstrations, and the RL agents "
                 "that consume the values"};
    app.require_subcommand(1);

    // gen-demos
    auto* gen = app.add_subcommand("gen-demos", "generate expert demonstrations");
    std::string gen_out;
    int gen_count = 1000;
    std::string gen_style = "empty";
    int gen_size_min = 4, gen_size_max = 10, gen_canvas = kDefaultCanvas;
    double gen_gamma = 0.99;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output .jsonl path")->required();
    gen->add_option("--count", gen_count, "number of trajectories");
    gen->add_option("--style", gen_style, "empty|obstacles");
    gen->add_option("--size-min", gen_size_min, "smallest maze side");
    gen->add_option("--size-max", gen_size_max, "largest maze side");
    gen->add_option("--canvas", gen_canvas, "observation canvas side");
    gen->add_option("--gamma", gen_gamma, "discount recorded in the header");
    gen->add_option("--seed", gen_seed, "generation seed")->required();

    // train-values
    auto* tv = app.add_subcommand("train-values",
                                  "train V on demonstrations (with --config: run the "
                                  "full demos->values->heatmaps pipeline)");
    std::string tv_config, tv_demos, tv_out, tv_backend = "mlp", tv_outdir;
    int tv_epochs = 200, tv_batch = 32;
    double tv_alpha = 1e-3, tv_eval_split = 0.02;
    double tv_gamma = -1.0;
    std::uint64_t tv_seed = 0;
    tv->add_option("--config", tv_config, "experiment config JSON (pipeline mode)");
    tv->add_option("--demos", tv_demos, "demonstration .jsonl file");
    tv->add_option("--out", tv_out, "value snapshot path");
    tv->add_option("--out-dir", tv_outdir, "pipeline output directory override");
    tv->add_option("--backend", tv_backend, "tabular|mlp");
    tv->add_option("--epochs", tv_epochs, "dataset passes");
    tv->add_option("--batch", tv_batch, "batch size");
    tv->add_option("--alpha", tv_alpha, "learning rate");
    tv->add_option("--eval-split", tv_eval_split, "held-out trajectory fraction");
    tv->add_option("--gamma", tv_gamma, "discount (default: demo header)");
    tv->add_option("--seed", tv_seed, "training seed")->required();

    // heatmap
    auto* hm = app.add_subcommand("heatmap", "render per-cell values of one maze");
    std::string hm_values, hm_out = ".", hm_style = "empty";
    std::uint32_t hm_seed = 0;
    int hm_size = kDefaultCanvas, hm_canvas = kDefaultCanvas;
    hm->add_option("--values", hm_values, "value snapshot path")->required();
    hm->add_option("--out", hm_out, "output directory");
    hm->add_option("--maze-seed", hm_seed, "maze seed")->required();
    hm->add_option("--size", hm_size, "maze side");
    hm->add_option("--style", hm_style, "empty|obstacles");
    hm->add_option("--canvas", hm_canvas, "canvas (tabular snapshots only)");

    // train-agent
    auto* ta = app.add_subcommand("train-agent", "train one Q-learning agent");
    std::string ta_mode, ta_style = "obstacles", ta_values, ta_out;
    std::uint32_t ta_level_seed = 0;
    int ta_level_size = 8, ta_canvas = kDefaultCanvas;
    double ta_gamma = -1.0;
    std::uint64_t ta_seed = 0;
    AgentConfig ta_agent;
    std::string ta_backend = "tabular";
    ta->add_option("--mode", ta_mode, "sparse|pvo-value|pvo-shaping")->required();
    ta->add_option("--level-seed", ta_level_seed, "level seed")->required();
    ta->add_option("--level-size", ta_level_size, "level side");
    ta->add_option("--style", ta_style, "empty|obstacles");
    ta->add_option("--canvas", ta_canvas, "observation canvas side");
    ta->add_option("--values", ta_values, "value snapshot (pvo modes)");
    ta->add_option("--out", ta_out, "metrics CSV path")->required();
    ta->add_option("--gamma", ta_gamma, "discount (default: value sidecar)");
    ta->add_option("--alpha", ta_agent.alpha, "learning rate");
    ta->add_option("--backend", ta_backend, "tabular|mlp");
    ta->add_option("--eps-start", ta_agent.eps_start, "initial exploration rate");
    ta->add_option("--eps-end", ta_agent.eps_end, "final exploration rate");
    ta->add_option("--eps-decay-frac", ta_agent.eps_decay_frac,
                   "fraction of steps spent annealing");
    ta->add_option("--replay", ta_agent.replay_capacity, "replay capacity");
    ta->add_option("--batch", ta_agent.batch_size, "batch size");
    ta->add_option("--target-sync", ta_agent.target_sync,
                   "frozen-copy sync interval (baseline)");
    ta->add_option("--steps", ta_agent.max_steps, "environment steps");
    ta->add_option("--eval-interval", ta_agent.eval_interval,
                   "env steps between greedy evaluations");
    ta->add_option("--eval-episodes", ta_agent.eval_episodes,
                   "greedy episodes per evaluation");
    ta->add_flag("--pure-shaping", ta_agent.pure_shaping,
                 "drop the env reward from the shaped signal");
    ta->add_option("--seed", ta_seed, "training seed")->required();

    // compare
    auto* cmp = app.add_subcommand("compare",
                                   "three agent modes x seeds on unseen levels");
    std::string cmp_config, cmp_outdir;
    std::uint64_t cmp_seed = 0;
    cmp->add_option("--config", cmp_config, "experiment config JSON")->required();
    cmp->add_option("--out-dir", cmp_outdir, "output directory override");
    cmp->add_option("--seed", cmp_seed, "master seed")->required();

    // verify
    auto* ver = app.add_subcommand("verify", "run the fast invariant suites");

    try {
        app.parse(argc, argv);

        if (gen->parsed())
            return cmd_gen_demos(gen_out, gen_count, gen_style, gen_size_min,
                                 gen_size_max, gen_canvas, gen_gamma, gen_seed);
        if (tv->parsed())
            return cmd_train_values(
                tv_config.empty() ? std::nullopt : std::optional(tv_config), tv_demos,
                tv_out, tv_backend, tv_epochs, tv_batch, tv_alpha, tv_eval_split,
                tv_gamma < 0 ? std::nullopt : std::optional(tv_gamma), tv_seed,
                tv_outdir.empty() ? std::nullopt : std::optional(tv_outdir));
        if (hm->parsed())
            return cmd_heatmap(hm_values, hm_out, hm_seed, hm_size, hm_style, hm_canvas);
        if (ta->parsed()) {
            ta_agent.backend = backend_from_string(ta_backend);
            return cmd_train_agent(ta_mode, ta_level_seed, ta_level_size, ta_style,
                                   ta_canvas, ta_values, ta_out, ta_agent,
                                   ta_gamma < 0 ? std::nullopt : std::optional(ta_gamma),
                                   ta_seed);
        }
        if (cmp->parsed())
            return cmd_compare(cmp_config, cmp_seed,
                               cmp_outdir.empty() ? std::nullopt
                                                  : std::optional(cmp_outdir));
        if (ver->parsed()) return run_verification_suites(std::cout) ? 0 : 3;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
