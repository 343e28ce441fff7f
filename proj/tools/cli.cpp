// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "config.hpp"
#include "offloadlab/adam.hpp"
#include "offloadlab/dp_sim.hpp"
#include "offloadlab/graph_model.hpp"
#include "offloadlab/training_engine.hpp"

namespace offloadlab::cli {

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::EquivalenceFailure: return kExitEquivalence;
        case ErrorCode::Divergence:
        case ErrorCode::NonFiniteLoss: return kExitDivergence;
        case ErrorCode::ConsistencyFailure: return kExitConsistency;
        case ErrorCode::IoError:
        case ErrorCode::AlreadyFused: return kExitFailure;
        default: return kExitUsage;
    }
}

namespace {

// Counts may be written as 1e9; they must still be whole numbers.
std::uint64_t whole_count(const char* flag, double v) {
    if (v != std::floor(v) || v > 1e18) throw CLI::ValidationError(flag, "expected a whole number");
    return static_cast<std::uint64_t>(v);
}

std::string gigabytes(std::uint64_t bytes) { return fmt::format("{:.1f} GB", static_cast<double>(bytes) / 1e9); }

void emit_json(const std::string& path, const nlohmann::json& j, std::ostream& out) {
    if (path == "-") {
        out << j.dump(2) << '\n';
        return;
    }
    std::ofstream file(path);
    if (!file) throw Error(ErrorCode::IoError, fmt::format("cannot write '{}'", path));
    file << j.dump(2) << '\n';
    if (!file) throw Error(ErrorCode::IoError, fmt::format("write to '{}' failed", path));
}

void emit_csv(const std::string& path, const TrainingRun& run) {
    std::ofstream file(path);
    if (!file) throw Error(ErrorCode::IoError, fmt::format("cannot write '{}'", path));
    write_csv(file, run);
    if (!file) throw Error(ErrorCode::IoError, fmt::format("write to '{}' failed", path));
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    const std::string ext = p.has_extension() ? p.extension().string() : ".csv";
    p.replace_extension();
    return p.string() + suffix + ext;
}

template <typename T>
void overlay(const CLI::Option* opt, T& dst, const T& src) {
    if (opt->count() > 0) dst = src;
}

// Flags shared by every subcommand. Values land in `flags` and are applied
// over the file/environment config by resolve().
struct Common {
    std::string config_path;
    std::string json_path;
    Config flags;
    CLI::Option* seed = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--json", c.json_path, "write the machine-readable report here ('-' for stdout)");
    c.seed = sub->add_option("--seed", c.flags.seed, "64-bit seed");
}

Config resolve_base(const Common& c) {
    Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
    apply_environment(cfg);
    overlay(c.seed, cfg.seed, c.flags.seed);
    return cfg;
}

struct AnalyzeCmd {
    Common common;
    CLI::Option* params = nullptr;
    CLI::Option* batch = nullptr;

    void attach(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("analyze", "enumerate offload strategies of the training data-flow graph");
        add_common(sub, common);
        params = sub->add_option_function<double>(
                        "--params", [this](double v) { common.flags.params = whole_count("--params", v); },
                        "parameter count M (1e9 style accepted)")
                     ->check(CLI::PositiveNumber);
        batch = sub->add_option("--batch", common.flags.batch, "batch size B")->check(CLI::PositiveNumber);
    }

    int run(std::ostream& out) const {
        Config cfg = resolve_base(common);
        overlay(params, cfg.params, common.flags.params);
        overlay(batch, cfg.batch, common.flags.batch);
        const ModelConfig mc{cfg.params, cfg.batch};
        mc.validate();
        cfg.hardware.validate();

        const auto reports = enumerate_strategies(mc);
        const StrategyReport best = optimal_strategy(mc);
        const StrategyReport streaming = layer_streaming_strategy(mc);
        out << format_strategy_table(mc, reports);
        fmt::print(out, "optimum: comm {}, gpu_mem {}, est. step {:.4g} s\n", gigabytes(best.comm_volume_bytes),
                   gigabytes(best.gpu_memory_bytes), estimate_step_time(mc, cfg.hardware, best));
        fmt::print(out, "layer streaming: comm {}, {}x the optimum, est. step {:.4g} s\n",
                   gigabytes(streaming.comm_volume_bytes),
                   static_cast<double>(streaming.comm_volume_bytes) / static_cast<double>(best.comm_volume_bytes),
                   estimate_step_time(mc, cfg.hardware, streaming));

        if (!common.json_path.empty()) {
            nlohmann::json j = strategies_json(mc, reports);
            j["layer_streaming"] = to_json(streaming);
            j["comm_ratio_streaming_to_optimal"] =
                static_cast<double>(streaming.comm_volume_bytes) / static_cast<double>(best.comm_volume_bytes);
            emit_json(common.json_path, j, out);
        }
        return kExitOk;
    }
};

struct BenchCmd {
    Common common;
    std::size_t elements = 1'000'000;
    std::size_t steps = 10;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    CLI::Option* tile_width = nullptr;
    CLI::Option* lane_width = nullptr;
    CLI::Option* unroll_width = nullptr;
    CLI::Option* worker_opt = nullptr;

    void attach(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("bench-adam", "time the tiled host Adam against the scalar reference");
        add_common(sub, common);
        sub->add_option_function<double>(
               "--elements", [this](double v) { elements = whole_count("--elements", v); }, "elements per shard")
            ->check(CLI::PositiveNumber);
        sub->add_option("--steps", steps, "optimizer steps")->check(CLI::PositiveNumber);
        worker_opt = sub->add_option("--workers", workers, "host threads (default: all cores)")
                         ->check(CLI::PositiveNumber);
        tile_width = sub->add_option("--tile-width", common.flags.tile.tile_width, "elements per tile");
        lane_width = sub->add_option("--lane-width", common.flags.tile.lane_width, "elements per lane group");
        unroll_width = sub->add_option("--unroll", common.flags.tile.unroll_width, "lane groups per iteration");
    }

    int run(std::ostream& out) const {
        Config cfg = resolve_base(common);
        overlay(tile_width, cfg.tile.tile_width, common.flags.tile.tile_width);
        overlay(lane_width, cfg.tile.lane_width, common.flags.tile.lane_width);
        overlay(unroll_width, cfg.tile.unroll_width, common.flags.tile.unroll_width);
        if (worker_opt->count() > 0 || cfg.tile.worker_count == TileConfig{}.worker_count) {
            cfg.tile.worker_count = workers;
        }

        const BenchReport r = bench_adam(elements, steps, cfg.tile, cfg.seed);
        fmt::print(out, "elements {}  steps {}  workers {}\n", r.elements, r.steps, r.tile.worker_count);
        fmt::print(out, "reference {:.6f} s  tiled {:.6f} s  speedup {:.2f}x\n", r.reference_secs, r.tiled_secs,
                   r.speedup);
        fmt::print(out, "checksum {}\n", r.checksum);
        if (!common.json_path.empty()) emit_json(common.json_path, to_json(r), out);
        return kExitOk;
    }
};

struct TrainFlags {
    CLI::Option* model = nullptr;
    CLI::Option* steps = nullptr;
    CLI::Option* dpu = nullptr;
    CLI::Option* dpu_after = nullptr;
    CLI::Option* overlap = nullptr;
    CLI::Option* alpha = nullptr;
    CLI::Option* features = nullptr;
    CLI::Option* rows = nullptr;
    CLI::Option* batch_size = nullptr;
    CLI::Option* micro_batches = nullptr;
    std::string model_name;
};

struct TrainCmd {
    Common common;
    TrainFlags f;
    std::string csv_path;
    bool compare = false;

    void attach(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("train", "train a toy model through the offload engine");
        add_common(sub, common);
        Config& c = common.flags;
        f.model = sub->add_option("--model", f.model_name, "linreg | logreg | mlp")
                      ->check(CLI::IsMember({"linreg", "logreg", "mlp"}));
        f.steps = sub->add_option("--steps", c.steps, "training steps")->check(CLI::PositiveNumber);
        f.dpu = sub->add_flag("--dpu", c.dpu, "delay the parameter update by one step");
        f.dpu_after = sub->add_option("--dpu-after", c.dpu_after, "first delayed step (default 40)")
                          ->check(CLI::PositiveNumber);
        f.overlap = sub->add_flag("--overlap", c.overlap, "run the delayed host update on its own thread");
        f.alpha = sub->add_option("--alpha", c.adam.alpha, "learning rate");
        f.features = sub->add_option("--features", c.features, "input dimension")->check(CLI::PositiveNumber);
        f.rows = sub->add_option("--rows", c.rows, "dataset rows")->check(CLI::PositiveNumber);
        f.batch_size = sub->add_option("--batch-size", c.batch_size, "rows per step, 0 for all");
        f.micro_batches = sub->add_option("--micro-batches", c.micro_batches, "gradient accumulation slices")
                              ->check(CLI::PositiveNumber);
        sub->add_option("--out", csv_path, "CSV trace path");
        sub->add_flag("--compare", compare, "run with and without the delayed update and compare");
    }

    Config resolve() const {
        Config cfg = resolve_base(common);
        const Config& c = common.flags;
        if (f.model->count() > 0) cfg.kind = parse_model_kind(f.model_name);
        overlay(f.steps, cfg.steps, c.steps);
        overlay(f.dpu, cfg.dpu, c.dpu);
        overlay(f.dpu_after, cfg.dpu_after, c.dpu_after);
        overlay(f.overlap, cfg.overlap, c.overlap);
        overlay(f.alpha, cfg.adam.alpha, c.adam.alpha);
        overlay(f.features, cfg.features, c.features);
        overlay(f.rows, cfg.rows, c.rows);
        overlay(f.batch_size, cfg.batch_size, c.batch_size);
        overlay(f.micro_batches, cfg.micro_batches, c.micro_batches);
        return cfg;
    }

    static void summarize(std::ostream& out, const TrainingRun& run) {
        std::uint64_t down = 0;
        std::uint64_t up = 0;
        for (const StepTrace& t : run.trace) {
            down += t.bytes_down;
            up += t.bytes_up;
        }
        fmt::print(out, "{}: steps {}  final loss {:.9g}  bytes down {}  bytes up {}\n", to_string(run.mode),
                   run.steps, run.final_loss(), down, up);
    }

    int run(std::ostream& out, std::ostream& err) const {
        const Config cfg = resolve();
        const ModelSpec spec = cfg.model_spec();
        spec.validate();
        const Dataset data = cfg.dataset();
        const std::vector<float> init = initial_parameters(spec, cfg.seed);
        EngineOptions opt;
        opt.tile = cfg.tile;
        opt.batch_size = cfg.batch_size;
        opt.micro_batches = cfg.micro_batches;
        const DpuConfig dpu{cfg.dpu || compare, cfg.dpu_after, cfg.overlap};

        if (!compare) {
            const TrainingRun run = train(spec, init, data, cfg.steps, cfg.adam, dpu, opt);
            if (!csv_path.empty()) emit_csv(csv_path, run);
            summarize(out, run);
            if (!common.json_path.empty()) emit_json(common.json_path, to_json(run), out);
            check_divergence(run);
            return kExitOk;
        }

        const TrainingRun sync = train(spec, init, data, cfg.steps, cfg.adam, DpuConfig{}, opt);
        const TrainingRun delayed = train(spec, init, data, cfg.steps, cfg.adam, dpu, opt);
        if (!csv_path.empty()) {
            emit_csv(with_suffix(csv_path, ".sync"), sync);
            emit_csv(with_suffix(csv_path, ".dpu"), delayed);
        }
        summarize(out, sync);
        summarize(out, delayed);
        check_divergence(sync);
        check_divergence(delayed);
        const double gap = std::abs(static_cast<double>(delayed.final_loss()) - sync.final_loss()) /
                           std::abs(static_cast<double>(sync.final_loss()));
        fmt::print(out, "final-loss relative gap {:.4f}% ({} 2%)\n", 100.0 * gap, gap <= 0.02 ? "within" : "OUTSIDE");
        if (!common.json_path.empty()) {
            emit_json(common.json_path,
                      {{"schema_version", 1}, {"sync", to_json(sync)}, {"dpu", to_json(delayed)},
                       {"final_loss_relative_gap", gap}},
                      out);
        }
        if (gap > 0.02) err << "warning: delayed-update run ended more than 2% away from the sync run\n";
        return kExitOk;
    }
};

struct SimulateCmd {
    Common common;
    std::vector<std::size_t> workers = {1, 2, 4, 8};
    std::size_t params = 1000;
    std::size_t steps = 20;
    std::size_t rows = 64;
    bool parallel = false;
    std::string csv_dir;
    CLI::Option* alpha = nullptr;

    void attach(CLI::App& app) {
        CLI::App* sub = app.add_subcommand("simulate-dp", "simulate data-parallel workers with partitioned host states");
        add_common(sub, common);
        sub->add_option("--workers", workers, "worker counts to sweep, comma separated")->delimiter(',')->check(CLI::PositiveNumber);
        sub->add_option("--params", params, "linear-model parameter count")->check(CLI::PositiveNumber);
        sub->add_option("--steps", steps, "training steps")->check(CLI::PositiveNumber);
        sub->add_option("--rows", rows, "global batch rows")->check(CLI::PositiveNumber);
        sub->add_flag("--parallel", parallel, "run each worker on its own thread");
        sub->add_option("--csv-dir", csv_dir, "directory for per-worker CSV traces");
        alpha = sub->add_option("--alpha", common.flags.adam.alpha, "learning rate");
    }

    int run(std::ostream& out, std::ostream& err) const {
        Config cfg = resolve_base(common);
        overlay(alpha, cfg.adam.alpha, common.flags.adam.alpha);
        const ModelSpec spec = ModelSpec::linear(params);
        const Dataset data = make_linear_dataset(rows, params, cfg.seed);
        const std::vector<float> init = initial_parameters(spec, cfg.seed);
        DpOptions opt;
        opt.engine.tile = cfg.tile;
        opt.parallel = parallel;

        nlohmann::json runs = nlohmann::json::array();
        bool consistent = true;
        bool diverged = false;
        fmt::print(out, "{:>3} {:>16} {:>16} {:>18} {:>10}\n", "K", "host_link/step", "fabric/step",
                   "max_worker_host", "replicas");
        for (const std::size_t k : workers) {
            const DpRun run = run_dp(spec, init, data, steps, k, cfg.adam, opt);
            const DpReport& r = run.report;
            fmt::print(out, "{:>3} {:>16} {:>16} {:>18} {:>10}\n", k, r.host_link_bytes_per_step,
                       r.fabric_bytes_per_step, r.max_worker_host_bytes,
                       r.replica_consistent ? "identical" : "DIVERGED");
            consistent = consistent && r.replica_consistent && r.host_link_constant &&
                         r.host_link_bytes_per_step == 4 * static_cast<std::uint64_t>(params);
            diverged = diverged || r.diverged;
            runs.push_back(to_json(r));
            if (!csv_dir.empty()) {
                std::filesystem::create_directories(csv_dir);
                for (std::size_t w = 0; w < run.workers.size(); ++w) {
                    emit_csv(fmt::format("{}/k{}_worker{}.csv", csv_dir, k, w), run.workers[w]);
                }
            }
        }
        if (!common.json_path.empty()) {
            emit_json(common.json_path, {{"schema_version", 1}, {"param_count", params}, {"runs", runs}}, out);
        }
        if (diverged) throw Error(ErrorCode::Divergence, "a data-parallel run produced a non-finite loss");
        if (!consistent) {
            err << "consistency check failed\n";
            return kExitConsistency;
        }
        fmt::print(out, "host-link bytes per step constant across K: {}\n", 4 * params);
        return kExitOk;
    }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Offload planning, host optimizer and offloaded-training lab", "offloadlab"};
    app.require_subcommand(1);
    app.footer(config_reference());

    AnalyzeCmd analyze;
    BenchCmd bench;
    TrainCmd train_cmd;
    SimulateCmd simulate;
    analyze.attach(app);
    bench.attach(app);
    train_cmd.attach(app);
    simulate.attach(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand("analyze")) return analyze.run(out);
        if (app.got_subcommand("bench-adam")) return bench.run(out);
        if (app.got_subcommand("train")) return train_cmd.run(out, err);
        return simulate.run(out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace offloadlab::cli
