#include "pamt_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "pamt/data/dataset.hpp"
#include "pamt/eval/cluster_panel.hpp"
#include "pamt/eval/report.hpp"
#include "pamt/numerics/errors.hpp"
#include "pamt/trainer/pipeline.hpp"
#include "pamt/trainer/run_io.hpp"

namespace pamt::cli {

namespace fs = std::filesystem;

namespace {

struct TrainOptions {
    TrainConfig config;
    std::string strategy = "pamt";
    std::string head = "gated_attention";
    bool no_rps = false;
    bool no_pvp = false;
    bool no_amt = false;
    std::string adapter_positions;  // comma-separated; empty means the last block

    TrainConfig resolve() const {
        TrainConfig c = config;
        c.strategy = parse_tuning_strategy(strategy);
        c.head = parse_mil_head_kind(head);
        c.components = {!no_rps, !no_pvp, !no_amt};
        if (!adapter_positions.empty()) {
            std::set<std::size_t> positions;
            std::stringstream in(adapter_positions);
            for (std::string item; std::getline(in, item, ',');) {
                positions.insert(std::stoul(item));
            }
            c.backbone.adapter_positions = std::move(positions);
        }
        return c;
    }
};

std::vector<std::string> strategy_names() {
    std::vector<std::string> out;
    for (auto s : all_strategies()) out.emplace_back(to_string(s));
    return out;
}

void add_train_options(CLI::App* app, TrainOptions& o, bool with_seed) {
    TrainConfig& c = o.config;
    app->add_option("--strategy", o.strategy, "Tuning strategy")
        ->check(CLI::IsMember(strategy_names()))
        ->capture_default_str();
    app->add_option("--head", o.head, "MIL head")
        ->check(CLI::IsMember({"gated_attention", "mean_pooling", "max_pooling"}))
        ->capture_default_str();
    if (with_seed)
        app->add_option("--seed", c.seed, "Run seed (falls back to PAMT_SEED)")->envname("PAMT_SEED")->capture_default_str();
    app->add_option("--train-fraction", c.train_fraction, "Fraction of training bags kept")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app->add_option("--epochs", c.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr", c.adam.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--weight-decay", c.adam.weight_decay, "Adam L2 weight decay")->capture_default_str();
    app->add_option("--prompt-lr", c.prompt_lr0, "Initial SGD learning rate for prompts")->capture_default_str();
    app->add_option("--topk", c.topk, "Patches kept per bag (K)")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--clusters", c.clusters, "Prototype count (C)")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--pad-size", c.pad_size, "Prompt border width (S)")->capture_default_str();
    app->add_option("--attention-dim", c.attention_dim, "Attention hidden size (L)")->capture_default_str();
    app->add_option("--scorer-epochs", c.scorer_epochs, "Patch scorer epochs")->capture_default_str();
    app->add_option("--scorer-lr", c.scorer_lr, "Patch scorer Adam learning rate")->capture_default_str();
    app->add_option("--kmeans-iters", c.kmeans_max_iters, "k-means iteration cap")->capture_default_str();
    app->add_option("--kmeans-tol", c.kmeans_tol, "k-means centroid shift tolerance")->capture_default_str();
    app->add_option("--block-channels", c.backbone.block_channels, "Backbone channels per block")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--adapter-positions", o.adapter_positions, "Blocks receiving adapters, comma-separated (default: last)")
        ->check(CLI::Validator(
            [](std::string& v) -> std::string {
                const bool ok = v.find_first_not_of("0123456789,") == std::string::npos &&
                                v.find(",,") == std::string::npos && (v.empty() || (v.front() != ',' && v.back() != ','));
                return ok ? std::string{} : "expected comma-separated block indices, got '" + v + "'";
            },
            "INDEX,..."));
    app->add_option("--bottleneck-ratio", c.backbone.adapter_bottleneck_ratio, "Adapter bottleneck ratio r")
        ->capture_default_str();
    app->add_option("--backbone-seed", c.backbone_seed, "Seed of the frozen backbone weights")->capture_default_str();
    app->add_option("--split-seed", c.split_seed, "Seed of the train/val/test partition")->capture_default_str();
    app->add_option("--train-ratio", c.ratios.train, "Train split ratio")->capture_default_str();
    app->add_option("--val-ratio", c.ratios.val, "Validation split ratio")->capture_default_str();
    app->add_option("--test-ratio", c.ratios.test, "Test split ratio")->capture_default_str();
    app->add_flag("--no-rps", o.no_rps, "Disable representative patch sampling (use every patch)");
    app->add_flag("--no-pvp", o.no_pvp, "Disable prototypical visual prompts");
    app->add_flag("--no-amt", o.no_amt, "Disable adapter blocks");
}

std::string fraction_tag(double f) {
    std::ostringstream o;
    o << f;
    return o.str();
}

std::string run_name(const TrainConfig& c) {
    return std::string(to_string(c.strategy)) + "-" + c.components.label() + "-f" + fraction_tag(c.train_fraction) +
           "-s" + std::to_string(c.seed);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

RunResult train_one(std::span<const WsiBag> bags, const TrainConfig& config, Stage1Cache& cache, const fs::path& dir,
                    const fs::path& data_dir) {
    Pipeline pipeline(bags, config, &cache);
    RunResult r = pipeline.run();
    write_run(dir, r, {data_dir / "dataset.bin", data_dir / "manifest.csv"});
    if (r.centroids) export_cluster_panel(*r.centroids, r.assignment, bags, dir / "clusters.png");
    return r;
}

void print_result(std::ostream& out, const std::string& name, const RunResult& r) {
    out << name << ": test auc " << std::fixed << std::setprecision(4) << r.test.auc << " f1 " << r.test.f1 << " acc "
        << r.test.acc << " (best epoch " << r.best_epoch << ", " << r.trainable_params << " trainable params)\n"
        << std::defaultfloat;
}

std::vector<RunSummary> collect_runs(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<RunSummary> runs;
    for (const auto& f : files) runs.push_back(read_run_summary(f));
    return runs;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"PAMT training engine: synthetic MIL data, representative patch sampling, prototype prompts and "
                 "adapter tuning over a frozen backbone"};
    app.name("pamt");
    app.require_subcommand(1);
    // Subcommand options live under a [generate], [train] or [ablate] section.
    app.set_config("--config", "", "Configuration file (TOML/INI); options go under the subcommand's section");
    app.fallthrough();

    // generate
    SyntheticConfig syn;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate", "Generate a synthetic bag dataset");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n-bags", syn.n_bags, "Number of bags")->capture_default_str();
    gen->add_option("--min-patches", syn.min_patches, "Minimum patches per bag")->capture_default_str();
    gen->add_option("--max-patches", syn.max_patches, "Maximum patches per bag")->capture_default_str();
    gen->add_option("--patch-size", syn.patch_size, "Patch height and width")->capture_default_str();
    gen->add_option("--witness-rate", syn.witness_rate, "Positive-patch fraction in positive bags")->capture_default_str();
    gen->add_option("--signal-strength", syn.signal_strength, "Witness blob amplitude")->capture_default_str();
    gen->add_option("--noise-std", syn.noise_std, "Texture noise amplitude")->capture_default_str();
    gen->add_option("--blob-sigma", syn.blob_sigma, "Witness blob radius (pixels)")->capture_default_str();
    gen->add_option("--max-nuclei", syn.max_nuclei, "Maximum distractor dots per patch")->capture_default_str();
    gen->add_option("--seed", syn.seed, "Dataset seed (falls back to PAMT_SEED)")->envname("PAMT_SEED")->capture_default_str();

    // train
    TrainOptions train_opts;
    std::string train_data, train_out;
    auto* train = app.add_subcommand("train", "Run the pipeline once and write a run directory");
    train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", train_out, "Run directory")->required();
    add_train_options(train, train_opts, true);

    // ablate
    TrainOptions ablate_opts;
    std::string ablate_data, ablate_out, grid = "both";
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<double> fractions{1.0};
    auto* ablate = app.add_subcommand("ablate", "Run a strategy/component grid over seeds and fractions");
    ablate->add_option("--data", ablate_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--out", ablate_out, "Output directory")->required();
    ablate->add_option("--seeds", seeds, "Seeds (falls back to PAMT_SEED)")
        ->delimiter(',')
        ->envname("PAMT_SEED")
        ->capture_default_str();
    ablate->add_option("--fractions", fractions, "Training fractions")->delimiter(',')->capture_default_str();
    ablate->add_option("--grid", grid, "strategies, components, both, or single (just --strategy)")
        ->check(CLI::IsMember({"strategies", "components", "both", "single"}))
        ->capture_default_str();
    add_train_options(ablate, ablate_opts, false);

    // report
    std::string report_runs, report_out;
    auto* report = app.add_subcommand("report", "Aggregate run directories into tables");
    report->add_option("--runs", report_runs, "Directory searched recursively for metrics.json")
        ->required()
        ->check(CLI::ExistingDirectory);
    report->add_option("--out", report_out, "Output directory")->required();

    // export-clusters
    std::string export_run, export_data, export_out;
    std::size_t per_row = 8;
    auto* exp = app.add_subcommand("export-clusters", "Render the nearest patches of every prototype as a PNG grid");
    exp->add_option("--run", export_run, "Run directory with centroids.csv and assignments.csv")
        ->required()
        ->check(CLI::ExistingDirectory);
    exp->add_option("--data", export_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    exp->add_option("--out", export_out, "Output PNG path")->required();
    exp->add_option("--per-row", per_row, "Patches per cluster row")->check(CLI::PositiveNumber)->capture_default_str();

    std::vector<const char*> argv{"pamt"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run 'pamt --help' for usage\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            const auto bags = generate_dataset(syn);
            save_dataset(gen_out, bags);
            write_file(fs::path(gen_out) / "config.ini", "[generate]\n" + gen->config_to_str(true, false));
            out << "wrote " << bags.size() << " bags to " << gen_out << " (checksum " << dataset_checksum(bags)
                << ")\n";
        } else if (train->parsed()) {
            const TrainConfig config = train_opts.resolve();
            const auto bags = load_dataset(train_data);
            Stage1Cache cache;
            const RunResult r = train_one(bags, config, cache, train_out, train_data);
            write_file(fs::path(train_out) / "config.ini", "[train]\n" + train->config_to_str(true, false));
            print_result(out, run_name(config), r);
        } else if (ablate->parsed()) {
            const TrainConfig base = ablate_opts.resolve();
            std::vector<TrainConfig> grid_configs;
            auto with = [&base](TuningStrategy s, ComponentToggles t) {
                TrainConfig c = base;
                c.strategy = s;
                c.components = t;
                return c;
            };
            const bool rps = base.components.rps;
            if (grid == "components" || grid == "both") {
                grid_configs.push_back(with(TuningStrategy::frozen_baseline, {false, false, false}));
                grid_configs.push_back(with(TuningStrategy::frozen_baseline, {true, false, false}));
                grid_configs.push_back(with(TuningStrategy::pamt, {true, true, false}));
                grid_configs.push_back(with(TuningStrategy::pamt, {true, false, true}));
                grid_configs.push_back(with(TuningStrategy::pamt, {true, true, true}));
            }
            if (grid == "strategies" || grid == "both") {
                for (auto s : all_strategies()) {
                    ComponentToggles t{rps, base.components.pvp, base.components.amt};
                    if (s != TuningStrategy::pamt) t.pvp = t.amt = false;
                    const TrainConfig c = with(s, t);
                    const bool dup = std::any_of(grid_configs.begin(), grid_configs.end(), [&c](const TrainConfig& g) {
                        return g.strategy == c.strategy && g.components.label() == c.components.label();
                    });
                    if (!dup) grid_configs.push_back(c);
                }
            }
            if (grid == "single") grid_configs.push_back(base);

            const auto bags = load_dataset(ablate_data);
            Stage1Cache cache;
            std::vector<RunSummary> runs;
            for (double fraction : fractions) {
                for (const auto& g : grid_configs) {
                    for (auto seed : seeds) {
                        TrainConfig c = g;
                        c.seed = seed;
                        c.train_fraction = fraction;
                        const std::string name = run_name(c);
                        const RunResult r = train_one(bags, c, cache, fs::path(ablate_out) / "runs" / name, ablate_data);
                        print_result(out, name, r);
                        runs.push_back(summarize_run(r));
                    }
                }
            }
            const auto rows = build_report(runs);
            write_report(ablate_out, rows);
            out << "wrote " << runs.size() << " runs and " << rows.size() << " table rows to " << ablate_out << "\n";
        } else if (report->parsed()) {
            const auto runs = collect_runs(report_runs);
            const auto rows = build_report(runs);
            write_report(report_out, rows);
            out << "aggregated " << runs.size() << " runs into " << rows.size() << " rows\n";
        } else if (exp->parsed()) {
            const Centroids centroids = read_centroids_csv(fs::path(export_run) / "centroids.csv");
            const Assignment assignment = read_assignments_csv(fs::path(export_run) / "assignments.csv");
            const auto bags = load_dataset(export_data);
            export_cluster_panel(centroids, assignment, bags, export_out, per_row);
            out << "wrote " << export_out << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace pamt::cli
