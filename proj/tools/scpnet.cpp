#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "scp/experiment.hpp"
#include "scp/log.hpp"

namespace fs = std::filesystem;
using namespace scp;

namespace {

constexpr int kUserError = 1;
constexpr int kInternalError = 2;

// Flags shared by train and ablate; only explicitly given flags override the config file.
struct RunFlags {
    std::string config;
    std::string manifest;
    std::string out;
    std::optional<long> seed;
    std::optional<long> t_max;
    std::optional<int> base_width;
    std::optional<int> image_size;
    std::optional<long> eval_every;
    std::optional<int> labeled_scans;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "Flat key = value config file");
        cmd->add_option("--manifest", manifest, "Dataset manifest (manifest.json)");
        cmd->add_option("--out", out, "Run (or ablation) output directory");
        cmd->add_option("--seed", seed, "Global seed");
        cmd->add_option("--t-max", t_max, "Training iterations");
        cmd->add_option("--base-width", base_width, "U-Net base channel width");
        cmd->add_option("--image-size", image_size, "Slice size after resize (multiple of 16)");
        cmd->add_option("--eval-every", eval_every, "Validation cadence in iterations (0 disables)");
        cmd->add_option("--labeled-scans", labeled_scans, "Number of labeled training scans (seeded draw)");
        cmd->add_option("--set", sets, "Override any config key: --set key=value (repeatable)");
    }

    ExperimentConfig resolve(ConfigEntries extra = {}) const {
        ExperimentConfig resolved;
        if (!config.empty()) apply_config(resolved, read_config_file(config), config);
        ConfigEntries flags;
        if (!manifest.empty()) flags.emplace_back("manifest", manifest);
        if (!out.empty()) flags.emplace_back("output_dir", out);
        if (seed) flags.emplace_back("seed", std::to_string(*seed));
        if (t_max) flags.emplace_back("t_max", std::to_string(*t_max));
        if (base_width) flags.emplace_back("base_width", std::to_string(*base_width));
        if (image_size) flags.emplace_back("image_size", std::to_string(*image_size));
        if (eval_every) flags.emplace_back("eval_every", std::to_string(*eval_every));
        if (labeled_scans) flags.emplace_back("labeled_scans", std::to_string(*labeled_scans));
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + s + "'");
            flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        for (auto& e : extra) flags.push_back(std::move(e));
        apply_config(resolved, flags, "command line");
        try {
            resolved.train.validate();
        } catch (const InvalidInput& e) {
            throw InvalidInput(std::string("config: ") + e.what());
        }
        return resolved;
    }
};

void check_device() {
    const char* device = std::getenv("SCPNET_DEVICE");
    if (device && std::string(device) != "cpu" && std::string(device) != "") {
        throw InvalidInput(std::string("SCPNET_DEVICE=") + device + ": only 'cpu' is available in this build");
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << text;
}

int run(int argc, char** argv) {
    CLI::App app{"Semi-supervised medical image segmentation with self-aware and cross-sample prototypes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "scpnet 1.0");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic blob dataset");
    SynthesisSpec spec;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Dataset directory")->required();
    synth->add_option("--cases", spec.cases, "Training cases");
    synth->add_option("--val-cases", spec.val_cases, "Validation cases (default: cases/7, at least 2)");
    synth->add_option("--test-cases", spec.test_cases, "Test cases (default: 2*cases/7, at least 4)");
    synth->add_option("--classes", spec.classes, "Classes including background");
    synth->add_option("--size", spec.size, "In-plane size");
    synth->add_option("--slices", spec.slices, "Slices per case");
    synth->add_option("--noise", spec.noise, "Gaussian noise standard deviation");
    synth->add_option("--distractors", spec.distractors, "Unlabeled distractor blobs per case");
    synth->add_option("--labeled-ratio", spec.labeled_ratio, "Fraction of training cases that are labeled");
    synth->add_option("--seed", spec.seed, "Seed");

    // convert
    auto* convert = app.add_subcommand("convert", "Convert a NIfTI-1 volume (and label) into the canonical format");
    std::string conv_image, conv_label, conv_dataset, conv_id, conv_split = "train";
    int conv_classes = 0;
    bool conv_labeled = false;
    convert->add_option("--image", conv_image, "Image volume (.nii or .nii.gz)")->required();
    convert->add_option("--label", conv_label, "Label volume (.nii or .nii.gz)");
    convert->add_option("--dataset", conv_dataset, "Dataset directory (manifest.json is created or updated)")
        ->required();
    convert->add_option("--case-id", conv_id, "Case identifier")->required();
    convert->add_option("--classes", conv_classes, "Classes including background")->required();
    convert->add_option("--split", conv_split, "train, val or test");
    convert->add_flag("--labeled", conv_labeled, "Use this training case's labels for supervision");

    // train
    auto* train = app.add_subcommand("train", "Train one model");
    RunFlags train_flags;
    train_flags.attach(train);
    bool no_spcc = false, no_cpcc = false, no_w1 = false, no_w2 = false, resume = false;
    train->add_flag("--no-spcc", no_spcc, "Disable the self-aware consistency loss");
    train->add_flag("--no-cpcc", no_cpcc, "Disable the cross-sample consistency loss");
    train->add_flag("--no-w1", no_w1, "Replace the stability weight with 1");
    train->add_flag("--no-w2", no_w2, "Replace the confidence weight with 1");
    train->add_flag("--resume", resume, "Continue from the run directory's last checkpoint");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the six-row loss ablation and print the comparison table");
    RunFlags ablate_flags;
    ablate_flags.attach(ablate);

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a run's checkpoint on a split");
    std::string eval_run, eval_ckpt = "best", eval_split = "test";
    eval->add_option("--run", eval_run, "Run directory")->required();
    eval->add_option("--checkpoint", eval_ckpt, "best, last, or a checkpoint path");
    eval->add_option("--split", eval_split, "train, val or test");

    // report
    auto* report = app.add_subcommand("report", "Tables and plots for one or more runs");
    std::vector<std::string> report_runs;
    ReportOptions report_opts;
    std::string report_out;
    report->add_option("runs", report_runs, "Run directories")->required();
    report->add_option("--out", report_out, "Output directory (default: <first run>/report)");
    report->add_option("--split", report_opts.split, "Split to evaluate");
    report->add_option("--checkpoint", report_opts.checkpoint, "best or last");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto parsed = app.get_subcommands();
        std::cerr << (parsed.empty() ? app.help() : parsed.back()->help());
        return kUserError;
    }

    check_device();

    if (*synth) {
        const auto m = synthesize_dataset(spec, synth_out);
        std::cout << "wrote " << m.cases.size() << " cases to " << synth_out << " (" << m.train.size() << " train, "
                  << m.val.size() << " val, " << m.test.size() << " test; " << m.labeled_case_ids.size()
                  << " labeled)\n";
    } else if (*convert) {
        std::optional<fs::path> label;
        if (!conv_label.empty()) label = conv_label;
        const auto volume = read_nifti_case(conv_image, label, conv_classes, conv_id);
        const auto m = add_case_to_dataset(conv_dataset, volume, conv_split, conv_labeled);
        std::cout << "added " << conv_id << " (" << volume.shape[0] << "x" << volume.shape[1] << "x"
                  << volume.shape[2] << ") to " << conv_dataset << "; manifest now lists " << m.cases.size()
                  << " cases\n";
    } else if (*train) {
        ConfigEntries toggles;
        if (no_spcc) toggles.emplace_back("spcc", "false");
        if (no_cpcc) toggles.emplace_back("cpcc", "false");
        if (no_w1) toggles.emplace_back("w1", "false");
        if (no_w2) toggles.emplace_back("w2", "false");
        const auto config = train_flags.resolve(toggles);
        const auto data = load_experiment_data(config);
        const auto outcome = run_experiment(config, data, resume);
        const auto names = default_class_names(data.class_count());
        std::vector<TableRow> rows{{"val", &outcome.val}};
        if (outcome.has_test) rows.push_back({"test", &outcome.test});
        std::cout << format_metrics_table(rows, names);
        std::cout << "run directory: " << outcome.run_dir.string() << "\n";
    } else if (*ablate) {
        const auto config = ablate_flags.resolve();
        const auto data = load_experiment_data(config);
        const auto outcome = run_ablation(config, data);
        std::cout << outcome.table;
        for (const auto& e : outcome.errors) {
            if (!e.empty()) return kInternalError;
        }
    } else if (*eval) {
        const auto config = load_run_config(eval_run);
        const fs::path ckpt = eval_ckpt == "best" || eval_ckpt == "last"
                                  ? fs::path(eval_run) / (eval_ckpt == "best" ? kBestCheckpoint : kLastCheckpoint)
                                  : fs::path(eval_ckpt);
        if (!fs::exists(ckpt)) throw InvalidInput("checkpoint not found: " + ckpt.string());
        const auto data = load_experiment_data(config);
        auto model = load_model(ckpt);
        const auto summary = evaluate_split(model, data, eval_split);
        std::cout << eval_split << " split, " << ckpt.filename().string() << "\n"
                  << format_metrics_table({{fs::path(eval_run).filename().string(), &summary}},
                                          default_class_names(data.class_count()));
        write_file(fs::path(eval_run) / ("eval_" + eval_split + ".json"), summary_to_json(summary).dump(2) + "\n");
    } else if (*report) {
        std::vector<fs::path> runs(report_runs.begin(), report_runs.end());
        report_opts.out_dir = report_out;
        std::cout << write_report(runs, report_opts);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternalError;
    }
}
