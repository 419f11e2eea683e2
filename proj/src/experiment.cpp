#include "scp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "scp/log.hpp"
#include "scp/nn/checkpoint.hpp"
#include "scp/plot.hpp"

namespace scp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidInput("expected a boolean (true/false), got '" + v + "'");
}

long parse_long(const std::string& v) {
    std::size_t used = 0;
    long out = 0;
    try {
        out = std::stol(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw InvalidInput("expected an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out)) throw InvalidInput("expected a number, got '" + v + "'");
    return out;
}

int parse_int(const std::string& v) {
    const long l = parse_long(v);
    if (l < -2147483647L || l > 2147483647L) throw InvalidInput("integer out of range: '" + v + "'");
    return static_cast<int>(l);
}

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string b2s(bool b) { return b ? "true" : "false"; }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"manifest", [](auto& c, auto& v) { c.manifest = v; }, [](auto& c) { return c.manifest.string(); }},
        {"output_dir", [](auto& c, auto& v) { c.output_dir = v; }, [](auto& c) { return c.output_dir.string(); }},
        {"image_size", [](auto& c, auto& v) { c.image_size = parse_int(v); },
         [](auto& c) { return std::to_string(c.image_size); }},
        {"labeled_scans", [](auto& c, auto& v) { c.labeled_scans = parse_int(v); },
         [](auto& c) { return std::to_string(c.labeled_scans); }},
        {"seed", [](auto& c, auto& v) { c.train.seed = static_cast<std::uint64_t>(parse_long(v)); },
         [](auto& c) { return std::to_string(c.train.seed); }},
        {"t_max", [](auto& c, auto& v) { c.train.t_max = parse_long(v); },
         [](auto& c) { return std::to_string(c.train.t_max); }},
        {"base_lr", [](auto& c, auto& v) { c.train.base_lr = parse_real(v); },
         [](auto& c) { return g17(c.train.base_lr); }},
        {"poly_power", [](auto& c, auto& v) { c.train.poly_power = parse_real(v); },
         [](auto& c) { return g17(c.train.poly_power); }},
        {"momentum", [](auto& c, auto& v) { c.train.momentum = parse_real(v); },
         [](auto& c) { return g17(c.train.momentum); }},
        {"weight_decay", [](auto& c, auto& v) { c.train.weight_decay = parse_real(v); },
         [](auto& c) { return g17(c.train.weight_decay); }},
        {"labeled_per_batch", [](auto& c, auto& v) { c.train.batch.labeled = parse_int(v); },
         [](auto& c) { return std::to_string(c.train.batch.labeled); }},
        {"unlabeled_per_batch", [](auto& c, auto& v) { c.train.batch.unlabeled = parse_int(v); },
         [](auto& c) { return std::to_string(c.train.batch.unlabeled); }},
        {"spcc", [](auto& c, auto& v) { c.train.toggles.spcc = parse_bool(v); },
         [](auto& c) { return b2s(c.train.toggles.spcc); }},
        {"cpcc", [](auto& c, auto& v) { c.train.toggles.cpcc = parse_bool(v); },
         [](auto& c) { return b2s(c.train.toggles.cpcc); }},
        {"w1", [](auto& c, auto& v) { c.train.toggles.w1 = parse_bool(v); },
         [](auto& c) { return b2s(c.train.toggles.w1); }},
        {"w2", [](auto& c, auto& v) { c.train.toggles.w2 = parse_bool(v); },
         [](auto& c) { return b2s(c.train.toggles.w2); }},
        {"distance",
         [](auto& c, auto& v) {
             if (v == "squared") c.train.distance = ConsistencyDistance::Squared;
             else if (v == "absolute") c.train.distance = ConsistencyDistance::Absolute;
             else throw InvalidInput("expected squared or absolute, got '" + v + "'");
         },
         [](auto& c) { return std::string(c.train.distance == ConsistencyDistance::Squared ? "squared" : "absolute"); }},
        {"prototype_source",
         [](auto& c, auto& v) {
             if (v == "predicted") c.train.ground_truth_prototypes = false;
             else if (v == "ground_truth") c.train.ground_truth_prototypes = true;
             else throw InvalidInput("expected predicted or ground_truth, got '" + v + "'");
         },
         [](auto& c) { return std::string(c.train.ground_truth_prototypes ? "ground_truth" : "predicted"); }},
        {"feature_tap",
         [](auto& c, auto& v) {
             if (v == "final") c.train.tap = nn::FeatureTap::Final;
             else if (v == "penultimate") c.train.tap = nn::FeatureTap::Penultimate;
             else throw InvalidInput("expected final or penultimate, got '" + v + "'");
         },
         [](auto& c) { return std::string(c.train.tap == nn::FeatureTap::Final ? "final" : "penultimate"); }},
        {"base_width", [](auto& c, auto& v) { c.train.base_width = parse_int(v); },
         [](auto& c) { return std::to_string(c.train.base_width); }},
        {"eval_every", [](auto& c, auto& v) { c.train.eval_every = parse_long(v); },
         [](auto& c) { return std::to_string(c.train.eval_every); }},
        {"checkpoint_every", [](auto& c, auto& v) { c.train.checkpoint_every = parse_long(v); },
         [](auto& c) { return std::to_string(c.train.checkpoint_every); }},
        {"augment", [](auto& c, auto& v) { c.train.augment.enabled = parse_bool(v); },
         [](auto& c) { return b2s(c.train.augment.enabled); }},
        {"free_rotation", [](auto& c, auto& v) { c.train.augment.free_rotation = parse_bool(v); },
         [](auto& c) { return b2s(c.train.augment.free_rotation); }},
        {"check_invariants", [](auto& c, auto& v) { c.train.check_invariants = parse_bool(v); },
         [](auto& c) { return b2s(c.train.check_invariants); }},
    };
    return f;
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + file.string());
    out << text;
}

std::string fmt(const char* f, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path pick_checkpoint(const fs::path& run_dir, const std::string& which) {
    if (which != "best" && which != "last") return which;  // explicit path
    fs::path p = run_dir / (which == "best" ? kBestCheckpoint : kLastCheckpoint);
    if (which == "best" && !fs::exists(p)) p = run_dir / kLastCheckpoint;
    if (!fs::exists(p)) throw InvalidInput("no checkpoint in " + run_dir.string() + " (looked for " + p.string() + ")");
    return p;
}

}  // namespace

// ---------------------------------------------------------------- config file

ConfigEntries parse_config_text(const std::string& text, const std::string& source) {
    ConfigEntries out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidInput(source + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw InvalidInput(source + ":" + std::to_string(number) + ": empty key");
        out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
    }
    return out;
}

ConfigEntries read_config_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw InvalidInput("cannot read config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), file.string());
}

void apply_config(ExperimentConfig& config, const ConfigEntries& entries, const std::string& source) {
    for (const auto& [key, value] : entries) {
        auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.key == key; });
        if (it == fields().end()) throw InvalidInput(source + ": unknown config key '" + key + "'");
        try {
            it->set(config, value);
        } catch (const InvalidInput& e) {
            throw InvalidInput(source + ": key '" + key + "': " + e.what());
        }
    }
}

std::string format_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

// ---------------------------------------------------------------- runs

SliceDataset load_experiment_data(const ExperimentConfig& config) {
    if (config.manifest.empty()) throw InvalidInput("config: key 'manifest' is required");
    if (config.image_size < 16 || config.image_size % 16 != 0) {
        throw InvalidInput("config: key 'image_size': must be a positive multiple of 16");
    }
    if (config.labeled_scans < 0) throw InvalidInput("config: key 'labeled_scans': must be >= 0");
    auto manifest = load_manifest(config.manifest);
    if (config.labeled_scans > 0) {
        manifest.labeled_case_ids = select_labeled_cases(manifest, config.labeled_scans, config.train.seed);
    }
    return SliceDataset::load(std::move(manifest), config.manifest.parent_path(), config.image_size);
}

ExperimentConfig load_run_config(const fs::path& run_dir) {
    const auto file = run_dir / kRunConfigFile;
    if (!fs::exists(file)) throw InvalidInput(run_dir.string() + " is not a run directory (no " + kRunConfigFile + ")");
    ExperimentConfig config;
    apply_config(config, read_config_file(file), file.string());
    return config;
}

nn::UNet<float> load_model(const fs::path& checkpoint) {
    if (!fs::exists(checkpoint)) throw InvalidInput("checkpoint not found: " + checkpoint.string());
    const auto manifest = nn::read_checkpoint_manifest(checkpoint);
    nn::UNet<float> model(nn::architecture_from_json(manifest.at("architecture")));
    nn::load_checkpoint(checkpoint, model, nullptr);
    return model;
}

RunOutcome run_experiment(const ExperimentConfig& config, const SliceDataset& data, bool resume) {
    config.train.validate();
    RunOutcome outcome;
    outcome.run_dir = config.output_dir;
    fs::create_directories(config.output_dir);
    write_text(config.output_dir / kRunConfigFile, format_config(config));

    Trainer trainer(config.train, data);
    outcome.fit = trainer.fit(config.output_dir, resume);

    auto model = load_model(pick_checkpoint(config.output_dir, "best"));
    json results;
    results["checkpoint"] = outcome.fit.best_checkpoint.empty() ? kLastCheckpoint : kBestCheckpoint;
    results["best_iteration"] = outcome.fit.best_iteration;
    if (!data.split_cases("val").empty()) {
        outcome.val = evaluate_split(model, data, "val");
        results["val"] = summary_to_json(outcome.val);
    }
    if (!data.split_cases("test").empty()) {
        outcome.test = evaluate_split(model, data, "test");
        outcome.has_test = true;
        results["test"] = summary_to_json(outcome.test);
    }
    write_text(config.output_dir / kResultsFile, results.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------- ablation

const std::array<AblationRow, 6>& ablation_rows() {
    static const std::array<AblationRow, 6> rows = {{
        {"row1_seg", {false, false, false, false}},
        {"row2_spcc", {true, false, false, false}},
        {"row3_cpcc", {false, true, true, true}},
        {"row4_both_no_w", {true, true, false, false}},
        {"row5_both_w1", {true, true, true, false}},
        {"row6_full", {true, true, true, true}},
    }};
    return rows;
}

std::vector<std::string> default_class_names(int class_count) {
    std::vector<std::string> names;
    for (int c = 1; c < class_count; ++c) names.push_back("class" + std::to_string(c));
    return names;
}

std::string format_ablation_table(const AblationOutcome& outcome, const std::vector<std::string>& class_names,
                                  bool test_split) {
    char buf[64];
    std::ostringstream out;
    out << (test_split ? "test split" : "validation split") << '\n';
    out << "row  seg  spcc  cpcc  w1    w2   ";
    for (const auto& n : class_names) {
        std::snprintf(buf, sizeof buf, "%10s", n.c_str());
        out << buf;
    }
    out << "   Avg DSC  Avg ASSD\n";
    const auto& rows = ablation_rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i].toggles;
        auto mark = [](bool b) { return b ? "x     " : "-     "; };
        out << i + 1 << "    x    " << mark(t.spcc) << mark(t.cpcc) << (t.cpcc ? mark(t.w1) : "      ")
            << (t.cpcc ? mark(t.w2) : "      ");
        const EvaluationSummary* s = nullptr;
        if (const auto& run = outcome.runs[i]) s = test_split ? (run->has_test ? &run->test : nullptr) : &run->val;
        if (!s || s->cases.empty()) {
            out << "(failed" << (outcome.errors[i].empty() ? "" : ": " + outcome.errors[i]) << ")\n";
            continue;
        }
        for (double d : s->class_dsc) out << fmt("%10.2f", d);
        out << fmt("%10.2f", s->mean_dsc) << (s->mean_assd ? fmt("%10.2f", *s->mean_assd) : std::string("       n/a"))
            << '\n';
    }
    return out.str();
}

AblationOutcome run_ablation(const ExperimentConfig& base, const SliceDataset& data) {
    AblationOutcome outcome;
    fs::create_directories(base.output_dir);
    json summary = json::array();
    for (const auto& row : ablation_rows()) {
        ExperimentConfig config = base;
        config.train.toggles = row.toggles;
        config.output_dir = base.output_dir / row.name;
        log::info("ablation: " + row.name);
        json entry{{"row", row.name},
                   {"spcc", row.toggles.spcc},
                   {"cpcc", row.toggles.cpcc},
                   {"w1", row.toggles.w1},
                   {"w2", row.toggles.w2}};
        try {
            auto run = run_experiment(config, data);
            entry["val"] = summary_to_json(run.val);
            if (run.has_test) entry["test"] = summary_to_json(run.test);
            outcome.runs.push_back(std::move(run));
            outcome.errors.emplace_back();
        } catch (const std::exception& e) {
            log::warn("ablation row " + row.name + " failed: " + e.what());
            entry["error"] = e.what();
            outcome.runs.emplace_back(std::nullopt);
            outcome.errors.emplace_back(e.what());
        }
        summary.push_back(entry);
    }
    const auto names = default_class_names(data.class_count());
    outcome.table = format_ablation_table(outcome, names, false) + "\n" + format_ablation_table(outcome, names, true);
    write_text(base.output_dir / "ablation.txt", outcome.table);
    write_text(base.output_dir / "ablation.json", summary.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------- report

void write_schedules(const fs::path& tsv, const fs::path& svg, const TrainConfig& config) {
    std::ofstream out(tsv, std::ios::trunc);
    out << "iteration\tlambda\tlr\n";
    plot::Series lambda{"lambda(t)", {}, {}}, lr{"poly lr(t)", {}, {}};
    for (long t = 0; t <= config.t_max; ++t) {
        const double l = warmup_lambda(t, config.t_max);
        const double r = poly_lr(t, config.t_max, config.base_lr, config.poly_power);
        out << t << '\t' << g17(l) << '\t' << g17(r) << '\n';
        lambda.x.push_back(static_cast<double>(t));
        lambda.y.push_back(l);
        lr.x.push_back(static_cast<double>(t));
        lr.y.push_back(r);
    }
    write_text(svg, plot::line_chart({lambda, lr}, {"Consistency weight and learning rate", "iteration", "value"}));
}

std::string write_report(const std::vector<fs::path>& run_dirs, const ReportOptions& options) {
    if (run_dirs.empty()) throw InvalidInput("report: no run directories given");
    const fs::path out_dir = options.out_dir.empty() ? run_dirs.front() / "report" : options.out_dir;
    fs::create_directories(out_dir);

    std::ostringstream text;
    std::vector<EvaluationSummary> summaries;
    std::vector<std::string> labels;
    std::vector<double> ratios;
    std::vector<std::string> class_names;
    plot::Series ratio_series{"mean DSC", {}, {}};
    json report = json::array();

    for (const auto& run : run_dirs) {
        const auto config = load_run_config(run);
        const auto checkpoint = pick_checkpoint(run, options.checkpoint);
        const auto data = load_experiment_data(config);
        auto model = load_model(checkpoint);
        summaries.push_back(evaluate_split(model, data, options.split));
        labels.push_back(run.filename().empty() ? run.parent_path().filename().string() : run.filename().string());
        class_names = default_class_names(data.class_count());
        const auto& m = data.manifest();
        ratios.push_back(static_cast<double>(m.labeled_case_ids.size()) / static_cast<double>(m.train.size()));
        report.push_back({{"run", run.string()},
                          {"checkpoint", checkpoint.string()},
                          {"labeled_cases", m.labeled_case_ids.size()},
                          {"train_cases", m.train.size()},
                          {options.split, summary_to_json(summaries.back())}});

        // Per-run curves.
        const auto run_out = run_dirs.size() == 1 ? out_dir : out_dir / labels.back();
        fs::create_directories(run_out);
        if (fs::exists(run / kTrainLogFile)) {
            const auto log_records = read_train_log(run / kTrainLogFile);
            plot::Series seg{"seg", {}, {}}, spcc{"spcc", {}, {}}, cpcc{"cpcc", {}, {}}, total{"total", {}, {}};
            std::vector<double> x, vs, vp, vc, vt;
            for (const auto& r : log_records) {
                x.push_back(static_cast<double>(r.report.iteration));
                vs.push_back(r.report.seg);
                vp.push_back(r.report.spcc);
                vc.push_back(r.report.cpcc);
                vt.push_back(r.report.total);
            }
            const int window = std::max<int>(1, static_cast<int>(x.size() / 50));
            seg = {"seg", x, plot::smooth(vs, window)};
            spcc = {"spcc", x, plot::smooth(vp, window)};
            cpcc = {"cpcc", x, plot::smooth(vc, window)};
            total = {"total", x, plot::smooth(vt, window)};
            write_text(run_out / "loss_curves.svg",
                       plot::line_chart({total, seg, spcc, cpcc}, {"Training losses", "iteration", "loss", true}));
        }
        if (fs::exists(run / kHistoryFile)) {
            plot::Series dsc{"val DSC", {}, {}};
            for (const auto& h : read_history(run / kHistoryFile)) {
                dsc.x.push_back(static_cast<double>(h.iteration));
                dsc.y.push_back(h.val_dsc);
            }
            write_text(run_out / "validation_dsc.svg",
                       plot::line_chart({dsc}, {"Validation DSC", "iteration", "DSC (%)", false, true}));
        }
        write_schedules(run_out / "schedules.tsv", run_out / "schedules.svg", config.train);
    }

    std::vector<TableRow> rows;
    for (std::size_t i = 0; i < summaries.size(); ++i) rows.push_back({labels[i], &summaries[i]});
    text << options.split << " split\n" << format_metrics_table(rows, class_names);

    if (run_dirs.size() > 1) {
        std::vector<std::size_t> order(run_dirs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ratios[a] < ratios[b]; });
        std::ofstream tsv(out_dir / "ratio_sweep.tsv", std::ios::trunc);
        tsv << "run\tlabeled_ratio\tmean_dsc\n";
        for (auto i : order) {
            ratio_series.x.push_back(100.0 * ratios[i]);
            ratio_series.y.push_back(summaries[i].mean_dsc);
            tsv << labels[i] << '\t' << g17(ratios[i]) << '\t' << g17(summaries[i].mean_dsc) << '\n';
        }
        write_text(out_dir / "ratio_sweep.svg",
                   plot::line_chart({ratio_series}, {"DSC vs labeled data", "labeled cases (%)", "DSC (%)", false, true}));
    }
    write_text(out_dir / "summary.txt", text.str());
    write_text(out_dir / "report.json", report.dump(2) + "\n");
    return text.str();
}

}  // namespace scp
