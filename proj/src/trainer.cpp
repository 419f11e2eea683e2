#include "scp/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scp/log.hpp"
#include "scp/nn/checkpoint.hpp"

namespace scp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDataStreamSalt = 0x5851f42d4c957f2dULL;

nn::UNetConfig model_config(const TrainConfig& config, int classes) {
    nn::UNetConfig mc;
    mc.classes = classes;
    mc.base_width = config.base_width;
    mc.tap = config.tap;
    mc.seed = config.seed;
    return mc;
}

std::string distance_name(ConsistencyDistance d) {
    return d == ConsistencyDistance::Squared ? "squared" : "absolute";
}

std::string tap_name(nn::FeatureTap tap) { return tap == nn::FeatureTap::Final ? "final" : "penultimate"; }

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json history_json(const std::vector<HistoryEntry>& history) {
    json arr = json::array();
    for (const auto& h : history) {
        arr.push_back({{"iteration", h.iteration},
                       {"val_dsc", h.val_dsc},
                       {"val_assd", h.val_assd ? json(*h.val_assd) : json(nullptr)}});
    }
    return arr;
}

std::vector<HistoryEntry> history_from_json(const json& arr) {
    std::vector<HistoryEntry> out;
    for (const auto& j : arr) {
        HistoryEntry h;
        h.iteration = j.at("iteration").get<long>();
        h.val_dsc = j.at("val_dsc").get<double>();
        if (!j.at("val_assd").is_null()) h.val_assd = j.at("val_assd").get<double>();
        out.push_back(h);
    }
    return out;
}

const char* kLogHeader = "iteration\tlr\tlambda\tseg\tspcc\tcpcc\ttotal";
const char* kHistoryHeader = "iteration\tval_dsc\tval_assd";

void write_history_file(const fs::path& file, const std::vector<HistoryEntry>& history) {
    std::ofstream out(file, std::ios::trunc);
    out << kHistoryHeader << '\n';
    for (const auto& h : history) {
        out << h.iteration << '\t' << format_g17(h.val_dsc) << '\t' << (h.val_assd ? format_g17(*h.val_assd) : "nan")
            << '\n';
    }
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& file, const std::string& header) {
    std::ifstream in(file);
    if (!in) throw InvalidInput("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw FormatError(file.string() + ": unexpected header (expected '" + header + "')");
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

double parse_double(const std::string& s, const fs::path& file) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(file.string() + ": bad number '" + s + "'");
    }
}

}  // namespace

// ---------------------------------------------------------------- config

BatchComposition TrainConfig::effective_batch() const {
    return toggles.any_consistency() ? batch : BatchComposition{batch.labeled, 0};
}

void TrainConfig::validate() const {
    if (t_max <= 0) throw InvalidInput("t_max must be > 0 (got " + std::to_string(t_max) + ")");
    if (!(base_lr > 0)) throw InvalidInput("base_lr must be > 0");
    if (!(poly_power > 0)) throw InvalidInput("poly_power must be > 0");
    if (momentum < 0 || momentum >= 1) throw InvalidInput("momentum must be in [0, 1)");
    if (weight_decay < 0) throw InvalidInput("weight_decay must be >= 0");
    if (batch.labeled < 1) throw InvalidInput("labeled_per_batch must be >= 1");
    if (batch.unlabeled < 0) throw InvalidInput("unlabeled_per_batch must be >= 0");
    if (toggles.any_consistency() && batch.labeled + batch.unlabeled < 2) {
        throw InvalidInput("consistency terms need a batch of at least 2 samples");
    }
    if (base_width < 1) throw InvalidInput("base_width must be >= 1");
    if (eval_every < 0) throw InvalidInput("eval_every must be >= 0");
    if (checkpoint_every < 0) throw InvalidInput("checkpoint_every must be >= 0");
}

json train_config_to_json(const TrainConfig& c) {
    return {{"t_max", c.t_max},
            {"base_lr", c.base_lr},
            {"poly_power", c.poly_power},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"labeled_per_batch", c.batch.labeled},
            {"unlabeled_per_batch", c.batch.unlabeled},
            {"seed", c.seed},
            {"spcc", c.toggles.spcc},
            {"cpcc", c.toggles.cpcc},
            {"w1", c.toggles.w1},
            {"w2", c.toggles.w2},
            {"distance", distance_name(c.distance)},
            {"ground_truth_prototypes", c.ground_truth_prototypes},
            {"feature_tap", tap_name(c.tap)},
            {"base_width", c.base_width},
            {"eval_every", c.eval_every},
            {"checkpoint_every", c.checkpoint_every},
            {"augment", c.augment.enabled},
            {"free_rotation", c.augment.free_rotation},
            {"check_invariants", c.check_invariants}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.t_max = j.at("t_max").get<long>();
    c.base_lr = j.at("base_lr").get<double>();
    c.poly_power = j.at("poly_power").get<double>();
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch.labeled = j.at("labeled_per_batch").get<int>();
    c.batch.unlabeled = j.at("unlabeled_per_batch").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.toggles = {j.at("spcc").get<bool>(), j.at("cpcc").get<bool>(), j.at("w1").get<bool>(), j.at("w2").get<bool>()};
    c.distance = j.at("distance").get<std::string>() == "absolute" ? ConsistencyDistance::Absolute
                                                                    : ConsistencyDistance::Squared;
    c.ground_truth_prototypes = j.at("ground_truth_prototypes").get<bool>();
    c.tap = j.at("feature_tap").get<std::string>() == "penultimate" ? nn::FeatureTap::Penultimate
                                                                     : nn::FeatureTap::Final;
    c.base_width = j.at("base_width").get<int>();
    c.eval_every = j.at("eval_every").get<long>();
    c.checkpoint_every = j.at("checkpoint_every").get<long>();
    c.augment.enabled = j.at("augment").get<bool>();
    c.augment.free_rotation = j.at("free_rotation").get<bool>();
    c.check_invariants = j.at("check_invariants").get<bool>();
    return c;
}

double poly_lr(long t, long t_max, double base_lr, double power) {
    if (t_max <= 0) throw InvalidInput("poly_lr: t_max must be > 0");
    if (t < 0 || t > t_max) {
        throw InvalidInput("poly_lr: t=" + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
    }
    return base_lr * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(t_max), power);
}

// ---------------------------------------------------------------- one step

LossReport train_step(const Batch& batch, nn::UNet<float>& model, nn::Sgd<float>& optimizer, long t,
                      const TrainConfig& config, StepDiagnostics* diagnostics) {
    const int nl = static_cast<int>(batch.labeled.size());
    const int b = batch.size();
    if (b == 0) throw InvalidInput("train_step: empty batch");

    std::vector<const Tensor3<float>*> images;
    for (const auto& s : batch.labeled) images.push_back(&s.image);
    for (const auto& s : batch.unlabeled) images.push_back(&s.image);

    model.zero_grad();
    auto out = model.forward(nn::pack_images<float>(images), true);

    std::vector<SampleInput> inputs(b);
    for (int k = 0; k < b; ++k) {
        inputs[k].logits = nn::extract_sample<double>(out.logits, k);
        inputs[k].feat.values = nn::extract_sample<double>(out.feat, k);
        inputs[k].label = k < nl ? &batch.labeled[k].label : nullptr;
    }
    const ObjectiveOptions options{config.toggles, config.distance, config.ground_truth_prototypes,
                                   config.check_invariants};
    auto result = evaluate_objective(inputs, t, config.t_max, options);

    nn::Activations<float> grad(out.logits.channels, b, out.logits.height, out.logits.width);
    for (int k = 0; k < b; ++k) nn::insert_sample(grad, k, result.grad_logits[k]);
    model.backward(grad);

    double sq = 0.0;
    for (auto* p : model.parameters()) {
        for (float g : p->grad) sq += static_cast<double>(g) * g;
    }
    const double grad_norm = std::sqrt(sq);
    if (!std::isfinite(grad_norm)) {
        throw NumericalError("non-finite parameter gradient at iteration " + std::to_string(t));
    }

    const double lr = poly_lr(t, config.t_max, config.base_lr, config.poly_power);
    optimizer.step(lr);

    result.report.iteration = t;
    if (diagnostics) {
        diagnostics->objective = result.diagnostics;
        diagnostics->grad_norm = grad_norm;
        diagnostics->lr = lr;
        diagnostics->terms = std::move(result.terms);
    }
    return result.report;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, const SliceDataset& data)
    : config_((config.validate(), config)),
      data_(&data),
      model_(model_config(config_, data.class_count())),
      optimizer_(model_.parameters(), config_.momentum, config_.weight_decay),
      rng_(config_.seed ^ kDataStreamSalt) {
    const auto comp = config_.effective_batch();
    if (comp.labeled > 0 && data.labeled_pool().empty()) throw InvalidInput("dataset has no labeled training slices");
    if (comp.unlabeled > 0 && data.unlabeled_pool().empty()) {
        throw InvalidInput("dataset has no unlabeled training slices");
    }
}

LossReport Trainer::step(StepDiagnostics* diagnostics) {
    if (t_ >= config_.t_max) throw InvalidInput("training already reached t_max");
    const Batch batch = compose_batch(*data_, config_.effective_batch(), rng_, config_.augment);
    LossReport report;
    try {
        report = train_step(batch, model_, optimizer_, t_, config_, diagnostics);
    } catch (const NumericalError& e) {
        if (!run_dir_.empty()) {
            const auto path = run_dir_ / kPostMortemCheckpoint;
            save(path);
            throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(t_) +
                                 "; state saved to " + path.string());
        }
        throw NumericalError(std::string(e.what()) + " at iteration " + std::to_string(t_));
    }
    ++t_;
    return report;
}

json Trainer::state_json() const {
    std::ostringstream rng;
    rng << rng_;
    return {{"iteration", t_},
            {"rng", rng.str()},
            {"history", history_json(history_)},
            {"best_dsc", best_dsc_},
            {"best_iteration", best_iteration_},
            {"class_count", data_->class_count()},
            {"image_size", data_->image_size()},
            {"train_config", train_config_to_json(config_)}};
}

void Trainer::save(const fs::path& path) { nn::save_checkpoint(path, model_, &optimizer_, state_json()); }

void Trainer::restore(const fs::path& path) {
    const auto manifest = nn::read_checkpoint_manifest(path);
    const auto& state = manifest.at("state");
    if (state.contains("train_config")) {
        const auto stored = train_config_from_json(state.at("train_config"));
        if (train_config_to_json(stored) != train_config_to_json(config_)) {
            log::warn("resuming " + path.string() + " with a training config that differs from the stored one");
        }
    }
    nn::load_checkpoint(path, model_, &optimizer_);
    t_ = state.at("iteration").get<long>();
    std::istringstream rng(state.at("rng").get<std::string>());
    rng >> rng_;
    if (!rng) throw FormatError(path.string() + ": corrupt RNG state");
    history_ = history_from_json(state.at("history"));
    best_dsc_ = state.at("best_dsc").get<double>();
    best_iteration_ = state.at("best_iteration").get<long>();
}

void Trainer::append_log(const LossReport& r, double lr) {
    std::ofstream out(run_dir_ / kTrainLogFile, std::ios::app);
    out << r.iteration << '\t' << format_g17(lr) << '\t' << format_g17(r.lambda_t) << '\t' << format_g17(r.seg)
        << '\t' << format_g17(r.spcc) << '\t' << format_g17(r.cpcc) << '\t' << format_g17(r.total) << '\n';
}

FitResult Trainer::fit(const fs::path& run_dir, bool resume, std::optional<long> stop_at) {
    fs::create_directories(run_dir);
    run_dir_ = run_dir;
    const auto log_file = run_dir / kTrainLogFile;
    const auto last = run_dir / kLastCheckpoint;
    const auto best = run_dir / kBestCheckpoint;

    if (resume) {
        if (!fs::exists(last)) throw InvalidInput("cannot resume: " + last.string() + " not found");
        restore(last);
        // Drop log lines written after the checkpoint so the resumed stream continues exactly.
        std::vector<std::string> kept;
        if (fs::exists(log_file)) {
            std::ifstream in(log_file);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (!line.empty() && std::stol(line.substr(0, line.find('\t'))) < t_) kept.push_back(line);
            }
        }
        std::ofstream out(log_file, std::ios::trunc);
        out << kLogHeader << '\n';
        for (const auto& l : kept) out << l << '\n';
        log::info("resuming from iteration " + std::to_string(t_));
    } else {
        std::ofstream out(log_file, std::ios::trunc);
        out << kLogHeader << '\n';
    }
    write_history_file(run_dir / kHistoryFile, history_);

    const bool can_validate = config_.eval_every > 0 && !data_->split_cases("val").empty();
    if (config_.eval_every > 0 && !can_validate) log::warn("no validation cases; periodic validation disabled");

    FitResult result;
    const long end = stop_at ? std::min(*stop_at, config_.t_max) : config_.t_max;
    StepDiagnostics diag;
    while (t_ < end) {
        const LossReport report = step(&diag);
        append_log(report, diag.lr);
        ++result.iterations_run;

        bool save_last = config_.checkpoint_every > 0 && t_ % config_.checkpoint_every == 0;
        if (can_validate && t_ % config_.eval_every == 0) {
            const auto summary = evaluate_split(model_, *data_, "val");
            history_.push_back({t_, summary.mean_dsc, summary.mean_assd});
            write_history_file(run_dir / kHistoryFile, history_);
            log::info("iteration " + std::to_string(t_) + ": val DSC " + format_g17(summary.mean_dsc));
            if (summary.mean_dsc > best_dsc_) {
                best_dsc_ = summary.mean_dsc;
                best_iteration_ = t_;
                save(best);
            }
            save_last = true;
        }
        if (save_last || t_ == end) save(last);
    }
    if (result.iterations_run == 0) save(last);

    result.last_checkpoint = last;
    if (best_iteration_ >= 0) result.best_checkpoint = best;
    result.history = history_;
    result.best_dsc = best_dsc_;
    result.best_iteration = best_iteration_;
    return result;
}

// ---------------------------------------------------------------- log readers

std::vector<TrainLogRecord> read_train_log(const fs::path& file) {
    std::vector<TrainLogRecord> out;
    for (const auto& row : read_tsv(file, kLogHeader)) {
        if (row.size() != 7) throw FormatError(file.string() + ": expected 7 columns");
        TrainLogRecord r;
        r.report.iteration = std::stol(row[0]);
        r.lr = parse_double(row[1], file);
        r.report.lambda_t = parse_double(row[2], file);
        r.report.seg = parse_double(row[3], file);
        r.report.spcc = parse_double(row[4], file);
        r.report.cpcc = parse_double(row[5], file);
        r.report.total = parse_double(row[6], file);
        out.push_back(r);
    }
    return out;
}

std::vector<HistoryEntry> read_history(const fs::path& file) {
    std::vector<HistoryEntry> out;
    for (const auto& row : read_tsv(file, kHistoryHeader)) {
        if (row.size() != 3) throw FormatError(file.string() + ": expected 3 columns");
        HistoryEntry h;
        h.iteration = std::stol(row[0]);
        h.val_dsc = parse_double(row[1], file);
        if (row[2] != "nan") h.val_assd = parse_double(row[2], file);
        out.push_back(h);
    }
    return out;
}

}  // namespace scp
