#include <doctest.h>

#include <fstream>
#include <sstream>

#include "scp/experiment.hpp"
#include "support.hpp"

using namespace scp;
using namespace testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const InvalidInput& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("config text parsing") {
    const auto e = parse_config_text("# comment\n t_max = 50 \n\nseed=3 # trailing\n", "a.cfg");
    REQUIRE(e.size() == 2);
    CHECK(e[0] == std::pair<std::string, std::string>{"t_max", "50"});
    CHECK(e[1] == std::pair<std::string, std::string>{"seed", "3"});
    CHECK(error_of([] { parse_config_text("t_max = 5\njunk\n", "a.cfg"); }).find("a.cfg:2") != std::string::npos);
    CHECK(error_of([] { parse_config_text("= 4\n", "b.cfg"); }).find("b.cfg:1") != std::string::npos);
}

TEST_CASE("defaults are overridden by the file, and the file by flags") {
    ExperimentConfig config;
    const long default_t_max = config.train.t_max;
    apply_config(config, parse_config_text("t_max = 40\nseed = 5\nbase_width = 4\n", "file"), "file");
    apply_config(config, {{"seed", "9"}}, "command line");
    CHECK(config.train.t_max == 40);
    CHECK(config.train.t_max != default_t_max);
    CHECK(config.train.seed == 9);
    CHECK(config.train.base_width == 4);
    CHECK(config.image_size == ExperimentConfig{}.image_size);
}

TEST_CASE("unknown keys and bad values are rejected with the key named") {
    ExperimentConfig config;
    const auto unknown = error_of([&] { apply_config(config, {{"learning_rate", "0.1"}}, "x.cfg"); });
    CHECK(unknown.find("unknown config key 'learning_rate'") != std::string::npos);
    CHECK(unknown.find("x.cfg") != std::string::npos);
    CHECK(error_of([&] { apply_config(config, {{"t_max", "ten"}}, "x.cfg"); }).find("'t_max'") != std::string::npos);
    CHECK(error_of([&] { apply_config(config, {{"spcc", "maybe"}}, "x.cfg"); }).find("'spcc'") != std::string::npos);
    CHECK(error_of([&] { apply_config(config, {{"distance", "l3"}}, "x.cfg"); }).find("'distance'") !=
          std::string::npos);
}

TEST_CASE("formatted config parses back to the same config") {
    ExperimentConfig config;
    apply_config(config,
                 {{"t_max", "77"}, {"base_lr", "0.037"}, {"w2", "false"}, {"distance", "absolute"},
                  {"feature_tap", "final"}, {"manifest", "/data/m.json"}},
                 "test");
    ExperimentConfig back;
    apply_config(back, parse_config_text(format_config(config), "round"), "round");
    CHECK(format_config(back) == format_config(config));
    CHECK(config_keys().size() == parse_config_text(format_config(config), "n").size());
}

TEST_CASE("missing manifest and bad image size are reported") {
    ExperimentConfig config;
    CHECK(error_of([&] { load_experiment_data(config); }).find("manifest") != std::string::npos);
    config.manifest = "/nonexistent/manifest.json";
    config.image_size = 40;
    CHECK(error_of([&] { load_experiment_data(config); }).find("image_size") != std::string::npos);
}

TEST_CASE("ablation rows in table order") {
    const auto& rows = ablation_rows();
    CHECK(rows[0].toggles.spcc == false);
    CHECK(rows[0].toggles.cpcc == false);
    CHECK(rows[1].toggles.spcc == true);
    CHECK(rows[1].toggles.cpcc == false);
    CHECK(rows[2].toggles.spcc == false);
    CHECK(rows[2].toggles.cpcc == true);
    CHECK((rows[2].toggles.w1 && rows[2].toggles.w2));
    CHECK((!rows[3].toggles.w1 && !rows[3].toggles.w2));
    CHECK((rows[4].toggles.w1 && !rows[4].toggles.w2));
    CHECK((rows[5].toggles.spcc && rows[5].toggles.cpcc && rows[5].toggles.w1 && rows[5].toggles.w2));
}

TEST_CASE("schedule dump endpoints") {
    TempDir dir("schedules");
    TrainConfig config;
    config.t_max = 1000;
    write_schedules(dir.path / "s.tsv", dir.path / "s.svg", config);
    std::ifstream in(dir.path / "s.tsv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "iteration\tlambda\tlr");
    std::vector<std::array<double, 3>> rows;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::array<double, 3> r{};
        ss >> r[0] >> r[1] >> r[2];
        rows.push_back(r);
    }
    REQUIRE(rows.size() == 1001);
    CHECK(std::abs(rows.front()[1] - 6.738e-4) < 1e-6);
    CHECK(rows.back()[1] == 0.1);
    CHECK(rows.front()[2] == config.base_lr);
    CHECK(rows.back()[2] == 0.0);
    CHECK(slurp(dir.path / "s.svg").find("<svg") != std::string::npos);
}

TEST_CASE("experiment run writes config, results and a report") {
    TempDir dir("experiment");
    SynthesisSpec spec;
    spec.cases = 6;
    spec.size = 16;
    spec.slices = 2;
    spec.labeled_ratio = 0.34;
    spec.seed = 4;
    synthesize_dataset(spec, dir.path / "data");

    ExperimentConfig config;
    apply_config(config,
                 {{"manifest", (dir.path / "data" / kManifestFile).string()},
                  {"output_dir", (dir.path / "run").string()},
                  {"image_size", "16"},
                  {"t_max", "8"},
                  {"base_width", "2"},
                  {"eval_every", "4"},
                  {"labeled_per_batch", "2"},
                  {"unlabeled_per_batch", "2"}},
                 "test");
    const auto data = load_experiment_data(config);
    const auto outcome = run_experiment(config, data);
    CHECK(std::filesystem::exists(dir.path / "run" / kRunConfigFile));
    CHECK(std::filesystem::exists(dir.path / "run" / kResultsFile));
    CHECK(outcome.has_test);
    CHECK(format_config(load_run_config(dir.path / "run")) == format_config(config));

    ReportOptions options;
    options.out_dir = dir.path / "report";
    const auto text = write_report({dir.path / "run"}, options);
    CHECK_FALSE(text.empty());
    int svgs = 0;
    for (const auto& e : std::filesystem::directory_iterator(options.out_dir)) svgs += e.path().extension() == ".svg";
    CHECK(svgs > 0);
    CHECK_THROWS_AS(load_run_config(dir.path), InvalidInput);
}

TEST_CASE("ablation runs six rows and its first row equals a plain supervised run") {
    TempDir dir("ablation");
    SynthesisSpec spec;
    spec.cases = 6;
    spec.size = 16;
    spec.slices = 2;
    spec.labeled_ratio = 0.34;
    spec.seed = 5;
    synthesize_dataset(spec, dir.path / "data");

    ExperimentConfig config;
    apply_config(config,
                 {{"manifest", (dir.path / "data" / kManifestFile).string()},
                  {"output_dir", (dir.path / "ablation").string()},
                  {"image_size", "16"},
                  {"t_max", "4"},
                  {"base_width", "2"},
                  {"eval_every", "2"},
                  {"labeled_per_batch", "2"},
                  {"unlabeled_per_batch", "2"}},
                 "test");
    const auto data = load_experiment_data(config);
    const auto outcome = run_ablation(config, data);
    REQUIRE(outcome.runs.size() == 6);
    for (const auto& e : outcome.errors) CHECK(e.empty());
    CHECK(std::filesystem::exists(dir.path / "ablation" / "ablation.txt"));
    CHECK(std::filesystem::exists(dir.path / "ablation" / "ablation.json"));
    // Two tables (validation, test), each with a header and six numbered rows.
    int rows = 0;
    std::istringstream lines(outcome.table);
    for (std::string line; std::getline(lines, line);) rows += !line.empty() && line[0] >= '1' && line[0] <= '6';
    CHECK(rows == 12);

    auto plain = config;
    plain.output_dir = dir.path / "plain";
    apply_config(plain, {{"spcc", "false"}, {"cpcc", "false"}}, "test");
    const auto single = run_experiment(plain, data);
    REQUIRE(outcome.runs[0].has_value());
    CHECK(single.val.mean_dsc == outcome.runs[0]->val.mean_dsc);
    CHECK(slurp(dir.path / "plain" / kTrainLogFile) == slurp(dir.path / "ablation" / "row1_seg" / kTrainLogFile));
}
