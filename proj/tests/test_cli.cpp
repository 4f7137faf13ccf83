#include <gtest/gtest.h>

#include <unistd.h>

#include "cli_runner.hpp"
#include "support.hpp"

using namespace phasedfa;
using namespace phasedfa::test;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        rows.push_back(f);
    }
    return rows;
}

void write_scenario(const fs::path& p, const ScenarioSpec& spec) {
    std::ofstream(p) << nlohmann::json(spec).dump(2);
}

ScenarioSpec small_three_phase(std::size_t per_phase) {
    auto spec = load_scenario("three_phase_block");
    for (auto& s : spec.schedule) s.burst_count = per_phase;
    return spec;
}

}  // namespace

TEST(Cli, IngestThreePhase) {
    auto dir = fresh_dir("cli_ingest");
    auto spec = small_three_phase(34);
    spec.schedule[1].burst_count = 32;  // 100 bursts in total
    write_scenario(dir / "s.json", spec);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " generate " + q(dir / "s.json")).exit_code, 0);
    auto r = run_cli("--out-dir " + q(dir) + " ingest --min-packets 10 " + q(dir / "three_phase_block.ndjson"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    auto rows = read_csv(dir / "channel_summary.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][0], spec.channel.file_stem());
    EXPECT_EQ(rows[1][6], "100");
    EXPECT_TRUE(fs::exists(dir / "manifests" / "ingest.manifest.json"));
    auto manifest = nlohmann::json::parse(slurp(dir / "manifests" / "ingest.manifest.json"));
    EXPECT_EQ(manifest.at("inputs").size(), 1u);
    EXPECT_EQ(manifest.at("inputs")[0].at("sha256").get<std::string>().size(), 64u);
}

TEST(Cli, EmptyInput) {
    auto dir = fresh_dir("cli_empty");
    std::ofstream(dir / "empty.ndjson").close();
    auto r = run_cli("--out-dir " + q(dir) + " ingest " + q(dir / "empty.ndjson"));
    EXPECT_EQ(r.exit_code, 0) << r.output;
    EXPECT_EQ(read_csv(dir / "channel_summary.csv").size(), 1u);
}

TEST(Cli, DropReport) {
    auto dir = fresh_dir("cli_drop");
    auto spec = small_three_phase(10);
    write_scenario(dir / "s.json", spec);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " generate " + q(dir / "s.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " ingest " + q(dir / "three_phase_block.ndjson")).exit_code, 0);
    auto dropped = read_csv(dir / "dropped.csv");
    ASSERT_EQ(dropped.size(), 2u);
    EXPECT_EQ(dropped[1][5], "120");
    EXPECT_EQ(dropped[1][6], "below_min_packets");
}

TEST(Cli, MissingModelIsFatalWithHint) {
    auto dir = fresh_dir("cli_nomodel");
    auto spec = small_three_phase(100);
    write_scenario(dir / "s.json", spec);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " generate " + q(dir / "s.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " ingest " + q(dir / "three_phase_block.ndjson")).exit_code, 0);
    auto r = run_cli("--out-dir " + q(dir) + " enforce");
    EXPECT_NE(r.exit_code, 0);
    EXPECT_NE(r.output.find("phasedfa train"), std::string::npos) << r.output;
    auto none = run_cli("--out-dir " + q(dir / "nothing") + " phases");
    EXPECT_NE(none.exit_code, 0);
    EXPECT_NE(none.output.find("phasedfa ingest"), std::string::npos);
}

TEST(Cli, TrainEnforceClean) {
    auto dir = fresh_dir("cli_train");
    write_scenario(dir / "s.json", load_scenario("three_phase_block"));
    for (std::string cmd : {"generate " + q(dir / "s.json"), "ingest " + q(dir / "three_phase_block.ndjson"),
                            std::string("phases"), std::string("train --stride 3"), std::string("enforce --parts 100"),
                            std::string("perm"), std::string("report")}) {
        auto r = run_cli("--out-dir " + q(dir) + " " + cmd);
        ASSERT_EQ(r.exit_code, 0) << cmd << "\n" << r.output;
    }
    auto summary = nlohmann::json::parse(slurp(dir / "enforce_summary.json"));
    EXPECT_GE(summary["channels"][0]["normal_ratio"].get<double>(), 0.999);
    auto phases = nlohmann::json::parse(slurp(dir / "phases" / (load_scenario("three_phase_block").channel.file_stem() + ".phases.json")));
    EXPECT_EQ(phases["k"], 3);
    EXPECT_EQ(phases["shifts"], 2);
    auto hist = read_csv(dir / "phase_shift_histogram.csv");
    EXPECT_EQ(hist[2], (std::vector<std::string>{"1-5", "1"}));
    EXPECT_EQ(read_csv(dir / "enforce" / (load_scenario("three_phase_block").channel.file_stem() + ".parts.csv")).size(), 101u);
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "anomaly_cdf.csv"));
}

TEST(Cli, HighChurnShifts) {
    auto dir = fresh_dir("cli_churn");
    write_scenario(dir / "s.json", load_scenario("high_churn"));
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " generate " + q(dir / "s.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " ingest " + q(dir / "high_churn.ndjson")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " --jobs 2 phases").exit_code, 0);
    auto phases = nlohmann::json::parse(slurp(dir / "phases" / (load_scenario("high_churn").channel.file_stem() + ".phases.json")));
    EXPECT_GT(phases["shifts"].get<int>(), 25);
    EXPECT_EQ(read_csv(dir / "phase_shift_histogram.csv").back(), (std::vector<std::string>{">25", "1"}));
}

TEST(Cli, InjectedAnomaliesAreFlagged) {
    auto dir = fresh_dir("cli_inject");
    auto clean = small_three_phase(100);
    auto injected = clean;
    injected.name = "injected";
    injected.injections = {{20, InjectionKind::unknown_symbol}, {120, InjectionKind::reorder},
                           {150, InjectionKind::retransmit}, {250, InjectionKind::truncate_burst}};
    write_scenario(dir / "clean.json", clean);
    write_scenario(dir / "inj.json", injected);
    auto train_dir = dir / "train", test_dir = dir / "test";
    ASSERT_EQ(run_cli("--out-dir " + q(train_dir) + " generate " + q(dir / "clean.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(train_dir) + " ingest --min-packets 1 " + q(train_dir / "three_phase_block.ndjson")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(train_dir) + " --seed 4 train --all --windows 30").exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(test_dir) + " generate " + q(dir / "inj.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(test_dir) + " ingest --min-packets 1 " + q(test_dir / "injected.ndjson")).exit_code, 0);
    auto r = run_cli("--out-dir " + q(test_dir) + " enforce --test-set all --models-dir " + q(train_dir / "models"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    auto rows = read_csv(test_dir / "enforce" / (clean.channel.file_stem() + ".csv"));
    std::map<std::string, std::string> flagged;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i][10] == "1") flagged[rows[i][0]] = rows[i].size() > 11 ? rows[i][11] : "";
    EXPECT_EQ(flagged, (std::map<std::string, std::string>{
                           {"20", "unknown"}, {"120", "miss"}, {"150", "retransmit"}, {"250", "wrong_ending"}}));
}

TEST(Cli, PermLinearModel) {
    auto dir = fresh_dir("cli_perm");
    ScenarioSpec spec;
    spec.name = "linear";
    spec.channel = ChannelId{Ipv4Address::from_octets(1, 1, 1, 1), Ipv4Address::from_octets(1, 1, 1, 2), 1, 1};
    spec.phases["A"].burst_grammars = {{sym(1), sym(2), sym(3)}};
    spec.schedule = {{"A", 200}};
    write_scenario(dir / "s.json", spec);
    for (std::string cmd : {"generate " + q(dir / "s.json"), "ingest " + q(dir / "linear.ndjson"),
                            std::string("train --all"), std::string("perm")})
        ASSERT_EQ(run_cli("--out-dir " + q(dir) + " " + cmd).exit_code, 0) << cmd;
    auto rows = read_csv(dir / "perm.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1][1], "3");
    EXPECT_EQ(rows[1][2], "3");
    EXPECT_EQ(rows[1][4], "1");
    EXPECT_NEAR(std::stod(rows[1][5]), 1.0 / 3.0, 1e-9);
}

TEST(Cli, ConfigFileAndFlags) {
    auto dir = fresh_dir("cli_config");
    auto spec = small_three_phase(100);
    write_scenario(dir / "s.json", spec);
    std::ofstream(dir / "cfg.json") << R"({"min_packets": 5000, "burst_gap": 0.05})";
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " generate " + q(dir / "s.json")).exit_code, 0);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " --config " + q(dir / "cfg.json") + " ingest " + q(dir / "three_phase_block.ndjson")).exit_code, 0);
    EXPECT_EQ(read_csv(dir / "dropped.csv").size(), 2u);
    ASSERT_EQ(run_cli("--out-dir " + q(dir) + " --config " + q(dir / "cfg.json") + " ingest --min-packets 10 " + q(dir / "three_phase_block.ndjson")).exit_code, 0);
    EXPECT_EQ(read_csv(dir / "dropped.csv").size(), 1u);
    auto m = nlohmann::json::parse(slurp(dir / "manifests" / "ingest.manifest.json"));
    EXPECT_EQ(m["config"]["burst_gap"], 0.05);
    EXPECT_EQ(m["config"]["min_packets"], 10);
    std::ofstream(dir / "bad.json") << R"({"bogus": 1})";
    EXPECT_NE(run_cli("--out-dir " + q(dir) + " --config " + q(dir / "bad.json") + " phases").exit_code, 0);
    EXPECT_NE(run_cli("frobnicate").exit_code, 0);
}
