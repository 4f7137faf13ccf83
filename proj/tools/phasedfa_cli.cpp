// phasedfa: command-line pipeline over a single output directory.
//
//   generate  scenario JSON -> <name>.ndjson + <name>.truth.json
//   ingest    capture       -> channels/, channel_summary.csv, dropped.csv
//   phases    channels/     -> phases/
//   train     channels/     -> models/
//   enforce   models/       -> enforce/, enforce_summary.json
//   perm      models/       -> perm.csv
//   report    enforce/ + phases/ -> report.json, anomaly_cdf.csv

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "phasedfa/phasedfa.hpp"

#ifndef PHASEDFA_VERSION
#define PHASEDFA_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace phasedfa;

namespace {

struct Fatal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    fs::path out_dir = "out";
    std::optional<fs::path> config_file;

    IngestConfig ingest;
    std::optional<std::string> format;
    PhaseDetectConfig phases;
    std::size_t stride = 3;
    std::size_t offset = 0;
    std::optional<double> prefix;
    bool train_all = false;
    std::size_t parts = 0;
    std::string test_set = "split";
    std::optional<fs::path> models_dir;
    std::optional<std::size_t> perm_b;
    std::size_t perm_k_max = kDefaultMaxPhases;
};

// Keys accepted in --config; explicit flags win over the file.
void apply_config_file(RunConfig& rc, const json& j, const CLI::App& app, const CLI::App& sub) {
    auto unset = [&](const char* flag) {
        for (const auto* a : {&app, &sub})
            if (auto* opt = a->get_option_no_throw(flag); opt != nullptr && opt->count() > 0) return false;
        return true;
    };
    auto take = [&](const char* key, const char* flag, auto& field) {
        if (auto it = j.find(key); it != j.end() && unset(flag)) it->get_to(field);
    };
    static const std::set<std::string> known = {
        "seed", "jobs", "burst_gap", "min_packets", "num_windows", "k_max", "k_selection_runs",
        "kmeans_max_iters", "kmeans_restarts", "silhouette_floor", "partition", "stride", "offset", "parts"};
    for (const auto& [k, v] : j.items())
        if (!known.contains(k)) throw Fatal("--config: unknown key '" + k + "'");
    take("seed", "--seed", rc.seed);
    take("jobs", "--jobs", rc.jobs);
    take("burst_gap", "--burst-gap", rc.ingest.burst_gap_threshold);
    take("min_packets", "--min-packets", rc.ingest.min_channel_packets);
    take("num_windows", "--windows", rc.phases.num_windows);
    take("k_max", "--k-max", rc.phases.k_max);
    take("k_selection_runs", "--k-runs", rc.phases.k_selection_runs);
    take("kmeans_max_iters", "--kmeans-iters", rc.phases.kmeans_max_iters);
    take("kmeans_restarts", "--kmeans-restarts", rc.phases.kmeans_restarts);
    take("silhouette_floor", "--silhouette-floor", rc.phases.silhouette_floor);
    take("stride", "--stride", rc.stride);
    take("offset", "--offset", rc.offset);
    take("parts", "--parts", rc.parts);
    if (auto it = j.find("partition"); it != j.end() && unset("--partition")) {
        auto p = it->get<std::string>();
        if (p == "bursts") rc.phases.partition = WindowPartition::equal_bursts;
        else if (p == "duration") rc.phases.partition = WindowPartition::equal_duration;
        else throw Fatal("--config: partition must be 'bursts' or 'duration'");
    }
}

json config_json(const RunConfig& rc) {
    return json{{"seed", rc.seed},
                {"jobs", rc.jobs},
                {"burst_gap", rc.ingest.burst_gap_threshold},
                {"min_packets", rc.ingest.min_channel_packets},
                {"num_windows", rc.phases.num_windows},
                {"k_max", rc.phases.k_max},
                {"k_selection_runs", rc.phases.k_selection_runs},
                {"kmeans_max_iters", rc.phases.kmeans_max_iters},
                {"kmeans_restarts", rc.phases.kmeans_restarts},
                {"silhouette_floor", rc.phases.silhouette_floor},
                {"partition", rc.phases.partition == WindowPartition::equal_bursts ? "bursts" : "duration"},
                {"stride", rc.stride},
                {"offset", rc.offset},
                {"prefix", rc.prefix ? json(*rc.prefix) : json(nullptr)},
                {"train_all", rc.train_all},
                {"parts", rc.parts},
                {"test_set", rc.test_set}};
}

// ---- small IO helpers ----

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Fatal("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Fatal("cannot write " + p.string());
    out << content;
}

void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw Fatal(p.string() + ": " + e.what());
    }
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_manifest(const RunConfig& rc, const std::string& sub, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
    json in = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"sha256", sha256_hex(read_file(p))}});
    json out = json::array();
    for (const auto& p : outputs) out.push_back(fs::relative(p, rc.out_dir).generic_string());
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    write_json(rc.out_dir / "manifests" / (sub + ".manifest.json"),
               json{{"tool", "phasedfa"},
                    {"version", PHASEDFA_VERSION},
                    {"subcommand", sub},
                    {"timestamp", ts},
                    {"config", config_json(rc)},
                    {"inputs", in},
                    {"outputs", out}});
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lk(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    const std::size_t t = std::max<std::size_t>(1, std::min(jobs, n));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < t; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// ---- channel store ----

struct StoredChannel {
    ChannelId channel;
    std::vector<Burst> bursts;
    fs::path path;
};

json bursts_json(const ChannelId& c, std::span<const Burst> bursts) {
    json arr = json::array();
    for (const auto& b : bursts) arr.push_back({{"start", b.start_time}, {"end", b.end_time}, {"symbols", b.symbols}});
    return json{{"channel", c}, {"bursts", arr}};
}

StoredChannel load_channel(const fs::path& p) {
    auto j = read_json(p);
    StoredChannel sc;
    sc.path = p;
    sc.channel = j.at("channel").get<ChannelId>();
    for (const auto& b : j.at("bursts")) {
        Burst burst{b.at("symbols").get<std::vector<Symbol>>(), b.at("start").get<double>(),
                    b.at("end").get<double>()};
        validate(burst);
        sc.bursts.push_back(std::move(burst));
    }
    return sc;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& suffix) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> channel_files(const RunConfig& rc) {
    auto dir = rc.out_dir / "channels";
    if (!fs::is_directory(dir))
        throw Fatal("no channel store at " + dir.string() + "; run 'phasedfa ingest' first");
    return list_files(dir, ".bursts.json");
}

// ---- subcommands ----

int cmd_generate(const RunConfig& rc, const fs::path& scenario, bool seed_given) {
    auto spec = read_json(scenario).get<ScenarioSpec>();
    if (seed_given) spec.rng_seed = rc.seed;
    auto gen = generate(spec);
    const std::string name = spec.name.empty() ? scenario.stem().string() : spec.name;
    std::ostringstream nd;
    write_ndjson(nd, gen.queries);
    auto traffic = rc.out_dir / (name + ".ndjson");
    auto truth = rc.out_dir / (name + ".truth.json");
    write_file(traffic, nd.str());
    json t = gen.truth;
    t["scenario"] = name;
    t["seed"] = spec.rng_seed;
    t["channel"] = spec.channel;
    write_json(truth, t);
    write_manifest(rc, "generate", {scenario}, {traffic, truth});
    std::cout << "generated " << gen.queries.size() << " queries in " << gen.bursts.size() << " bursts -> "
              << traffic.string() << "\n";
    return 0;
}

InputFormat infer_format(const fs::path& input, const std::optional<std::string>& given) {
    if (given) return parse_format(*given);
    auto ext = input.extension().string();
    if (ext == ".csv") return InputFormat::csv;
    if (ext == ".pcap" || ext == ".cap") return InputFormat::pcap;
    return InputFormat::ndjson;
}

int cmd_ingest(const RunConfig& rc, const fs::path& input) {
    rc.ingest.validate();
    std::ifstream in(input, std::ios::binary);
    if (!in) throw Fatal("cannot read " + input.string());
    ParseResult parsed;
    try {
        parsed = parse_records(in, infer_format(input, rc.format));
    } catch (const FormatError& e) {
        throw Fatal(input.string() + ": " + e.what());
    }
    for (const auto& e : parsed.errors) std::cerr << "warning: " << e << "\n";
    auto split = split_channels(parsed.queries, rc.ingest);

    const auto dir = rc.out_dir / "channels";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<fs::path> outputs;
    std::string summary = "channel,master_ip,slave_ip,unit_id,slave_port,packets,bursts,mean_burst_length\n";
    std::vector<std::size_t> burst_counts(split.kept.size());
    std::vector<std::string> rows(split.kept.size());
    std::vector<fs::path> paths(split.kept.size());
    parallel_for(split.kept.size(), rc.jobs, [&](std::size_t i) {
        const auto& cs = split.kept[i];
        auto bursts = split_bursts(cs, rc.ingest);
        paths[i] = dir / (cs.channel.file_stem() + ".bursts.json");
        write_file(paths[i], bursts_json(cs.channel, bursts).dump() + "\n");
        const auto& c = cs.channel;
        rows[i] = c.file_stem() + "," + c.master_ip.to_string() + "," + c.slave_ip.to_string() + "," +
                  std::to_string(c.unit_id) + "," + std::to_string(c.slave_port) + "," +
                  std::to_string(cs.queries.size()) + "," + std::to_string(bursts.size()) + "," +
                  num(static_cast<double>(cs.queries.size()) / static_cast<double>(bursts.size())) + "\n";
        burst_counts[i] = bursts.size();
    });
    for (const auto& r : rows) summary += r;
    outputs.insert(outputs.end(), paths.begin(), paths.end());

    std::string dropped = "channel,master_ip,slave_ip,unit_id,slave_port,packets,reason\n";
    for (const auto& [c, n] : split.dropped)
        dropped += c.file_stem() + "," + c.master_ip.to_string() + "," + c.slave_ip.to_string() + "," +
                   std::to_string(c.unit_id) + "," + std::to_string(c.slave_port) + "," + std::to_string(n) +
                   ",below_min_packets\n";
    write_file(rc.out_dir / "channel_summary.csv", summary);
    write_file(rc.out_dir / "dropped.csv", dropped);
    write_json(rc.out_dir / "ingest_stats.json", json{{"queries", parsed.queries.size()},
                                                      {"malformed", parsed.malformed},
                                                      {"ipv6_rejected", parsed.ipv6_rejected},
                                                      {"non_query", parsed.non_query},
                                                      {"channels_kept", split.kept.size()},
                                                      {"channels_dropped", split.dropped.size()}});
    outputs.push_back(rc.out_dir / "channel_summary.csv");
    outputs.push_back(rc.out_dir / "dropped.csv");
    outputs.push_back(rc.out_dir / "ingest_stats.json");
    write_manifest(rc, "ingest", {input}, outputs);
    std::cout << "ingested " << parsed.queries.size() << " queries: " << split.kept.size() << " channels kept, "
              << split.dropped.size() << " dropped\n";
    return 0;
}

std::string shift_bucket(std::size_t shifts) {
    if (shifts == 0) return "0";
    if (shifts > 25) return ">25";
    const std::size_t lo = (shifts - 1) / 5 * 5 + 1;
    return std::to_string(lo) + "-" + std::to_string(lo + 4);
}

int cmd_phases(const RunConfig& rc) {
    rc.phases.validate();
    auto files = channel_files(rc);
    const auto dir = rc.out_dir / "phases";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<std::size_t> shifts(files.size());
    std::vector<std::vector<fs::path>> outs(files.size());
    parallel_for(files.size(), rc.jobs, [&](std::size_t i) {
        auto sc = load_channel(files[i]);
        const auto stem = sc.channel.file_stem();
        json report{{"channel", sc.channel}, {"bursts", sc.bursts.size()}};
        if (sc.bursts.size() < 2) {
            report.update(json{{"k", 1}, {"single_phase", true}, {"shifts", 0}, {"shift_windows", json::array()},
                               {"labels", json::array()}, {"note", "fewer than 2 windows; single phase"}});
            outs[i].push_back(dir / (stem + ".phases.json"));
            write_json(outs[i].back(), report);
            return;
        }
        auto pa = analyze_phases(sc.bursts, rc.phases, rc.seed);
        const auto& sel = pa.selection;

        std::string dist;
        for (std::size_t r = 0; r < pa.distances.size(); ++r) {
            for (std::size_t c = 0; c < pa.distances.size(); ++c) {
                if (c) dist += ",";
                dist += num(pa.distances(r, c));
            }
            dist += "\n";
        }
        std::string sil = "run,k,mean_silhouette\n";
        for (std::size_t r = 0; r < sel.table.size(); ++r)
            for (std::size_t j = 0; j < sel.table[r].size(); ++j)
                sil += std::to_string(r) + "," + std::to_string(j + 2) + "," + num(sel.table[r][j]) + "\n";

        json windows = json::array();
        for (const auto& w : pa.windows)
            windows.push_back({{"index", w.window_index},
                               {"burst_begin", w.burst_begin},
                               {"burst_end", w.burst_end},
                               {"start_time", w.start_time},
                               {"end_time", w.end_time},
                               {"empty", w.empty}});
        report.update(json{{"alphabet_size", pa.alphabet.size()},
                           {"windows", pa.windows.size()},
                           {"k", sel.k},
                           {"single_phase", sel.single_phase},
                           {"best_silhouette", sel.best_silhouette},
                           {"run_optima", sel.run_optima},
                           {"shifts", pa.shifts},
                           {"shift_windows", shift_positions(sel.assignment.labels)},
                           {"labels", sel.assignment.labels},
                           {"window_ranges", windows}});
        outs[i] = {dir / (stem + ".distance.csv"), dir / (stem + ".silhouette.csv"), dir / (stem + ".phases.json")};
        write_file(outs[i][0], dist);
        write_file(outs[i][1], sil);
        write_json(outs[i][2], report);
        shifts[i] = pa.shifts;
    });
    std::map<std::string, std::size_t> hist;
    const std::vector<std::string> order = {"0", "1-5", "6-10", "11-15", "16-20", "21-25", ">25"};
    for (const auto& b : order) hist[b] = 0;
    for (auto s : shifts) ++hist[shift_bucket(s)];
    std::string h = "shifts,channels\n";
    for (const auto& b : order) h += b + "," + std::to_string(hist[b]) + "\n";
    write_file(rc.out_dir / "phase_shift_histogram.csv", h);

    std::vector<fs::path> outputs;
    for (auto& o : outs) outputs.insert(outputs.end(), o.begin(), o.end());
    outputs.push_back(rc.out_dir / "phase_shift_histogram.csv");
    write_manifest(rc, "phases", files, outputs);
    std::cout << "phase analysis for " << files.size() << " channels\n";
    return 0;
}

TrainingSplitInfo split_info(const RunConfig& rc) {
    TrainingSplitInfo s;
    if (rc.train_all) {
        s.method = "all";
    } else if (rc.prefix) {
        s.method = "prefix";
        s.prefix_fraction = *rc.prefix;
    } else {
        s.method = "stride";
        s.stride = rc.stride;
        s.offset = rc.offset;
    }
    return s;
}

int cmd_train(const RunConfig& rc) {
    rc.phases.validate();
    auto files = channel_files(rc);
    const auto dir = rc.out_dir / "models";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto info = split_info(rc);
    std::vector<fs::path> outputs(files.size());
    parallel_for(files.size(), rc.jobs, [&](std::size_t i) {
        auto sc = load_channel(files[i]);
        auto split = info.apply(sc.bursts);
        if (split.train.empty()) throw Fatal(files[i].string() + ": training split is empty");
        auto model = train(split.train, rc.phases, rc.seed, sc.channel);
        model.split = info;
        outputs[i] = dir / (sc.channel.file_stem() + ".model.json");
        write_json(outputs[i], model);
    });
    write_manifest(rc, "train", files, outputs);
    std::cout << "trained " << files.size() << " channel models\n";
    return 0;
}

PhaseModel load_model(const fs::path& dir, const ChannelId& c) {
    auto p = dir / (c.file_stem() + ".model.json");
    if (!fs::exists(p))
        throw Fatal("missing model file " + p.string() + "; run 'phasedfa train' first (or pass --models-dir)");
    try {
        return read_json(p).get<PhaseModel>();
    } catch (const std::exception& e) {
        throw Fatal(p.string() + ": " + e.what());
    }
}

json summary_json(const RatioSummary& s) {
    return json{{"bursts", s.bursts},
                {"queries", s.queries},
                {"totals", s.totals},
                {"normal_ratio", opt_json(s.normal_ratio)},
                {"nmr_ratio", opt_json(s.nmr_ratio)},
                {"unknown_ratio", opt_json(s.unknown_ratio)},
                {"miss_ratio", opt_json(s.miss_ratio)},
                {"retransmit_ratio", opt_json(s.retransmit_ratio)},
                {"bad_beginning_ratio", opt_json(s.bad_beginning_ratio)},
                {"bad_ending_ratio", opt_json(s.bad_ending_ratio)}};
}

int cmd_enforce(const RunConfig& rc) {
    auto files = channel_files(rc);
    const auto models_dir = rc.models_dir.value_or(rc.out_dir / "models");
    if (!fs::is_directory(models_dir))
        throw Fatal("no models at " + models_dir.string() + "; run 'phasedfa train' first");
    if (rc.test_set != "split" && rc.test_set != "all") throw Fatal("--test-set must be 'split' or 'all'");
    const auto dir = rc.out_dir / "enforce";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::vector<json> summaries(files.size());
    std::vector<std::vector<fs::path>> outs(files.size());
    std::vector<fs::path> model_paths(files.size());
    parallel_for(files.size(), rc.jobs, [&](std::size_t i) {
        auto sc = load_channel(files[i]);
        auto model = load_model(models_dir, sc.channel);
        model_paths[i] = models_dir / (sc.channel.file_stem() + ".model.json");
        std::vector<Burst> test;
        std::vector<std::size_t> idx;
        if (rc.test_set == "all") {
            test = sc.bursts;
            for (std::size_t b = 0; b < test.size(); ++b) idx.push_back(b);
        } else {
            auto split = model.split.apply(sc.bursts);
            test = std::move(split.test);
            idx = std::move(split.test_indices);
        }
        auto res = enforce(model, test);
        const auto stem = sc.channel.file_stem();
        std::string csv =
            "burst_index,start_time,length,phase,normal,miss,unknown,retransmit,wrong_beginning,wrong_ending,"
            "flagged,dominant\n";
        for (std::size_t b = 0; b < res.per_burst.size(); ++b) {
            const auto& s = res.per_burst[b];
            const auto& c = s.counters;
            auto dom = c.dominant_anomaly();
            csv += std::to_string(idx[b]) + "," + num(test[b].start_time) + "," + std::to_string(test[b].size()) +
                   "," + std::to_string(s.phase) + "," + std::to_string(c.normal) + "," + std::to_string(c.miss) +
                   "," + std::to_string(c.unknown) + "," + std::to_string(c.retransmit) + "," +
                   std::to_string(c.wrong_beginning) + "," + std::to_string(c.wrong_ending) + "," +
                   (s.flagged() ? "1" : "0") + "," + (dom ? to_string(*dom) : "") + "\n";
        }
        outs[i].push_back(dir / (stem + ".csv"));
        write_file(outs[i].back(), csv);
        if (rc.parts > 0 && !test.empty()) {
            std::string p =
                "part,burst_begin,burst_end,start_time,end_time,normal_ratio,nmr_ratio,unknown_ratio,miss_ratio,"
                "retransmit_ratio,bad_beginning_ratio,bad_ending_ratio\n";
            for (const auto& ps : score_over_time(model, test, rc.parts)) {
                const auto& s = ps.summary;
                p += std::to_string(ps.part) + "," + std::to_string(ps.burst_begin) + "," +
                     std::to_string(ps.burst_end) + "," + num(ps.start_time) + "," + num(ps.end_time) + "," +
                     opt_num(s.normal_ratio) + "," + opt_num(s.nmr_ratio) + "," + opt_num(s.unknown_ratio) + "," +
                     opt_num(s.miss_ratio) + "," + opt_num(s.retransmit_ratio) + "," +
                     opt_num(s.bad_beginning_ratio) + "," + opt_num(s.bad_ending_ratio) + "\n";
            }
            outs[i].push_back(dir / (stem + ".parts.csv"));
            write_file(outs[i].back(), p);
        }
        std::size_t flagged = 0;
        for (const auto& s : res.per_burst) flagged += s.flagged() ? 1 : 0;
        auto sj = summary_json(res.summary);
        sj["channel"] = sc.channel;
        sj["stem"] = stem;
        sj["k"] = model.k;
        sj["flagged_bursts"] = flagged;
        summaries[i] = sj;
    });
    json all = json::array();
    for (auto& s : summaries) all.push_back(std::move(s));
    write_json(rc.out_dir / "enforce_summary.json", json{{"channels", all}});
    std::vector<fs::path> outputs;
    for (auto& o : outs) outputs.insert(outputs.end(), o.begin(), o.end());
    outputs.push_back(rc.out_dir / "enforce_summary.json");
    auto inputs = files;
    inputs.insert(inputs.end(), model_paths.begin(), model_paths.end());
    write_manifest(rc, "enforce", inputs, outputs);
    std::cout << "enforced " << files.size() << " channels\n";
    return 0;
}

int cmd_perm(const RunConfig& rc) {
    auto files = channel_files(rc);
    const auto models_dir = rc.models_dir.value_or(rc.out_dir / "models");
    std::vector<std::string> rows(files.size());
    std::vector<fs::path> inputs;
    std::mutex mu;
    parallel_for(files.size(), rc.jobs, [&](std::size_t i) {
        auto sc = load_channel(files[i]);
        auto model = load_model(models_dir, sc.channel);
        {
            std::lock_guard lk(mu);
            inputs.push_back(models_dir / (sc.channel.file_stem() + ".model.json"));
        }
        const std::size_t b = rc.perm_b.value_or(typical_burst_length(sc.bursts));
        auto rep = r_perm_model(model, b, rc.perm_k_max);
        const AdjMatrix merged = model.merged();
        auto merged_count = count_paths_single(merged, b);
        auto mv = r_perm_from_count(merged_count, std::max<std::size_t>(1, model.alphabet.size()), b);
        rows[i] = sc.channel.file_stem() + "," + std::to_string(rep.alphabet_size_s) + "," + std::to_string(b) + "," +
                  std::to_string(rep.k) + "," + rep.allowed_paths.str() + "," + num(rep.r_perm) + "," +
                  merged_count.str() + "," + num(mv.r_perm) + "," + (rep.no_complete_paths ? "1" : "0") + "\n";
    });
    std::string csv = "channel,s,b,k,allowed_paths,r_perm,merged_allowed_paths,merged_r_perm,no_complete_paths\n";
    for (const auto& r : rows) csv += r;
    write_file(rc.out_dir / "perm.csv", csv);
    std::sort(inputs.begin(), inputs.end());
    auto all_inputs = files;
    all_inputs.insert(all_inputs.end(), inputs.begin(), inputs.end());
    write_manifest(rc, "perm", all_inputs, {rc.out_dir / "perm.csv"});
    std::cout << "permissiveness for " << files.size() << " channels -> " << (rc.out_dir / "perm.csv").string() << "\n";
    return 0;
}

int cmd_report(const RunConfig& rc) {
    const auto summary_path = rc.out_dir / "enforce_summary.json";
    if (!fs::exists(summary_path)) throw Fatal("no enforce_summary.json; run 'phasedfa enforce' first");
    auto summary = read_json(summary_path);
    std::vector<fs::path> inputs{summary_path};
    json channels = json::array();
    std::vector<double> normal, nmr;
    BurstCounters totals;
    std::size_t queries = 0, bursts = 0;
    for (const auto& ch : summary.at("channels")) {
        json row{{"channel", ch.at("stem")},
                 {"k", ch.at("k")},
                 {"normal_ratio", ch.at("normal_ratio")},
                 {"nmr_ratio", ch.at("nmr_ratio")},
                 {"flagged_bursts", ch.at("flagged_bursts")}};
        auto phases_path = rc.out_dir / "phases" / (ch.at("stem").get<std::string>() + ".phases.json");
        if (fs::exists(phases_path)) {
            auto pj = read_json(phases_path);
            row["phase_shifts"] = pj.at("shifts");
            row["single_phase"] = pj.at("single_phase");
            inputs.push_back(phases_path);
        }
        if (!ch.at("normal_ratio").is_null()) normal.push_back(ch.at("normal_ratio").get<double>());
        if (!ch.at("nmr_ratio").is_null()) nmr.push_back(ch.at("nmr_ratio").get<double>());
        const auto& t = ch.at("totals");
        totals += BurstCounters{t.at("normal"), t.at("miss"), t.at("unknown"), t.at("retransmit"),
                                t.at("wrong_beginning"), t.at("wrong_ending")};
        queries += ch.at("queries").get<std::size_t>();
        bursts += ch.at("bursts").get<std::size_t>();
        channels.push_back(std::move(row));
    }
    auto perm_path = rc.out_dir / "perm.csv";
    json perm = json::array();
    if (fs::exists(perm_path)) {
        std::istringstream in(read_file(perm_path));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> f;
            std::stringstream ls(line);
            for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
            if (f.size() >= 8)
                perm.push_back({{"channel", f[0]}, {"b", std::stoul(f[2])}, {"r_perm", std::stod(f[5])},
                                {"merged_r_perm", std::stod(f[7])}});
        }
        inputs.push_back(perm_path);
    }
    // Pooled channel-level ratios: per-burst q_end exit checks are excluded.
    std::optional<double> pooled_normal, pooled_nmr;
    if (queries > 0) {
        const double qn = static_cast<double>(totals.normal - (bursts - totals.wrong_ending));
        pooled_normal = qn / static_cast<double>(queries);
        pooled_nmr = (qn + static_cast<double>(totals.miss + totals.retransmit)) / static_cast<double>(queries);
    }
    write_json(rc.out_dir / "report.json", json{{"channels", channels},
                                                {"pooled",
                                                 {{"queries", queries},
                                                  {"bursts", bursts},
                                                  {"totals", totals},
                                                  {"normal_ratio", opt_json(pooled_normal)},
                                                  {"nmr_ratio", opt_json(pooled_nmr)}}},
                                                {"permissiveness", perm}});
    std::string cdf = "metric,value,cumulative_fraction\n";
    for (auto [name, vals] : {std::pair{"normal_ratio", &normal}, std::pair{"nmr_ratio", &nmr}}) {
        std::sort(vals->begin(), vals->end());
        for (std::size_t i = 0; i < vals->size(); ++i)
            cdf += std::string(name) + "," + num((*vals)[i]) + "," +
                   num(static_cast<double>(i + 1) / static_cast<double>(vals->size())) + "\n";
    }
    write_file(rc.out_dir / "anomaly_cdf.csv", cdf);
    write_manifest(rc, "report", inputs, {rc.out_dir / "report.json", rc.out_dir / "anomaly_cdf.csv"});
    std::cout << "report for " << channels.size() << " channels\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phasedfa: multi-phase DFA modeling of Modbus/TCP channels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(PHASEDFA_VERSION));
    RunConfig rc;
    app.add_option("--seed", rc.seed, "RNG seed for every randomized step")->capture_default_str();
    app.add_option("--jobs", rc.jobs, "Channels processed concurrently")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--out-dir", rc.out_dir, "Output directory")->capture_default_str();
    app.add_option("--config", rc.config_file, "JSON file overriding defaults")->check(CLI::ExistingFile);

    auto* gen = app.add_subcommand("generate", "Emit NDJSON traffic and ground truth for a scenario");
    fs::path scenario;
    gen->add_option("scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);

    auto* ing = app.add_subcommand("ingest", "Parse a capture into per-channel burst files");
    fs::path input;
    ing->add_option("input", input, "NDJSON, CSV or pcap file")->required()->check(CLI::ExistingFile);
    ing->add_option("--format", rc.format, "ndjson | csv | pcap (default: by extension)");
    ing->add_option("--burst-gap", rc.ingest.burst_gap_threshold, "Burst gap threshold in seconds");
    ing->add_option("--min-packets", rc.ingest.min_channel_packets, "Drop channels with fewer queries");

    auto add_phase_opts = [&](CLI::App* sub) {
        sub->add_option("--windows", rc.phases.num_windows, "Windows per channel");
        sub->add_option("--k-max", rc.phases.k_max, "Largest k tried");
        sub->add_option("--k-runs", rc.phases.k_selection_runs, "Independent k-selection runs");
        sub->add_option("--kmeans-iters", rc.phases.kmeans_max_iters, "Lloyd iteration cap");
        sub->add_option("--kmeans-restarts", rc.phases.kmeans_restarts, "Restarts per k");
        sub->add_option("--silhouette-floor", rc.phases.silhouette_floor, "Below this the channel is single-phase");
        sub->add_option("--partition", rc.phases.partition, "bursts | duration")
            ->transform(CLI::CheckedTransformer(
                std::map<std::string, WindowPartition>{{"bursts", WindowPartition::equal_bursts},
                                                       {"duration", WindowPartition::equal_duration}}));
    };
    auto* ph = app.add_subcommand("phases", "Detect traffic phases per channel");
    add_phase_opts(ph);

    auto* tr = app.add_subcommand("train", "Train k-phase models");
    add_phase_opts(tr);
    tr->add_option("--stride", rc.stride, "Every n-th burst trains")->check(CLI::PositiveNumber);
    tr->add_option("--offset", rc.offset, "First training burst index");
    auto* pre = tr->add_option("--prefix", rc.prefix, "Train on this leading fraction instead of sampling")
                    ->check(CLI::Range(0.0, 1.0));
    tr->add_flag("--all", rc.train_all, "Train on every burst")->excludes(pre);

    auto* en = app.add_subcommand("enforce", "Score bursts against the trained models");
    en->add_option("--parts", rc.parts, "Also emit per-part ratio tables with this many parts");
    en->add_option("--test-set", rc.test_set, "split (held-out bursts) | all")->capture_default_str();
    en->add_option("--models-dir", rc.models_dir, "Read models from here instead of <out-dir>/models");

    auto* pm = app.add_subcommand("perm", "Permissiveness of each model");
    pm->add_option("--b", rc.perm_b, "Path length (default: rounded mean burst length)")->check(CLI::PositiveNumber);
    pm->add_option("--k-limit", rc.perm_k_max, "Largest k accepted by inclusion-exclusion")->capture_default_str();
    pm->add_option("--models-dir", rc.models_dir, "Read models from here instead of <out-dir>/models");

    auto* rp = app.add_subcommand("report", "Aggregate report and CDF tables");

    CLI11_PARSE(app, argc, argv);
    try {
        if (rc.config_file) {
            auto* sub = app.get_subcommands().front();
            auto j = read_json(*rc.config_file);
            apply_config_file(rc, j, app, *sub);
        }
        fs::create_directories(rc.out_dir);
        if (gen->parsed()) return cmd_generate(rc, scenario, app.get_option("--seed")->count() > 0);
        if (ing->parsed()) return cmd_ingest(rc, input);
        if (ph->parsed()) return cmd_phases(rc);
        if (tr->parsed()) return cmd_train(rc);
        if (en->parsed()) return cmd_enforce(rc);
        if (pm->parsed()) return cmd_perm(rc);
        if (rp->parsed()) return cmd_report(rc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
