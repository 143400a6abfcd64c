#include "hloblab/cli.hpp"

#include "hloblab/digest.hpp"
#include "hloblab/gradcheck_suite.hpp"
#include "hloblab/infonet.hpp"
#include "hloblab/preprocess.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace hloblab::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using config::RunConfig;
using config::Stage;

namespace {

constexpr const char* kVerbs[] = {"synth", "ingest", "mi", "tmfg", "train", "eval", "report", "describe", "gradcheck"};

std::uint64_t day_serial(lob::Date day) {
    return static_cast<std::uint64_t>(std::chrono::sys_days(day).time_since_epoch().count());
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::IoFailure, "short write to " + path.string());
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot read " + path.string() + " (run the earlier stage first?)");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, path.string() + ": " + e.what());
    }
}

/// Artifacts carry the digest of the stage that wrote them.
void require_digest(const json& artifact, const fs::path& path, std::uint64_t expected) {
    const auto found = artifact.value("config_digest", std::string{});
    if (found != hex_digest(expected)) {
        throw Error(ErrorCode::DigestMismatch, path.string() + " was produced under config digest '" + found +
                                                   "', current configuration gives " + hex_digest(expected) +
                                                   "; rerun the upstream stages");
    }
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure by index order.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> failures(n);
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, n); ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    for (auto& f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }
}

struct StageClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void write_manifest(const RunConfig& cfg, const std::string& stage, Stage digest_stage, const StageClock& clock,
                    std::vector<fs::path> outputs) {
    std::sort(outputs.begin(), outputs.end());
    json files = json::array();
    for (const auto& p : outputs) {
        files.push_back(fs::relative(p, cfg.out_dir).generic_string());
    }
    write_json(cfg.out_dir / stage / "manifest.json",
               {{"stage", stage},
                {"config_digest", hex_digest(cfg.digest(digest_stage))},
                {"seed", cfg.seed},
                {"wall_clock_seconds", clock.seconds()},
                {"outputs", files}});
}

fs::path clean_dir(const RunConfig& cfg) { return cfg.out_dir / "ingest" / "clean"; }
fs::path norm_path(const RunConfig& cfg, lob::Date d) {
    return cfg.out_dir / "ingest" / ("norm_" + lob::format_date(d) + ".json");
}

json days_json(const std::vector<lob::Date>& days) {
    json a = json::array();
    for (auto d : days) {
        a.push_back(lob::format_date(d));
    }
    return a;
}

// ---------------------------------------------------------------------------
// synth

int run_synth(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
    StageClock clock;
    if (cfg.synth_days.empty()) {
        throw Error(ErrorCode::ConfigError, "synth.days: no days to synthesize");
    }
    std::vector<fs::path> written(cfg.synth_days.size() * 2);
    parallel_for(cfg.synth_days.size(), jobs, [&](std::size_t i) {
        const auto day = cfg.synth_days[i];
        const auto series =
            lob::synthesize_lob(mix_seed(cfg.seed, day_serial(day)), cfg.synth_events, cfg.synth_regime, cfg.meta, day);
        lob::write_lobster_pair(cfg.data_dir, series);
        const auto paths = lob::lobster_paths(cfg.data_dir, cfg.ticker, day);
        written[2 * i] = paths.orderbook;
        written[2 * i + 1] = paths.message;
    });
    write_manifest(cfg, "synth", Stage::Synth, clock, written);
    out << "synth: wrote " << cfg.synth_days.size() << " day(s) to " << cfg.data_dir.string() << "\n";
    return kSuccess;
}

// ---------------------------------------------------------------------------
// ingest

int run_ingest(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
    StageClock clock;
    const auto days = lob::available_days(cfg.data_dir, cfg.ticker);
    if (days.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no LOBSTER pairs for " + cfg.ticker + " in " + cfg.data_dir.string());
    }
    std::vector<lob::LobSeries> cleaned(days.size());
    std::vector<json> rows(days.size());
    parallel_for(days.size(), jobs, [&](std::size_t i) {
        Diagnostics diags;
        const auto raw = lob::read_lobster_pair(cfg.data_dir, cfg.meta, days[i], &diags);
        cleaned[i] = lob::clean_session(raw, std::chrono::minutes(cfg.trim_start_min),
                                        std::chrono::minutes(cfg.trim_end_min), &diags);
        lob::write_lobster_pair(clean_dir(cfg), cleaned[i]);
        std::map<std::string, std::size_t> counts;
        for (const auto& d : diags) {
            ++counts[std::string(to_string(d.code))];
        }
        double depth_sum[2] = {0.0, 0.0};
        std::size_t depth_n[2] = {0, 0};
        for (const auto& snap : cleaned[i].snapshots) {
            for (int s = 0; s < 2; ++s) {
                try {
                    depth_sum[s] += lob::actual_depth(snap, s == 0 ? lob::Side::Ask : lob::Side::Bid,
                                                      cfg.meta.tick_size);
                    ++depth_n[s];
                } catch (const Error&) {
                }
            }
        }
        const double spread = lob::mean_spread(cleaned[i]);
        rows[i] = {{"day", lob::format_date(days[i])},
                   {"raw_rows", raw.size()},
                   {"clean_rows", cleaned[i].size()},
                   {"diagnostics", counts},
                   {"mean_spread_ticks", spread / static_cast<double>(cfg.meta.tick_size)},
                   {"tick_class", std::string(lob::to_string(lob::classify_tick_size(
                                      spread, static_cast<double>(cfg.meta.tick_size))))},
                   {"mean_depth_ask", depth_n[0] ? depth_sum[0] / static_cast<double>(depth_n[0]) : 0.0},
                   {"mean_depth_bid", depth_n[1] ? depth_sum[1] / static_cast<double>(depth_n[1]) : 0.0}};
    });

    std::vector<fs::path> outputs;
    for (auto d : days) {
        const auto p = lob::lobster_paths(clean_dir(cfg), cfg.ticker, d);
        outputs.push_back(p.orderbook);
        outputs.push_back(p.message);
    }
    std::size_t normalized = 0;
    for (std::size_t i = prep::kHistoryDays; i < days.size(); ++i) {
        const auto stats = prep::compute_norm_stats(
            std::span<const lob::LobSeries>(cleaned).subspan(i - prep::kHistoryDays, prep::kHistoryDays));
        const auto path = norm_path(cfg, days[i]);
        write_json(path, {{"config_digest", hex_digest(cfg.digest(Stage::Ingest))},
                          {"day", lob::format_date(days[i])},
                          {"source_days", days_json(stats.source_days)},
                          {"mean", stats.mean},
                          {"std", stats.std}});
        outputs.push_back(path);
        ++normalized;
    }
    const auto summary = cfg.out_dir / "ingest" / "summary.json";
    write_json(summary, {{"config_digest", hex_digest(cfg.digest(Stage::Ingest))},
                         {"ticker", cfg.ticker},
                         {"tick_size", cfg.meta.tick_size},
                         {"days", rows}});
    outputs.push_back(summary);
    write_manifest(cfg, "ingest", Stage::Ingest, clock, outputs);
    out << "ingest: " << days.size() << " day(s) cleaned, " << normalized << " with normalization statistics\n";
    return kSuccess;
}

std::set<lob::Date> ingested_days(const RunConfig& cfg) {
    const auto path = cfg.out_dir / "ingest" / "summary.json";
    const auto summary = read_json(path);
    require_digest(summary, path, cfg.digest(Stage::Ingest));
    std::set<lob::Date> days;
    for (const auto& row : summary.at("days")) {
        days.insert(lob::parse_date(row.at("day").get<std::string>()));
    }
    return days;
}

void require_ingested(const std::set<lob::Date>& have, const std::vector<lob::Date>& want, const char* key) {
    for (auto d : want) {
        if (!have.contains(d)) {
            throw Error(ErrorCode::ConfigError,
                        std::string(key) + ": day " + lob::format_date(d) + " was not ingested (no data on disk)");
        }
    }
}

lob::LobSeries load_clean(const RunConfig& cfg, lob::Date day) {
    return lob::read_lobster_pair(clean_dir(cfg), cfg.meta, day);
}

// ---------------------------------------------------------------------------
// mi

int run_mi(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
    StageClock clock;
    if (cfg.train_days.empty()) {
        throw Error(ErrorCode::ConfigError, "split.train: no training days");
    }
    require_ingested(ingested_days(cfg), cfg.train_days, "split.train");
    const auto digest = hex_digest(cfg.digest(Stage::Mi));
    std::vector<infonet::MiMatrix> daily(cfg.train_days.size());
    std::vector<fs::path> outputs(cfg.train_days.size());
    parallel_for(cfg.train_days.size(), jobs, [&](std::size_t i) {
        const auto day = cfg.train_days[i];
        const auto binned = infonet::bin_volumes(load_clean(cfg, day), cfg.n_bins);
        daily[i] = infonet::daily_mi_matrix(binned, cfg.bootstrap, mix_seed(cfg.seed, day_serial(day)));
        outputs[i] = cfg.out_dir / "mi" / ("daily_" + lob::format_date(day) + ".json");
        write_json(outputs[i], {{"config_digest", digest},
                                {"day", lob::format_date(day)},
                                {"bins", cfg.n_bins},
                                {"bootstrap", cfg.bootstrap},
                                {"matrix", infonet::mi_to_json(daily[i])}});
    });
    const auto average = infonet::average_mi(daily);
    const auto avg_json = cfg.out_dir / "mi" / "average.json";
    const auto avg_csv = cfg.out_dir / "mi" / "average.csv";
    write_json(avg_json, {{"config_digest", digest},
                          {"days", days_json(cfg.train_days)},
                          {"matrix", infonet::mi_to_json(average)}});
    infonet::write_mi_csv(avg_csv, average);
    outputs.push_back(avg_json);
    outputs.push_back(avg_csv);
    write_manifest(cfg, "mi", Stage::Mi, clock, outputs);
    out << "mi: averaged " << daily.size() << " daily matrices over " << infonet::kVertices << " vertices\n";
    return kSuccess;
}

// ---------------------------------------------------------------------------
// tmfg

int run_tmfg(const RunConfig& cfg, const std::string& input, std::ostream& out) {
    StageClock clock;
    const fs::path in_path = input.empty() ? cfg.out_dir / "mi" / "average.json" : fs::path(input);
    const auto doc = read_json(in_path);
    if (input.empty() || doc.contains("config_digest")) {
        require_digest(doc, in_path, cfg.digest(Stage::Mi));
    }
    const auto matrix = infonet::mi_from_json(doc.contains("matrix") ? doc.at("matrix") : doc);
    const auto graph = infonet::build_tmfg(matrix);
    const auto complex = infonet::extract_simplices(graph);
    auto simplices = infonet::complex_to_json(complex);
    simplices["config_digest"] = hex_digest(cfg.digest(Stage::Tmfg));
    simplices["score"] = infonet::graph_score(matrix, graph);
    auto graph_json = infonet::tmfg_to_json(graph);
    graph_json["config_digest"] = hex_digest(cfg.digest(Stage::Tmfg));
    const auto s_path = cfg.out_dir / "tmfg" / "simplices.json";
    const auto g_path = cfg.out_dir / "tmfg" / "graph.json";
    write_json(s_path, simplices);
    write_json(g_path, graph_json);
    write_manifest(cfg, "tmfg", Stage::Tmfg, clock, {s_path, g_path});
    out << "tmfg: " << complex.tetrahedra.size() << " tetrahedra, " << complex.triangles.size() << " triangles, "
        << complex.edges.size() << " edges\n";
    return kSuccess;
}

infonet::SimplicialComplex load_complex(const RunConfig& cfg) {
    const auto path = cfg.out_dir / "tmfg" / "simplices.json";
    const auto doc = read_json(path);
    require_digest(doc, path, cfg.digest(Stage::Tmfg));
    return infonet::complex_from_json(doc);
}

// ---------------------------------------------------------------------------
// datasets

prep::NormStats load_norm(const RunConfig& cfg, lob::Date day) {
    const auto path = norm_path(cfg, day);
    if (!fs::exists(path)) {
        throw Error(ErrorCode::InsufficientHistory,
                    "day " + lob::format_date(day) + " has fewer than " + std::to_string(prep::kHistoryDays) +
                        " earlier ingested days to normalize against");
    }
    const auto doc = read_json(path);
    require_digest(doc, path, cfg.digest(Stage::Ingest));
    prep::NormStats stats;
    stats.mean = doc.at("mean").get<std::array<double, lob::kFeatures>>();
    stats.std = doc.at("std").get<std::array<double, lob::kFeatures>>();
    for (const auto& d : doc.at("source_days")) {
        stats.source_days.push_back(lob::parse_date(d.get<std::string>()));
    }
    return stats;
}

train::DayWindows day_windows(const RunConfig& cfg, lob::Date day) {
    const auto series = load_clean(cfg, day);
    auto normalized = std::make_shared<const prep::RowMatrix>(prep::normalize_day(series, load_norm(cfg, day)));
    const auto mids = prep::mid_prices(series);
    const auto labels = prep::label_series(mids, cfg.train.horizon, static_cast<double>(cfg.meta.tick_size));
    return {day, prep::build_windows(normalized, labels, cfg.window, day)};
}

std::vector<train::DayWindows> load_days(const RunConfig& cfg, const std::vector<lob::Date>& days, std::size_t jobs) {
    std::vector<train::DayWindows> out(days.size());
    parallel_for(days.size(), jobs, [&](std::size_t i) { out[i] = day_windows(cfg, days[i]); });
    return out;
}

std::vector<prep::LabeledWindow> flatten(const std::vector<train::DayWindows>& days) {
    std::vector<prep::LabeledWindow> all;
    for (const auto& d : days) {
        all.insert(all.end(), d.windows.begin(), d.windows.end());
    }
    return all;
}

// ---------------------------------------------------------------------------
// train

template <typename Real>
int train_typed(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
    StageClock clock;
    if (cfg.validation_days.empty()) {
        throw Error(ErrorCode::ConfigError, "split.validation: no validation days");
    }
    const auto have = ingested_days(cfg);
    require_ingested(have, cfg.train_days, "split.train");
    require_ingested(have, cfg.validation_days, "split.validation");
    const auto complex = load_complex(cfg);
    const auto maps = infonet::head_column_maps(complex);
    const auto model_cfg = cfg.model_config(complex);

    Diagnostics diags;
    const auto train_days = load_days(cfg, cfg.train_days, jobs);
    const auto train_set = train::balanced_training_set(train_days, cfg.train.sample_cap, cfg.seed, &diags);
    const auto validation_set = flatten(load_days(cfg, cfg.validation_days, jobs));
    if (train_set.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no training day contains all three classes");
    }

    model::HlobModel<Real> net(model_cfg, mix_seed(cfg.seed, 0x40de1));
    const auto history = train::train(net, maps, train_set, validation_set, cfg.train);

    const auto dir = cfg.out_dir / "train";
    const auto ckpt = dir / "checkpoint.bin";
    model::save_checkpoint(net, ckpt, {cfg.seed, cfg.digest(Stage::Train), history.optimizer_steps});
    std::ostringstream csv;
    csv << "epoch,train_loss,validation_loss\n";
    json train_hist = json::array();
    json val_hist = json::array();
    char buf[96];
    for (const auto& e : history.epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f\n", e.epoch, e.train_loss, e.validation_loss);
        csv << buf;
        train_hist.push_back(e.train_loss);
        val_hist.push_back(e.validation_loss);
    }
    write_text(dir / "history.csv", csv.str());
    json skipped = json::array();
    for (const auto& d : diags) {
        skipped.push_back(d.message);
    }
    write_json(dir / "summary.json", {{"config_digest", hex_digest(cfg.digest(Stage::Train))},
                                      {"model_digest", hex_digest(model_cfg.digest())},
                                      {"model", model_cfg.canonical()},
                                      {"precision", sizeof(Real) == 8 ? "double" : "float"},
                                      {"parameters", net.parameter_count()},
                                      {"train_windows", train_set.size()},
                                      {"validation_windows", validation_set.size()},
                                      {"epochs", history.epochs.size()},
                                      {"best_epoch", history.best_epoch},
                                      {"best_validation_loss", history.best_validation_loss},
                                      {"stopped_early", history.stopped_early},
                                      {"optimizer_steps", history.optimizer_steps},
                                      {"skipped_days", skipped},
                                      {"train_loss_history", train_hist},
                                      {"validation_loss_history", val_hist}});
    write_manifest(cfg, "train", Stage::Train, clock, {ckpt, dir / "history.csv", dir / "summary.json"});
    out << "train: " << history.epochs.size() << " epoch(s), best validation loss "
        << history.best_validation_loss << " at epoch " << history.best_epoch << "\n";
    return kSuccess;
}

// ---------------------------------------------------------------------------
// eval

std::string year_label(const RunConfig& cfg) {
    if (!cfg.report_year.empty()) {
        return cfg.report_year;
    }
    std::set<int> years;
    for (auto d : cfg.test_days) {
        years.insert(static_cast<int>(d.year()));
    }
    std::string s;
    for (int y : years) {
        s += (s.empty() ? "" : "+") + std::to_string(y);
    }
    return s;
}

template <typename Real>
int eval_typed(const RunConfig& cfg, std::size_t jobs, std::ostream& out) {
    StageClock clock;
    if (cfg.test_days.empty()) {
        throw Error(ErrorCode::ConfigError, "split.test: no test days");
    }
    require_ingested(ingested_days(cfg), cfg.test_days, "split.test");
    const auto complex = load_complex(cfg);
    const auto maps = infonet::head_column_maps(complex);
    const auto ckpt_path = cfg.out_dir / "train" / "checkpoint.bin";
    auto loaded = model::load_checkpoint<Real>(ckpt_path, cfg.model_config(complex));
    if (loaded.meta.run_digest != cfg.digest(Stage::Train)) {
        throw Error(ErrorCode::DigestMismatch, ckpt_path.string() + " was trained under config digest " +
                                                   hex_digest(loaded.meta.run_digest) + ", current is " +
                                                   hex_digest(cfg.digest(Stage::Train)));
    }
    const auto summary_path = cfg.out_dir / "train" / "summary.json";
    const auto summary = read_json(summary_path);
    require_digest(summary, summary_path, cfg.digest(Stage::Train));

    const auto test_set = flatten(load_days(cfg, cfg.test_days, jobs));
    const auto report = train::evaluate(loaded.model, maps, test_set, cfg.train.batch_size);
    json confusion = json::array();
    for (const auto& row : report.confusion) {
        confusion.push_back(row);
    }
    const auto path = cfg.out_dir / "eval" / "report.json";
    write_json(path, {{"config_digest", hex_digest(cfg.digest(Stage::Eval))},
                      {"model", "hlob"},
                      {"ticker", cfg.ticker},
                      {"year", year_label(cfg)},
                      {"horizon", cfg.train.horizon},
                      {"test_days", days_json(cfg.test_days)},
                      {"test_windows", test_set.size()},
                      {"f1_average", "macro"},
                      {"f1", report.f1_macro},
                      {"mcc", report.mcc},
                      {"p_t", report.p_t},
                      {"tt", report.tt},
                      {"round_trip_definition", train::kRoundTripDefinition},
                      {"confusion", confusion},
                      {"train_loss_history", summary.at("train_loss_history")},
                      {"validation_loss_history", summary.at("validation_loss_history")}});
    write_manifest(cfg, "eval", Stage::Eval, clock, {path});
    out << "eval: " << test_set.size() << " window(s), f1 " << report.f1_macro << ", mcc " << report.mcc << ", p_t "
        << report.p_t << ", tt " << report.tt << "\n";
    return kSuccess;
}

// ---------------------------------------------------------------------------
// report

int run_report(const RunConfig& cfg, const std::vector<std::string>& inputs, std::ostream& out) {
    StageClock clock;
    std::vector<fs::path> paths(inputs.begin(), inputs.end());
    const bool own = paths.empty();
    if (own) {
        paths.push_back(cfg.out_dir / "eval" / "report.json");
    }
    std::vector<train::RunRecord> records;
    for (const auto& p : paths) {
        const auto doc = read_json(p);
        if (own) {
            require_digest(doc, p, cfg.digest(Stage::Eval));
        }
        train::RunRecord r;
        try {
            r.model = doc.value("model", std::string("hlob"));
            r.ticker = doc.at("ticker").get<std::string>();
            r.year = doc.at("year").get<std::string>();
            r.horizon = doc.at("horizon").get<std::size_t>();
            r.report.f1_macro = doc.at("f1").get<double>();
            r.report.mcc = doc.at("mcc").get<double>();
            r.report.p_t = doc.at("p_t").get<double>();
            r.report.tt = doc.at("tt").get<std::int64_t>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::IoFailure, p.string() + ": " + e.what());
        }
        records.push_back(std::move(r));
    }
    const auto written = train::emit_report(records, cfg.out_dir / "report");
    write_manifest(cfg, "report", Stage::Report, clock, written);
    for (const auto& w : written) {
        out << "report: wrote " << w.string() << "\n";
    }
    return kSuccess;
}

// ---------------------------------------------------------------------------
// describe

int run_describe(const std::optional<RunConfig>& cfg, bool shapes, std::ostream& out) {
    model::HlobConfig model_cfg;
    std::string source = "default geometry";
    if (cfg) {
        model_cfg.window = cfg->window;
        model_cfg.dropout = cfg->dropout;
        const auto path = cfg->out_dir / "tmfg" / "simplices.json";
        if (fs::exists(path)) {
            model_cfg = cfg->model_config(load_complex(*cfg));
            source = path.string();
        }
    }
    const model::HlobModel<float> net(model_cfg, 0);
    out << "# geometry: " << source << "\n";
    out << "# model digest: " << hex_digest(model_cfg.digest()) << "\n";
    char buf[128];
    out << "layer parameters\n";
    for (const auto& row : net.layer_table()) {
        std::snprintf(buf, sizeof buf, "%-32s %8zu\n", row.name.c_str(), row.parameters);
        out << buf;
    }
    out << "\ncomponent parameters\n";
    for (const auto& row : net.component_table()) {
        std::snprintf(buf, sizeof buf, "%-32s %8zu\n", row.name.c_str(), row.parameters);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-32s %8zu\n", "total", net.parameter_count());
    out << buf;
    if (shapes) {
        std::array<nn::Tensor<float>, 3> heads;
        for (std::size_t h = 0; h < 3; ++h) {
            heads[h] = nn::Tensor<float>({1, 1, model_cfg.window, model_cfg.widths[h]});
        }
        std::vector<model::ShapeProbe> probes;
        nn::NoGradGuard no_grad;
        net.forward(heads, nn::Mode::Eval, nullptr, &probes);
        out << "\nshape cascade (batch 1)\n";
        for (const auto& p : probes) {
            std::snprintf(buf, sizeof buf, "%-32s %s\n", p.name.c_str(), nn::shape_string(p.shape).c_str());
            out << buf;
        }
    }
    return kSuccess;
}

// ---------------------------------------------------------------------------
// gradcheck

int run_gradcheck(const std::string& precision, std::uint64_t seed, std::ostream& out) {
    std::vector<std::pair<const char*, nn::Precision>> runs;
    if (precision == "double" || precision == "both") {
        runs.emplace_back("64-bit", nn::Precision::Float64);
    }
    if (precision == "float" || precision == "both") {
        runs.emplace_back("32-bit", nn::Precision::Float32);
    }
    bool all = true;
    char buf[192];
    for (const auto& [label, p] : runs) {
        double worst = 0.0;
        for (const auto& e : nn::run_gradcheck_suite(p, seed)) {
            std::snprintf(buf, sizeof buf, "%s %-24s rel=%.3e elementwise=%.3e coords=%zu tol=%.0e %s\n", label,
                          e.name.c_str(), e.max_relative_error, e.max_elementwise_error, e.coordinates, e.tolerance,
                          e.passed ? "PASS" : "FAIL");
            out << buf;
            worst = std::max(worst, e.max_relative_error);
            all = all && e.passed;
        }
        std::snprintf(buf, sizeof buf, "%s max relative error %.3e\n", label, worst);
        out << buf;
    }
    return all ? kSuccess : kUserError;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const config::EnvLookup& env) {
    CLI::App app{"Limit order book pipeline: ingestion, information filtering network, HLOB training and reports",
                 "hloblab"};
    app.require_subcommand(1);
    std::string config_path;
    std::size_t jobs = 1;
    std::string input;
    std::vector<std::string> inputs;
    bool shapes = false;
    std::string precision = "both";
    std::uint64_t seed = 7;

    auto with_config = [&](CLI::App* sub, bool required) {
        auto* opt = sub->add_option("-c,--config", config_path, "run configuration file");
        if (required) {
            opt->required()->check(CLI::ExistingFile);
        }
        sub->add_option("-j,--jobs", jobs, "worker threads for per-day work")->check(CLI::PositiveNumber);
        return sub;
    };
    with_config(app.add_subcommand("synth", "write synthetic LOBSTER pairs"), true);
    with_config(app.add_subcommand("ingest", "clean LOBSTER pairs and compute normalization statistics"), true);
    with_config(app.add_subcommand("mi", "daily bootstrap mutual information and its average"), true);
    with_config(app.add_subcommand("tmfg", "filtered graph and simplicial complex from the average MI"), true)
        ->add_option("--input", input, "MI matrix JSON (default: <out>/mi/average.json)");
    with_config(app.add_subcommand("train", "train HLOB with early stopping"), true);
    with_config(app.add_subcommand("eval", "evaluate the checkpoint on the test days"), true);
    with_config(app.add_subcommand("report", "metrics and quadrant CSVs"), true)
        ->add_option("--input", inputs, "report JSON files (default: <out>/eval/report.json)");
    auto* describe = with_config(app.add_subcommand("describe", "parameter table of the model"), false);
    describe->add_flag("--shapes", shapes, "also print the shape cascade");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--precision", precision, "float | double | both")
        ->check(CLI::IsMember({"float", "double", "both"}));
    gradcheck->add_option("--seed", seed, "random shapes seed");

    if (args.empty()) {
        err << app.help();
        return kUserError;
    }
    if (!args[0].empty() && args[0][0] != '-' &&
        std::find(std::begin(kVerbs), std::end(kVerbs), args[0]) == std::end(kVerbs)) {
        err << "hloblab: error: " << to_string(ErrorCode::UnknownCommand) << ": unknown command '" << args[0]
            << "'\n";
        return kUserError;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "hloblab: error: " << e.what() << "\n";
        return kUserError;
    }

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        std::optional<RunConfig> cfg;
        if (!config_path.empty()) {
            cfg = config::load_config(config_path, env);
        }
        if (verb == "synth") return run_synth(*cfg, jobs, out);
        if (verb == "ingest") return run_ingest(*cfg, jobs, out);
        if (verb == "mi") return run_mi(*cfg, jobs, out);
        if (verb == "tmfg") return run_tmfg(*cfg, input, out);
        if (verb == "train") {
            return cfg->double_precision ? train_typed<double>(*cfg, jobs, out) : train_typed<float>(*cfg, jobs, out);
        }
        if (verb == "eval") {
            return cfg->double_precision ? eval_typed<double>(*cfg, jobs, out) : eval_typed<float>(*cfg, jobs, out);
        }
        if (verb == "report") return run_report(*cfg, inputs, out);
        if (verb == "describe") return run_describe(cfg, shapes, out);
        if (verb == "gradcheck") return run_gradcheck(precision, seed, out);
        err << "hloblab: error: " << to_string(ErrorCode::UnknownCommand) << ": " << verb << "\n";
        return kUserError;
    } catch (const Error& e) {
        err << "hloblab: error: " << e.what() << "\n";
        return kUserError;
    } catch (const fs::filesystem_error& e) {
        err << "hloblab: error: " << to_string(ErrorCode::IoFailure) << ": " << e.what() << "\n";
        return kUserError;
    } catch (const std::exception& e) {
        err << "hloblab: internal error: " << e.what() << "\n";
        return kInternalError;
    }
}

}  // namespace hloblab::cli
