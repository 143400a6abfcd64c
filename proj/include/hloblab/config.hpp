#pragma once

// Flat, sectioned key/value run configuration:
//
//   # comment
//   run.ticker = SYN
//   split.train = 2017-03-08..2017-03-10
//
// Every key is declared in kConfigKeys with its default. Environment
// variables named HLOBLAB_<SECTION>_<KEY> (upper case, dots as underscores)
// override file values.

#include "hloblab/hlob_model.hpp"
#include "hloblab/lob_ingest.hpp"
#include "hloblab/train_eval.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hloblab::config {

enum class Stage { Synth, Ingest, Mi, Tmfg, Train, Eval, Report };

struct KeySpec {
    const char* key;
    const char* default_value;
    int level;       // first pipeline stage (Ingest = 1 .. Report = 6) it feeds; 0 for none
    bool synth;      // part of the synth stage digest
    const char* help;
};

extern const std::vector<KeySpec> kConfigKeys;

struct RunConfig {
    std::map<std::string, std::string> values;  // every declared key, resolved

    std::string ticker;
    std::uint64_t seed = 0;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    lob::StockMeta meta;
    std::int64_t trim_start_min = 30;
    std::int64_t trim_end_min = 30;

    std::vector<lob::Date> synth_days;
    std::size_t synth_events = 0;
    lob::Regime synth_regime = lob::Regime::Compact;

    std::vector<lob::Date> train_days;
    std::vector<lob::Date> validation_days;
    std::vector<lob::Date> test_days;

    int n_bins = 32;
    std::size_t bootstrap = 10;

    std::size_t window = 100;
    double dropout = 0.35;
    bool double_precision = false;

    train::TrainConfig train;
    std::string report_year;

    /// Canonical "key=value\n" lines over the keys that influence `stage`
    /// and everything upstream of it.
    std::string canonical(Stage stage) const;
    std::uint64_t digest(Stage stage) const;
    model::HlobConfig model_config(const infonet::SimplicialComplex& complex) const;
};

using EnvLookup = std::function<const char*(const char*)>;

/// Parses `text`; unknown keys, malformed lines and bad values raise
/// ConfigError naming the key path (or line number).
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                       const EnvLookup& env = nullptr);
RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env = nullptr);

/// "2017-03-01..2017-03-07" expands to weekdays; commas separate items.
std::vector<lob::Date> parse_day_list(std::string_view text);

std::string env_name(std::string_view key);

}  // namespace hloblab::config
