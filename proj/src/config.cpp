#include "hloblab/config.hpp"

#include "hloblab/digest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace hloblab::config {

const std::vector<KeySpec> kConfigKeys = {
    {"run.ticker", "SYN", 1, true, "ticker used in LOBSTER file names and reports"},
    {"run.seed", "0", 2, true, "master seed; every stream is derived from it"},
    {"run.out_dir", "out", 0, false, "artifact root, relative to the config file"},
    {"data.dir", "data", 0, false, "directory holding LOBSTER pairs"},
    {"data.tick_size", "100", 1, true, "tick size in 1e-4 price units"},
    {"data.lot_size", "1", 1, true, "lot size in shares"},
    {"data.trim_start_min", "30", 1, false, "minutes dropped after the open"},
    {"data.trim_end_min", "30", 1, false, "minutes dropped before the close"},
    {"synth.days", "", 0, true, "days to synthesize (list or A..B weekday range)"},
    {"synth.events", "20000", 0, true, "snapshots per synthetic day"},
    {"synth.regime", "compact", 0, true, "compact | sparse"},
    {"split.train", "", 2, false, "training days"},
    {"split.validation", "", 4, false, "validation days (removed from the training list)"},
    {"split.test", "", 5, false, "test days"},
    {"infonet.bins", "32", 2, false, "volume histogram bins"},
    {"infonet.bootstrap", "10", 2, false, "bootstrap replicates per day"},
    {"model.window", "100", 4, false, "window length T"},
    {"model.dropout", "0.35", 4, false, "dropout after each head"},
    {"model.precision", "float", 4, false, "float | double"},
    {"train.horizon", "10", 4, false, "label horizon in tick time"},
    {"train.batch_size", "32", 4, false, "mini-batch size"},
    {"train.max_epochs", "100", 4, false, "epoch cap"},
    {"train.patience", "15", 4, false, "early-stopping window in epochs"},
    {"train.early_stop_delta", "0.003", 4, false, "minimum improvement over the window"},
    {"train.sample_cap", "5000", 4, false, "balanced samples per class and day"},
    {"train.lr", "6e-5", 4, false, "AdamW learning rate"},
    {"train.beta1", "0.9", 4, false, "AdamW first-moment decay"},
    {"train.beta2", "0.95", 4, false, "AdamW second-moment decay"},
    {"train.eps", "1e-8", 4, false, "AdamW epsilon"},
    {"train.weight_decay", "0.01", 4, false, "AdamW decoupled weight decay"},
    {"report.year", "", 6, false, "year label in reports; defaults to the test days' years"},
};

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
    throw Error(ErrorCode::ConfigError, key + ": " + what);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        config_error(key, "cannot parse '" + text + "' as a number");
    }
    return value;
}

std::size_t positive(const std::string& key, const std::string& text) {
    const auto v = parse_number<std::int64_t>(key, text);
    if (v <= 0) {
        config_error(key, "must be positive");
    }
    return static_cast<std::size_t>(v);
}

double positive_real(const std::string& key, const std::string& text) {
    const auto v = parse_number<double>(key, text);
    if (!(v > 0)) {
        config_error(key, "must be positive");
    }
    return v;
}

std::vector<lob::Date> day_list(const std::string& key, const std::string& text) {
    try {
        return parse_day_list(text);
    } catch (const Error& e) {
        config_error(key, e.what());
    }
}

}  // namespace

std::string env_name(std::string_view key) {
    std::string name = "HLOBLAB_";
    for (char c : key) {
        name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return name;
}

std::vector<lob::Date> parse_day_list(std::string_view text) {
    std::set<lob::Date> days;
    std::stringstream items{std::string(text)};
    std::string item;
    while (std::getline(items, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            days.insert(lob::parse_date(item));
            continue;
        }
        const auto first = std::chrono::sys_days(lob::parse_date(trim(item.substr(0, dots))));
        const auto last = std::chrono::sys_days(lob::parse_date(trim(item.substr(dots + 2))));
        if (last < first) {
            throw Error(ErrorCode::InvalidArgument, "empty day range '" + item + "'");
        }
        for (auto d = first; d <= last; d += std::chrono::days{1}) {
            const std::chrono::weekday wd{d};
            if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) {
                days.insert(lob::Date{d});
            }
        }
    }
    return {days.begin(), days.end()};
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, const EnvLookup& env) {
    RunConfig cfg;
    std::set<std::string> known;
    for (const auto& spec : kConfigKeys) {
        cfg.values[spec.key] = spec.default_value;
        known.insert(spec.key);
    }
    std::set<std::string> seen;
    std::size_t line_no = 0;
    for (const auto& raw : lob::split_lines(text)) {
        ++line_no;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected 'section.key = value'",
                        line_no);
        }
        const std::string key = trim(line.substr(0, eq));
        if (!known.contains(key)) {
            config_error(key, "unknown key (line " + std::to_string(line_no) + ")");
        }
        if (!seen.insert(key).second) {
            config_error(key, "set twice (line " + std::to_string(line_no) + ")");
        }
        cfg.values[key] = trim(line.substr(eq + 1));
    }
    if (env) {
        for (const auto& spec : kConfigKeys) {
            if (const char* v = env(env_name(spec.key).c_str()); v != nullptr) {
                cfg.values[spec.key] = trim(v);
            }
        }
    }

    const auto& v = cfg.values;
    auto get = [&](const char* key) -> const std::string& { return v.at(key); };
    auto path = [&](const char* key) {
        std::filesystem::path p = get(key);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };

    cfg.ticker = get("run.ticker");
    if (cfg.ticker.empty() || cfg.ticker.find_first_of("_/\\ ") != std::string::npos) {
        config_error("run.ticker", "must be non-empty without '_', '/' or spaces");
    }
    cfg.seed = parse_number<std::uint64_t>("run.seed", get("run.seed"));
    cfg.out_dir = path("run.out_dir");
    cfg.data_dir = path("data.dir");
    cfg.meta.ticker = cfg.ticker;
    cfg.meta.tick_size = static_cast<lob::Price>(positive("data.tick_size", get("data.tick_size")));
    cfg.meta.lot_size = static_cast<lob::Volume>(positive("data.lot_size", get("data.lot_size")));
    cfg.trim_start_min = parse_number<std::int64_t>("data.trim_start_min", get("data.trim_start_min"));
    cfg.trim_end_min = parse_number<std::int64_t>("data.trim_end_min", get("data.trim_end_min"));
    if (cfg.trim_start_min < 0 || cfg.trim_end_min < 0 || cfg.trim_start_min + cfg.trim_end_min >= 390) {
        config_error("data.trim_start_min", "trims must be non-negative and leave part of the session");
    }

    cfg.synth_days = day_list("synth.days", get("synth.days"));
    cfg.synth_events = positive("synth.events", get("synth.events"));
    if (get("synth.regime") == "compact") {
        cfg.synth_regime = lob::Regime::Compact;
    } else if (get("synth.regime") == "sparse") {
        cfg.synth_regime = lob::Regime::Sparse;
    } else {
        config_error("synth.regime", "expected 'compact' or 'sparse'");
    }

    cfg.validation_days = day_list("split.validation", get("split.validation"));
    cfg.test_days = day_list("split.test", get("split.test"));
    for (auto d : day_list("split.train", get("split.train"))) {
        if (!std::binary_search(cfg.validation_days.begin(), cfg.validation_days.end(), d)) {
            cfg.train_days.push_back(d);
        }
    }

    cfg.n_bins = static_cast<int>(positive("infonet.bins", get("infonet.bins")));
    cfg.bootstrap = positive("infonet.bootstrap", get("infonet.bootstrap"));

    cfg.window = positive("model.window", get("model.window"));
    cfg.dropout = parse_number<double>("model.dropout", get("model.dropout"));
    if (!(cfg.dropout >= 0 && cfg.dropout < 1)) {
        config_error("model.dropout", "must lie in [0, 1)");
    }
    if (get("model.precision") == "double") {
        cfg.double_precision = true;
    } else if (get("model.precision") != "float") {
        config_error("model.precision", "expected 'float' or 'double'");
    }

    auto& t = cfg.train;
    t.horizon = positive("train.horizon", get("train.horizon"));
    t.batch_size = positive("train.batch_size", get("train.batch_size"));
    t.max_epochs = positive("train.max_epochs", get("train.max_epochs"));
    t.patience = positive("train.patience", get("train.patience"));
    t.early_stop_delta = parse_number<double>("train.early_stop_delta", get("train.early_stop_delta"));
    if (!(t.early_stop_delta >= 0)) {
        config_error("train.early_stop_delta", "must be non-negative");
    }
    t.sample_cap = positive("train.sample_cap", get("train.sample_cap"));
    t.adamw.lr = positive_real("train.lr", get("train.lr"));
    t.adamw.beta1 = parse_number<double>("train.beta1", get("train.beta1"));
    t.adamw.beta2 = parse_number<double>("train.beta2", get("train.beta2"));
    if (!(t.adamw.beta1 >= 0 && t.adamw.beta1 < 1 && t.adamw.beta2 >= 0 && t.adamw.beta2 < 1)) {
        config_error("train.beta1", "betas must lie in [0, 1)");
    }
    t.adamw.eps = positive_real("train.eps", get("train.eps"));
    t.adamw.weight_decay = parse_number<double>("train.weight_decay", get("train.weight_decay"));
    t.seed = cfg.seed;
    cfg.report_year = get("report.year");

    prep::SplitPlan plan{cfg.train_days, cfg.validation_days, cfg.test_days, t.horizon};
    if (!cfg.train_days.empty() || !cfg.validation_days.empty() || !cfg.test_days.empty()) {
        try {
            plan.validate();
        } catch (const Error& e) {
            config_error("split", e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path(), env);
}

std::string RunConfig::canonical(Stage stage) const {
    const int level = static_cast<int>(stage);
    std::string out;
    for (const auto& spec : kConfigKeys) {
        const bool include = stage == Stage::Synth ? spec.synth : (spec.level >= 1 && spec.level <= level);
        if (include) {
            out += std::string(spec.key) + "=" + values.at(spec.key) + "\n";
        }
    }
    return out;
}

std::uint64_t RunConfig::digest(Stage stage) const { return fnv1a(canonical(stage)); }

model::HlobConfig RunConfig::model_config(const infonet::SimplicialComplex& complex) const {
    auto config = model::HlobConfig::for_complex(complex, window);
    config.dropout = dropout;
    return config;
}

}  // namespace hloblab::config
