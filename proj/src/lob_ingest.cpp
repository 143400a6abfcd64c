#include "hloblab/lob_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

namespace hloblab::lob {

namespace {

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && first != last;
}

std::vector<std::string_view> split_fields(std::string_view row) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = row.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(row.substr(start));
            break;
        }
        fields.push_back(row.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

bool level_present(Price p, Volume v) {
    return v > 0 && p != kDummyAskPrice && p != kDummyBidPrice;
}

}  // namespace

Date parse_date(std::string_view text) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
        !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
        throw Error(ErrorCode::InvalidArgument, "bad date '" + std::string(text) + "', expected YYYY-MM-DD");
    }
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) {
        throw Error(ErrorCode::InvalidArgument, "invalid calendar date '" + std::string(text) + "'");
    }
    return date;
}

std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

void StockMeta::validate() const {
    if (tick_size <= 0) {
        throw Error(ErrorCode::InvalidArgument, "tick size must be positive");
    }
    if (lot_size < 1) {
        throw Error(ErrorCode::InvalidArgument, "lot size must be >= 1");
    }
}

std::int64_t LobSnapshot::feature(std::size_t j) const {
    const std::size_t level = j / 4;
    switch (j % 4) {
        case 0: return ask_prices[level];
        case 1: return ask_volumes[level];
        case 2: return bid_prices[level];
        default: return bid_volumes[level];
    }
}

bool LobSnapshot::monotone() const {
    for (std::size_t l = 1; l < kLevels; ++l) {
        if (ask_prices[l] <= ask_prices[l - 1] || bid_prices[l] >= bid_prices[l - 1]) {
            return false;
        }
    }
    return true;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.emplace_back(line);
        start = end + 1;
    }
    return lines;
}

std::int64_t parse_time_ns(std::string_view text, int* fraction_digits) {
    text = trim(text);
    const auto dot = text.find('.');
    const auto whole = text.substr(0, dot);
    std::int64_t seconds = 0;
    if (!parse_int(whole, seconds) || seconds < 0) {
        throw Error(ErrorCode::InvalidArgument, "bad time '" + std::string(text) + "'");
    }
    std::int64_t fraction = 0;
    int digits = 0;
    if (dot != std::string_view::npos) {
        const auto frac = text.substr(dot + 1);
        if (frac.size() > 9 || (!frac.empty() && !parse_int(frac, fraction)) || frac.find('-') != frac.npos) {
            throw Error(ErrorCode::InvalidArgument, "bad time fraction '" + std::string(text) + "'");
        }
        digits = static_cast<int>(frac.size());
        for (int i = digits; i < 9; ++i) {
            fraction *= 10;
        }
    }
    if (fraction_digits != nullptr) {
        *fraction_digits = digits;
    }
    return seconds * 1'000'000'000LL + fraction;
}

std::string format_time_ns(std::int64_t ns, int fraction_digits) {
    const auto seconds = ns / 1'000'000'000LL;
    auto fraction = ns % 1'000'000'000LL;
    std::string out = std::to_string(seconds);
    if (fraction_digits <= 0) {
        return out;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%09lld", static_cast<long long>(fraction));
    out += '.';
    out.append(buf, static_cast<std::size_t>(std::min(fraction_digits, 9)));
    return out;
}

LobSeries parse_lobster_pair(const std::vector<std::string>& orderbook_rows,
                             const std::vector<std::string>& message_rows, const StockMeta& meta, Date day,
                             Diagnostics* diagnostics) {
    meta.validate();
    // A trailing newline leaves one empty final line; it is not a row.
    auto rows_of = [](const std::vector<std::string>& rows) {
        std::size_t n = rows.size();
        while (n > 0 && trim(rows[n - 1]).empty()) {
            --n;
        }
        return n;
    };
    const std::size_t n = rows_of(orderbook_rows);
    if (n != rows_of(message_rows)) {
        throw Error(ErrorCode::RowCountMismatch, "orderbook has " + std::to_string(n) + " rows, message has " +
                                                     std::to_string(rows_of(message_rows)));
    }

    LobSeries series;
    series.meta = meta;
    series.day = day;
    series.snapshots.reserve(n);
    series.messages.reserve(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t line = i + 1;
        const auto book_fields = split_fields(trim(orderbook_rows[i]));
        const auto msg_fields = split_fields(trim(message_rows[i]));
        if (book_fields.size() != kFeatures) {
            throw Error(ErrorCode::MalformedRow,
                        "orderbook line " + std::to_string(line) + " has " + std::to_string(book_fields.size()) +
                            " fields, expected 40",
                        line);
        }
        if (msg_fields.size() != 6) {
            throw Error(ErrorCode::MalformedRow,
                        "message line " + std::to_string(line) + " has " + std::to_string(msg_fields.size()) +
                            " fields, expected 6",
                        line);
        }

        LobSnapshot snap;
        for (std::size_t l = 0; l < kLevels; ++l) {
            const bool ok = parse_int(trim(book_fields[4 * l]), snap.ask_prices[l]) &&
                            parse_int(trim(book_fields[4 * l + 1]), snap.ask_volumes[l]) &&
                            parse_int(trim(book_fields[4 * l + 2]), snap.bid_prices[l]) &&
                            parse_int(trim(book_fields[4 * l + 3]), snap.bid_volumes[l]);
            if (!ok || snap.ask_volumes[l] < 0 || snap.bid_volumes[l] < 0) {
                throw Error(ErrorCode::MalformedRow, "orderbook line " + std::to_string(line) + " level " +
                                                         std::to_string(l + 1) + " is not a valid integer quote",
                            line);
            }
        }

        LobMessage msg;
        try {
            msg.time_ns = parse_time_ns(msg_fields[0], &msg.time_fraction_digits);
        } catch (const Error& e) {
            throw Error(ErrorCode::MalformedRow, "message line " + std::to_string(line) + ": " + e.what(), line);
        }
        const bool msg_ok = parse_int(trim(msg_fields[1]), msg.event_type) &&
                            parse_int(trim(msg_fields[2]), msg.order_id) && parse_int(trim(msg_fields[3]), msg.size) &&
                            parse_int(trim(msg_fields[4]), msg.price) && parse_int(trim(msg_fields[5]), msg.direction);
        if (!msg_ok) {
            throw Error(ErrorCode::MalformedRow, "message line " + std::to_string(line) + " has a non-integer field",
                        line);
        }
        if (!series.messages.empty() && msg.time_ns < series.messages.back().time_ns) {
            throw Error(ErrorCode::MalformedRow, "message line " + std::to_string(line) + " goes back in time", line);
        }
        snap.timestamp_ns = msg.time_ns;
        if (snap.crossed()) {
            report(diagnostics, ErrorCode::CrossedBook, line,
                   "orderbook line " + std::to_string(line) + " is crossed (ask_p1 <= bid_p1)");
        }
        series.snapshots.push_back(snap);
        series.messages.push_back(msg);
    }
    return series;
}

std::vector<std::string> orderbook_rows(const LobSeries& series) {
    std::vector<std::string> rows;
    rows.reserve(series.size());
    for (const auto& snap : series.snapshots) {
        std::string row;
        row.reserve(400);
        for (std::size_t j = 0; j < kFeatures; ++j) {
            if (j != 0) {
                row += ',';
            }
            row += std::to_string(snap.feature(j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> message_rows(const LobSeries& series) {
    std::vector<std::string> rows;
    rows.reserve(series.messages.size());
    for (const auto& m : series.messages) {
        rows.push_back(format_time_ns(m.time_ns, m.time_fraction_digits) + ',' + std::to_string(m.event_type) + ',' +
                       std::to_string(m.order_id) + ',' + std::to_string(m.size) + ',' + std::to_string(m.price) +
                       ',' + std::to_string(m.direction));
    }
    return rows;
}

LobsterPaths lobster_paths(const std::filesystem::path& dir, std::string_view ticker, const Date& day) {
    const std::string stem = std::string(ticker) + "_" + format_date(day);
    return {dir / (stem + "_orderbook_10.csv"), dir / (stem + "_message_10.csv")};
}

LobSeries read_lobster_pair(const std::filesystem::path& dir, const StockMeta& meta, const Date& day,
                            Diagnostics* diagnostics) {
    const auto paths = lobster_paths(dir, meta.ticker, day);
    return parse_lobster_pair(split_lines(read_file(paths.orderbook)), split_lines(read_file(paths.message)), meta,
                              day, diagnostics);
}

void write_lobster_pair(const std::filesystem::path& dir, const LobSeries& series) {
    std::filesystem::create_directories(dir);
    const auto paths = lobster_paths(dir, series.meta.ticker, series.day);
    auto write_rows = [](const std::filesystem::path& path, const std::vector<std::string>& rows) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
        }
        for (const auto& row : rows) {
            out << row << '\n';
        }
        if (!out) {
            throw Error(ErrorCode::IoFailure, "short write on " + path.string());
        }
    };
    write_rows(paths.orderbook, orderbook_rows(series));
    write_rows(paths.message, message_rows(series));
}

std::vector<Date> available_days(const std::filesystem::path& dir, std::string_view ticker) {
    std::vector<Date> days;
    if (!std::filesystem::is_directory(dir)) {
        return days;
    }
    const std::regex pattern(std::string(ticker) + R"(_(\d{4}-\d{2}-\d{2})_orderbook_10\.csv)");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch match;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, match, pattern)) {
            const Date day = parse_date(match[1].str());
            if (std::filesystem::exists(lobster_paths(dir, ticker, day).message)) {
                days.push_back(day);
            }
        }
    }
    std::sort(days.begin(), days.end());
    return days;
}

LobSeries clean_session(const LobSeries& series, std::chrono::nanoseconds trim_start,
                        std::chrono::nanoseconds trim_end, Diagnostics* diagnostics) {
    const std::int64_t lo = kSessionOpenNs + trim_start.count();
    const std::int64_t hi = kSessionCloseNs - trim_end.count();
    LobSeries out;
    out.meta = series.meta;
    out.day = series.day;
    std::size_t outside = 0;
    const bool with_messages = series.messages.size() == series.snapshots.size();
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& snap = series.snapshots[i];
        if (snap.timestamp_ns < lo || snap.timestamp_ns > hi) {
            ++outside;
            continue;
        }
        if (snap.crossed()) {
            report(diagnostics, ErrorCode::CrossedBook, i, "snapshot " + std::to_string(i) + " crossed; dropped");
            continue;
        }
        if (snap.ask_volumes[0] <= 0 || snap.bid_volumes[0] <= 0) {
            report(diagnostics, ErrorCode::ZeroBestVolume, i,
                   "snapshot " + std::to_string(i) + " has zero best-level volume; dropped");
            continue;
        }
        if (!snap.monotone()) {
            report(diagnostics, ErrorCode::NonMonotonicLevels, i,
                   "snapshot " + std::to_string(i) + " has non-monotone or missing levels; dropped");
            continue;
        }
        out.snapshots.push_back(snap);
        if (with_messages) {
            out.messages.push_back(series.messages[i]);
        }
    }
    if (outside > 0) {
        report(diagnostics, ErrorCode::OutsideSession, outside,
               std::to_string(outside) + " snapshots outside the trading window dropped");
    }
    if (out.empty()) {
        throw Error(ErrorCode::EmptyAfterClean, "no snapshot of " + format_date(series.day) + " survived cleaning");
    }
    return out;
}

MidSpread mid_and_spread(const LobSnapshot& snapshot) {
    const Price ask = snapshot.ask_prices[0];
    const Price bid = snapshot.bid_prices[0];
    // ask + bid is an integer; halving it is exact in double for any realistic price.
    return {static_cast<double>(ask + bid) / 2.0, ask - bid};
}

double mean_spread(const LobSeries& series) {
    if (series.empty()) {
        throw Error(ErrorCode::EmptyDataset, "mean spread of an empty series");
    }
    long double total = 0;
    for (const auto& snap : series.snapshots) {
        total += static_cast<long double>(mid_and_spread(snap).spread);
    }
    return static_cast<double>(total / static_cast<long double>(series.size()));
}

double actual_depth(const LobSnapshot& snapshot, Side side, Price tick_size) {
    if (tick_size <= 0) {
        throw Error(ErrorCode::InvalidArgument, "tick size must be positive");
    }
    const auto& prices = side == Side::Ask ? snapshot.ask_prices : snapshot.bid_prices;
    const auto& volumes = side == Side::Ask ? snapshot.ask_volumes : snapshot.bid_volumes;
    for (std::size_t l = 0; l < kLevels; ++l) {
        if (!level_present(prices[l], volumes[l])) {
            throw Error(ErrorCode::MissingLevels, "level " + std::to_string(l + 1) + " is empty", l + 1);
        }
    }
    const Price span = prices[kLevels - 1] - prices[0];
    return static_cast<double>(span < 0 ? -span : span) / static_cast<double>(tick_size);
}

std::string_view to_string(TickClass c) {
    switch (c) {
        case TickClass::Small: return "small";
        case TickClass::Medium: return "medium";
        case TickClass::Large: return "large";
    }
    return "?";
}

TickClass classify_tick_size(double mean_spread, double tick_size) {
    if (!(mean_spread > 0) || !(tick_size > 0)) {
        throw Error(ErrorCode::InvalidArgument, "mean spread and tick size must be positive");
    }
    if (mean_spread >= 3.0 * tick_size) {
        return TickClass::Small;
    }
    if (mean_spread <= 1.5 * tick_size) {
        return TickClass::Large;
    }
    return TickClass::Medium;
}

LobSeries synthesize_lob(std::uint64_t seed, std::size_t n_events, Regime regime, const StockMeta& meta, Date day) {
    meta.validate();
    if (n_events == 0) {
        throw Error(ErrorCode::InvalidArgument, "n_events must be >= 1");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::geometric_distribution<int> gap(0.5);

    const Price tick = meta.tick_size;
    Price best_bid = (100 * kPriceScale / tick) * tick;  // ~100.00 currency units
    int spread_ticks = 1;
    std::array<std::array<int, kLevels>, 2> gaps{};
    for (auto& side : gaps) {
        for (auto& g : side) {
            g = regime == Regime::Compact ? 1 : 1 + gap(rng);
        }
    }
    std::array<double, 2> factor{0.0, 0.0};
    std::array<std::array<double, kLevels>, 2> base{};
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t l = 0; l < kLevels; ++l) {
            base[s][l] = 200.0 * (1.0 + 0.15 * static_cast<double>(l)) * (0.75 + 0.5 * unit(rng));
        }
    }

    LobSeries series;
    series.meta = meta;
    series.day = day;
    series.snapshots.reserve(n_events);
    series.messages.reserve(n_events);

    const std::int64_t span = kSessionCloseNs - kSessionOpenNs;
    const std::int64_t step = std::max<std::int64_t>(1, span / static_cast<std::int64_t>(n_events));
    for (std::size_t i = 0; i < n_events; ++i) {
        const double u = unit(rng);
        if (u < 0.2) {
            best_bid += unit(rng) < 0.5 ? tick : -tick;
        }
        if (unit(rng) < 0.1) {
            spread_ticks = unit(rng) < 0.7 ? 1 : 2;
        }
        if (regime == Regime::Sparse && unit(rng) < 0.05) {
            const std::size_t s = unit(rng) < 0.5 ? 0 : 1;
            const auto l = static_cast<std::size_t>(unit(rng) * kLevels) % kLevels;
            gaps[s][l] = 1 + gap(rng);
        }
        for (auto& f : factor) {
            f = 0.98 * f + 0.1 * gauss(rng);
        }

        LobSnapshot snap;
        const auto offset = static_cast<std::int64_t>(unit(rng) * static_cast<double>(step));
        snap.timestamp_ns = kSessionOpenNs + static_cast<std::int64_t>(i) * step + offset;
        Price ask = best_bid + spread_ticks * tick;
        Price bid = best_bid;
        for (std::size_t l = 0; l < kLevels; ++l) {
            if (l > 0) {
                ask += gaps[0][l] * tick;
                bid -= gaps[1][l] * tick;
            }
            snap.ask_prices[l] = ask;
            snap.bid_prices[l] = bid;
            for (std::size_t s = 0; s < 2; ++s) {
                const double v = base[s][l] * std::exp(factor[s] + 0.3 * gauss(rng));
                const Volume lots = std::max<Volume>(1, std::llround(v));
                (s == 0 ? snap.ask_volumes : snap.bid_volumes)[l] = lots * meta.lot_size;
            }
        }

        LobMessage msg;
        msg.time_ns = snap.timestamp_ns;
        msg.event_type = 1;
        msg.order_id = 1'000'000 + static_cast<std::int64_t>(i);
        msg.direction = unit(rng) < 0.5 ? 1 : -1;
        msg.size = meta.lot_size * (1 + static_cast<std::int64_t>(unit(rng) * 100));
        msg.price = msg.direction == 1 ? snap.bid_prices[0] : snap.ask_prices[0];
        series.snapshots.push_back(snap);
        series.messages.push_back(msg);
    }
    return series;
}

}  // namespace hloblab::lob
