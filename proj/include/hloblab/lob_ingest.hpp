#pragma once

// LOBSTER-format limit order book ingestion, cleaning, microstructure
// statistics and a deterministic synthetic generator.
//
// Prices are integers in 1e-4 currency units throughout; conversion to
// currency only happens at reporting time.

#include "hloblab/error.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hloblab::lob {

inline constexpr std::size_t kLevels = 10;
inline constexpr std::size_t kFeatures = 4 * kLevels;  // ask_p, ask_v, bid_p, bid_v per level
inline constexpr std::int64_t kPriceScale = 10'000;    // LOBSTER 1e-4 units
inline constexpr std::int64_t kDummyAskPrice = 9'999'999'999;
inline constexpr std::int64_t kDummyBidPrice = -9'999'999'999;

using Price = std::int64_t;
using Volume = std::int64_t;
using Date = std::chrono::year_month_day;

Date parse_date(std::string_view text);
std::string format_date(const Date& date);

struct StockMeta {
    std::string ticker;
    Price tick_size = 100;  // θ, 1e-4 units (0.01 USD)
    Volume lot_size = 1;    // ψ

    void validate() const;
};

struct LobSnapshot {
    std::int64_t timestamp_ns = 0;  // nanoseconds after midnight
    std::array<Price, kLevels> ask_prices{};
    std::array<Volume, kLevels> ask_volumes{};
    std::array<Price, kLevels> bid_prices{};
    std::array<Volume, kLevels> bid_volumes{};

    /// Feature j in LOBSTER column order (ask_p1, ask_v1, bid_p1, bid_v1, ask_p2, ...).
    std::int64_t feature(std::size_t j) const;
    bool crossed() const { return ask_prices[0] <= bid_prices[0]; }
    bool monotone() const;
};

/// Message-file row carried alongside each snapshot so series can be written back verbatim.
struct LobMessage {
    std::int64_t time_ns = 0;
    int time_fraction_digits = 9;
    int event_type = 0;
    std::int64_t order_id = 0;
    std::int64_t size = 0;
    Price price = 0;
    int direction = 0;
};

struct LobSeries {
    StockMeta meta;
    Date day{};
    std::vector<LobSnapshot> snapshots;
    std::vector<LobMessage> messages;  // parallel to snapshots

    std::size_t size() const { return snapshots.size(); }
    bool empty() const { return snapshots.empty(); }
};

std::vector<std::string> split_lines(std::string_view text);

/// Parses the orderbook/message pair of one trading day. Crossed rows are kept
/// and reported as diagnostics; clean_session removes them.
LobSeries parse_lobster_pair(const std::vector<std::string>& orderbook_rows,
                             const std::vector<std::string>& message_rows, const StockMeta& meta,
                             Date day = {}, Diagnostics* diagnostics = nullptr);

std::int64_t parse_time_ns(std::string_view text, int* fraction_digits = nullptr);
std::string format_time_ns(std::int64_t ns, int fraction_digits = 9);

std::vector<std::string> orderbook_rows(const LobSeries& series);
std::vector<std::string> message_rows(const LobSeries& series);

struct LobsterPaths {
    std::filesystem::path orderbook;
    std::filesystem::path message;
};

LobsterPaths lobster_paths(const std::filesystem::path& dir, std::string_view ticker, const Date& day);
LobSeries read_lobster_pair(const std::filesystem::path& dir, const StockMeta& meta, const Date& day,
                            Diagnostics* diagnostics = nullptr);
void write_lobster_pair(const std::filesystem::path& dir, const LobSeries& series);

/// Trading days that have both files present in `dir` for `ticker`, ascending.
std::vector<Date> available_days(const std::filesystem::path& dir, std::string_view ticker);

inline constexpr std::int64_t kSessionOpenNs = (9LL * 3600 + 30 * 60) * 1'000'000'000LL;
inline constexpr std::int64_t kSessionCloseNs = 16LL * 3600 * 1'000'000'000LL;

/// Keeps snapshots in [09:30 + trim_start, 16:00 - trim_end] whose book is
/// uncrossed, level-monotone and has positive best-level volume on both sides.
LobSeries clean_session(const LobSeries& series, std::chrono::nanoseconds trim_start,
                        std::chrono::nanoseconds trim_end, Diagnostics* diagnostics = nullptr);

struct MidSpread {
    double mid;    // 1e-4 units, may be a half-integer
    Price spread;  // 1e-4 units
};

MidSpread mid_and_spread(const LobSnapshot& snapshot);
double mean_spread(const LobSeries& series);

enum class Side { Ask, Bid };

/// Span between the first and tenth quoted level of one side, in ticks.
double actual_depth(const LobSnapshot& snapshot, Side side, Price tick_size);

enum class TickClass { Small, Medium, Large };

std::string_view to_string(TickClass c);
TickClass classify_tick_size(double mean_spread, double tick_size);

enum class Regime { Compact, Sparse };

LobSeries synthesize_lob(std::uint64_t seed, std::size_t n_events, Regime regime, const StockMeta& meta,
                         Date day = Date{std::chrono::year{2017}, std::chrono::March, std::chrono::day{13}});

}  // namespace hloblab::lob
