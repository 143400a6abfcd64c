#pragma once

// Shared fixtures for the unit tests.

#include "hloblab/lob_ingest.hpp"

#include <chrono>
#include <string>
#include <vector>

namespace hloblab::testing {

inline lob::Date day(int y, unsigned m, unsigned d) {
    return lob::Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

/// A compact uncrossed book: best ask/bid around `mid_price`, one tick per level.
inline lob::LobSnapshot make_snapshot(std::int64_t ns, lob::Price best_bid, lob::Price tick = 100,
                                      lob::Volume base_volume = 100) {
    lob::LobSnapshot s;
    s.timestamp_ns = ns;
    for (std::size_t l = 0; l < lob::kLevels; ++l) {
        s.ask_prices[l] = best_bid + tick * static_cast<lob::Price>(l + 1);
        s.bid_prices[l] = best_bid - tick * static_cast<lob::Price>(l);
        s.ask_volumes[l] = base_volume + static_cast<lob::Volume>(l);
        s.bid_volumes[l] = base_volume + 2 * static_cast<lob::Volume>(l);
    }
    return s;
}

inline lob::LobSeries make_series(const std::vector<lob::LobSnapshot>& snaps, lob::Date d = day(2017, 3, 13)) {
    lob::LobSeries series;
    series.meta = lob::StockMeta{"TST", 100, 1};
    series.day = d;
    series.snapshots = snaps;
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        lob::LobMessage m;
        m.time_ns = snaps[i].timestamp_ns;
        m.event_type = 1;
        m.order_id = static_cast<std::int64_t>(i + 1);
        m.size = 10;
        m.price = snaps[i].bid_prices[0];
        m.direction = 1;
        series.messages.push_back(m);
    }
    return series;
}

inline constexpr std::int64_t kMinute = 60'000'000'000LL;

}  // namespace hloblab::testing
