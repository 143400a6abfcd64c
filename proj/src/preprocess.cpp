#include "hloblab/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace hloblab::prep {

Label label_from_class(int id) {
    if (id < 0 || id > 2) {
        throw Error(ErrorCode::BadLabel, "class id " + std::to_string(id) + " outside {0,1,2}");
    }
    return static_cast<Label>(id - 1);
}

NormStats compute_norm_stats(std::span<const lob::LobSeries> prior_days) {
    if (prior_days.size() < kHistoryDays) {
        throw Error(ErrorCode::InsufficientHistory, "need " + std::to_string(kHistoryDays) + " prior days, got " +
                                                        std::to_string(prior_days.size()));
    }
    if (prior_days.size() > kHistoryDays) {
        throw Error(ErrorCode::InvalidArgument, "expected exactly " + std::to_string(kHistoryDays) + " prior days");
    }
    // Welford accumulation in extended precision.
    std::array<long double, lob::kFeatures> mean{};
    std::array<long double, lob::kFeatures> m2{};
    std::size_t count = 0;
    NormStats stats;
    for (const auto& day : prior_days) {
        stats.source_days.push_back(day.day);
        for (const auto& snap : day.snapshots) {
            ++count;
            for (std::size_t j = 0; j < lob::kFeatures; ++j) {
                const long double x = static_cast<long double>(snap.feature(j));
                const long double delta = x - mean[j];
                mean[j] += delta / static_cast<long double>(count);
                m2[j] += delta * (x - mean[j]);
            }
        }
    }
    if (count == 0) {
        throw Error(ErrorCode::InsufficientHistory, "prior days contain no snapshots");
    }
    for (std::size_t j = 0; j < lob::kFeatures; ++j) {
        stats.mean[j] = static_cast<double>(mean[j]);
        const double sd = static_cast<double>(std::sqrt(m2[j] / static_cast<long double>(count)));
        stats.std[j] = std::max(sd, kStdFloor);
    }
    return stats;
}

RowMatrix normalize_day(const lob::LobSeries& day, const NormStats& stats) {
    for (const auto& src : stats.source_days) {
        if (!(src < day.day)) {
            throw Error(ErrorCode::LeakageViolation, "statistics use " + lob::format_date(src) +
                                                         " which is not before " + lob::format_date(day.day));
        }
    }
    RowMatrix out(static_cast<Eigen::Index>(day.size()), static_cast<Eigen::Index>(lob::kFeatures));
    for (std::size_t i = 0; i < day.size(); ++i) {
        const auto& snap = day.snapshots[i];
        for (std::size_t j = 0; j < lob::kFeatures; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (static_cast<double>(snap.feature(j)) - stats.mean[j]) / stats.std[j];
        }
    }
    return out;
}

std::vector<double> mid_prices(const lob::LobSeries& series) {
    std::vector<double> mids;
    mids.reserve(series.size());
    for (const auto& snap : series.snapshots) {
        mids.push_back(lob::mid_and_spread(snap).mid);
    }
    return mids;
}

std::vector<MaybeLabel> label_series(std::span<const double> mids, std::size_t horizon, double tick) {
    if (horizon < 1) {
        throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
    }
    if (!(tick > 0)) {
        throw Error(ErrorCode::InvalidArgument, "tick must be positive");
    }
    if (mids.size() <= horizon) {
        throw Error(ErrorCode::SeriesTooShort, "series of length " + std::to_string(mids.size()) +
                                                   " cannot be labeled at horizon " + std::to_string(horizon));
    }
    std::vector<MaybeLabel> labels(mids.size());
    for (std::size_t t = 0; t + horizon < mids.size(); ++t) {
        const double change = mids[t + horizon] - mids[t];
        if (change <= -tick) {
            labels[t] = Label::Down;
        } else if (change >= tick) {
            labels[t] = Label::Up;
        } else {
            labels[t] = Label::Stable;
        }
    }
    return labels;
}

Eigen::Map<const RowMatrix> LabeledWindow::features() const {
    const auto first = static_cast<Eigen::Index>(origin + 1 - length);
    return {source->data() + first * source->cols(), static_cast<Eigen::Index>(length), source->cols()};
}

std::vector<LabeledWindow> build_windows(std::shared_ptr<const RowMatrix> normalized,
                                         std::span<const MaybeLabel> labels, std::size_t length, Date day) {
    if (!normalized) {
        throw Error(ErrorCode::InvalidArgument, "null feature matrix");
    }
    const auto rows = static_cast<std::size_t>(normalized->rows());
    if (labels.size() != rows) {
        throw Error(ErrorCode::LengthMismatch, "labels not aligned to feature rows");
    }
    if (length == 0) {
        throw Error(ErrorCode::InvalidArgument, "window length must be positive");
    }
    std::vector<LabeledWindow> windows;
    for (std::size_t t = length - 1; t < rows; ++t) {
        if (labels[t]) {
            windows.push_back(LabeledWindow{normalized, day, t, length, *labels[t]});
        }
    }
    return windows;
}

std::vector<std::size_t> balanced_sample(std::span<const LabeledWindow> day_windows, std::size_t cap,
                                         std::uint64_t rng_seed) {
    if (day_windows.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no windows to sample from");
    }
    std::array<std::vector<std::size_t>, 3> by_class;
    for (std::size_t i = 0; i < day_windows.size(); ++i) {
        by_class[static_cast<std::size_t>(class_id(day_windows[i].label))].push_back(i);
    }
    std::size_t k = cap;
    for (int c = 0; c < 3; ++c) {
        if (by_class[static_cast<std::size_t>(c)].empty()) {
            throw Error(ErrorCode::MissingClass,
                        "class " + std::to_string(static_cast<int>(label_from_class(c))) + " has no representative");
        }
        k = std::min(k, by_class[static_cast<std::size_t>(c)].size());
    }
    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> out;
    out.reserve(3 * k);
    for (auto& members : by_class) {
        // Partial Fisher-Yates: the first k slots become a uniform k-subset.
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
            std::swap(members[i], members[pick(rng)]);
        }
        std::sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

void SplitPlan::validate() const {
    if (horizon < 1) {
        throw Error(ErrorCode::ConfigInconsistent, "horizon must be positive");
    }
    if (train_days.empty()) {
        throw Error(ErrorCode::ConfigInconsistent, "no training days");
    }
    std::set<Date> seen;
    for (const auto* days : {&train_days, &validation_days, &test_days}) {
        for (const auto& d : *days) {
            if (!seen.insert(d).second) {
                throw Error(ErrorCode::ConfigInconsistent, "day " + lob::format_date(d) + " appears in two splits");
            }
        }
    }
    const auto [lo, hi] = std::minmax_element(train_days.begin(), train_days.end());
    for (const auto& d : validation_days) {
        if (d < *lo || *hi < d) {
            throw Error(ErrorCode::ConfigInconsistent,
                        "validation day " + lob::format_date(d) + " outside the training calendar span");
        }
    }
}

}  // namespace hloblab::prep
