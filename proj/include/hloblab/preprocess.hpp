#pragma once

// Rolling z-score normalization, mid-price labeling and windowed dataset assembly.

#include "hloblab/error.hpp"
#include "hloblab/lob_ingest.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace hloblab::prep {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using lob::Date;

inline constexpr double kStdFloor = 1e-8;
inline constexpr std::size_t kHistoryDays = 5;
inline constexpr std::size_t kWindowLength = 100;

enum class Label : std::int8_t { Down = -1, Stable = 0, Up = 1 };
using MaybeLabel = std::optional<Label>;

/// Global class-id encoding shared by the loss, the confusion matrix and reports.
constexpr int class_id(Label label) { return static_cast<int>(label) + 1; }
Label label_from_class(int id);

struct NormStats {
    std::array<double, lob::kFeatures> mean{};
    std::array<double, lob::kFeatures> std{};
    std::vector<Date> source_days;  // provenance: days the statistics were computed from
};

/// Feature-wise mean/std over the concatenation of the supplied prior days.
NormStats compute_norm_stats(std::span<const lob::LobSeries> prior_days);

/// Column j = (raw_j - mean_j) / std_j. Throws LeakageViolation when a source
/// day of `stats` is not strictly earlier than `day`.
RowMatrix normalize_day(const lob::LobSeries& day, const NormStats& stats);

std::vector<double> mid_prices(const lob::LobSeries& series);

/// Three-way label of m[t + horizon] - m[t] against ±tick (inclusive on the
/// up/down side). The last `horizon` positions are left unlabeled.
std::vector<MaybeLabel> label_series(std::span<const double> mids, std::size_t horizon, double tick);

struct LabeledWindow {
    std::shared_ptr<const RowMatrix> source;  // normalized day matrix
    Date day{};
    std::size_t origin = 0;                   // index of the last row of the window
    std::size_t length = kWindowLength;
    Label label = Label::Stable;

    /// Rows [origin - length + 1, origin], oldest first.
    Eigen::Map<const RowMatrix> features() const;
};

std::vector<LabeledWindow> build_windows(std::shared_ptr<const RowMatrix> normalized,
                                         std::span<const MaybeLabel> labels, std::size_t length = kWindowLength,
                                         Date day = {});

/// k = min(cap, least-represented class count) indices per class, drawn
/// without replacement; grouped Down, Stable, Up and ascending within a class.
std::vector<std::size_t> balanced_sample(std::span<const LabeledWindow> day_windows, std::size_t cap,
                                         std::uint64_t rng_seed);

template <typename T>
std::vector<std::span<const T>> sequential_batches(std::span<const T> items, std::size_t batch_size = 32) {
    if (batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    }
    std::vector<std::span<const T>> batches;
    for (std::size_t start = 0; start < items.size(); start += batch_size) {
        batches.push_back(items.subspan(start, std::min(batch_size, items.size() - start)));
    }
    return batches;
}

struct SplitPlan {
    std::vector<Date> train_days;
    std::vector<Date> validation_days;
    std::vector<Date> test_days;
    std::size_t horizon = 10;

    void validate() const;
};

}  // namespace hloblab::prep
