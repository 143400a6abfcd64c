#pragma once

// Training loop with early stopping, evaluation metrics and report files.

#include "hloblab/hlob_model.hpp"
#include "hloblab/optim.hpp"
#include "hloblab/preprocess.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hloblab::train {

using Confusion = std::array<std::array<std::int64_t, 3>, 3>;  // [truth][prediction]

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    double early_stop_delta = 0.003;
    std::size_t patience = 15;
    nn::AdamWConfig adamw{};
    std::size_t horizon = 10;
    std::size_t sample_cap = 5000;  // per class and day
    std::uint64_t seed = 0;
    bool track_train_accuracy = false;

    void validate() const;
};

/// Halts at the smallest epoch e >= patience with
/// best(e - patience) - best(e) < delta, where best(k) is the lowest loss seen
/// in epochs 1..k and best(0) is +inf. Epochs are 1-based.
class EarlyStopper {
public:
    EarlyStopper(std::size_t patience, double delta);

    /// Records the loss of the next epoch; returns true when training must stop.
    bool update(double validation_loss);
    /// True when the last recorded loss set a new best.
    bool improved() const { return improved_; }
    std::size_t epoch() const { return best_.size() - 1; }
    double best_loss() const { return best_.back(); }
    std::size_t best_epoch() const { return best_epoch_; }

private:
    std::size_t patience_;
    double delta_;
    std::vector<double> best_{std::numeric_limits<double>::infinity()};
    std::size_t best_epoch_ = 0;
    bool improved_ = false;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double train_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
    std::uint64_t optimizer_steps = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Model-free epoch driver. `on_best` runs whenever the validation loss sets a
/// new best, so callers can snapshot parameters.
TrainHistory run_epochs(const std::function<EpochStats(std::size_t epoch)>& train_epoch,
                        const std::function<double()>& validation_loss, const std::function<void()>& on_best,
                        std::size_t max_epochs, std::size_t patience, double delta);

struct DayWindows {
    prep::Date day{};
    std::vector<prep::LabeledWindow> windows;
};

/// Per-day class-balanced selection; days lacking a class are skipped and
/// reported through `diagnostics`. The result is in day order.
std::vector<prep::LabeledWindow> balanced_training_set(std::span<const DayWindows> days, std::size_t cap,
                                                       std::uint64_t seed, Diagnostics* diagnostics = nullptr);

using ColumnMaps = std::array<std::vector<std::size_t>, 3>;

/// Stacks windows into an N x 1 x T x 40 tensor.
template <typename Real>
nn::Tensor<Real> stack_windows(std::span<const prep::LabeledWindow> windows);

std::vector<int> class_labels(std::span<const prep::LabeledWindow> windows);

/// One AdamW step per shuffled batch; validation after every epoch; the model
/// ends holding the parameters of the best validation epoch.
template <typename Real>
TrainHistory train(model::HlobModel<Real>& net, const ColumnMaps& maps, std::span<const prep::LabeledWindow> train_set,
                   std::span<const prep::LabeledWindow> validation_set, const TrainConfig& config);

/// Mean cross-entropy over sequential batches, eval mode.
template <typename Real>
double mean_loss(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                 std::span<const prep::LabeledWindow> windows, std::size_t batch_size = 32);

/// Arg-max class ids over sequential batches, eval mode.
template <typename Real>
std::vector<int> predict_classes(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                                 std::span<const prep::LabeledWindow> windows, std::size_t batch_size = 32);

enum class F1Average { Macro, Weighted };

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted);
double f1_score(const Confusion& confusion, F1Average average = F1Average::Macro);
/// Multiclass (Gorodkin) correlation; 0 when either marginal is degenerate.
double mcc(const Confusion& confusion);

struct RoundTrips {
    double p_t = 0.0;
    std::int64_t tt = 0;
};

/// Directions in {-1, 0, +1}. A trip opens at a nonzero prediction while flat
/// and closes at the next prediction of opposite sign, after which the
/// position is flat again. p_t is the share of closed trips whose opening and
/// closing predictions both equal their labels.
RoundTrips round_trip_stats(std::span<const int> predictions, std::span<const int> labels);

inline constexpr const char* kRoundTripDefinition = "open-on-signal/close-on-opposite/flat-after-close v1";

struct EvalReport {
    double f1_macro = 0.0;
    double mcc = 0.0;
    double p_t = 0.0;
    std::int64_t tt = 0;
    Confusion confusion{};
    std::vector<double> train_loss_history;
    std::vector<double> validation_loss_history;
};

EvalReport evaluate_predictions(std::span<const int> truth_classes, std::span<const int> predicted_classes,
                                F1Average average = F1Average::Macro);

template <typename Real>
EvalReport evaluate(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                    std::span<const prep::LabeledWindow> test_set, std::size_t batch_size = 32);

/// Linear interpolation between closest ranks, q in [0, 1].
double percentile(std::vector<double> values, double q);

struct RunRecord {
    std::string model = "hlob";
    std::string ticker;
    std::string year;
    std::size_t horizon = 10;
    EvalReport report;
};

struct QuadrantThresholds {
    double tt_p25 = 0.0;
    double p_t_p75 = 0.0;
};

QuadrantThresholds quadrant_thresholds(std::span<const RunRecord> runs);
/// I: few trips, high p_t; II: many, high; III: few, low; IV: many, low.
int quadrant(double tt, double p_t, const QuadrantThresholds& thresholds);

/// Writes metrics_h{H}.csv and quadrants_h{H}.csv for every horizon present.
/// Returns the paths written, sorted.
std::vector<std::filesystem::path> emit_report(std::span<const RunRecord> runs, const std::filesystem::path& out_dir);

}  // namespace hloblab::train
