#include "hloblab/train_eval.hpp"

#include "hloblab/digest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace hloblab::train {

namespace {

std::uint64_t day_serial(prep::Date day) {
    return static_cast<std::uint64_t>(std::chrono::sys_days(day).time_since_epoch().count());
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
    }
    if (patience == 0) {
        throw Error(ErrorCode::InvalidArgument, "patience must be at least 1");
    }
    if (horizon == 0) {
        throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
    }
    if (!(adamw.lr > 0) || !(early_stop_delta >= 0) || sample_cap == 0) {
        throw Error(ErrorCode::InvalidArgument, "lr and sample_cap must be positive, early_stop_delta non-negative");
    }
}

EarlyStopper::EarlyStopper(std::size_t patience, double delta) : patience_(patience), delta_(delta) {
    if (patience == 0) {
        throw Error(ErrorCode::InvalidArgument, "patience must be at least 1");
    }
}

bool EarlyStopper::update(double validation_loss) {
    const double previous = best_.back();
    improved_ = validation_loss < previous;
    best_.push_back(improved_ ? validation_loss : previous);
    if (improved_) {
        best_epoch_ = epoch();
    }
    const std::size_t e = epoch();
    return e >= patience_ && best_[e - patience_] - best_[e] < delta_;
}

TrainHistory run_epochs(const std::function<EpochStats(std::size_t)>& train_epoch,
                        const std::function<double()>& validation_loss, const std::function<void()>& on_best,
                        std::size_t max_epochs, std::size_t patience, double delta) {
    EarlyStopper stopper(patience, delta);
    TrainHistory history;
    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        const EpochStats stats = train_epoch(epoch);
        const double val = validation_loss();
        history.epochs.push_back({epoch, stats.train_loss, val, stats.train_accuracy});
        const bool stop = stopper.update(val);
        if (stopper.improved() && on_best) {
            on_best();
        }
        if (stop) {
            history.stopped_early = epoch < max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    history.best_validation_loss = stopper.best_loss();
    return history;
}

std::vector<prep::LabeledWindow> balanced_training_set(std::span<const DayWindows> days, std::size_t cap,
                                                       std::uint64_t seed, Diagnostics* diagnostics) {
    std::vector<prep::LabeledWindow> out;
    for (const auto& day : days) {
        try {
            const auto picked = prep::balanced_sample(day.windows, cap, mix_seed(seed, day_serial(day.day)));
            for (auto i : picked) {
                out.push_back(day.windows[i]);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::MissingClass) {
                throw;
            }
            report(diagnostics, ErrorCode::MissingClass, 0, "skipping " + lob::format_date(day.day) + ": " + e.what());
        }
    }
    return out;
}

std::vector<int> class_labels(std::span<const prep::LabeledWindow> windows) {
    std::vector<int> labels;
    labels.reserve(windows.size());
    for (const auto& w : windows) {
        labels.push_back(prep::class_id(w.label));
    }
    return labels;
}

template <typename Real>
nn::Tensor<Real> stack_windows(std::span<const prep::LabeledWindow> windows) {
    if (windows.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no windows to stack");
    }
    const std::size_t T = windows.front().length;
    std::vector<Real> values;
    values.reserve(windows.size() * T * lob::kFeatures);
    for (const auto& w : windows) {
        if (w.length != T) {
            throw Error(ErrorCode::ShapeMismatch, "windows of different lengths in one batch");
        }
        const auto f = w.features();
        for (Eigen::Index r = 0; r < f.rows(); ++r) {
            for (Eigen::Index c = 0; c < f.cols(); ++c) {
                values.push_back(static_cast<Real>(f(r, c)));
            }
        }
    }
    return nn::Tensor<Real>({windows.size(), 1, T, lob::kFeatures}, std::move(values), false);
}

namespace {

template <typename Real>
void check_window_length(const model::HlobModel<Real>& net, std::span<const prep::LabeledWindow> windows) {
    for (const auto& w : windows) {
        if (w.length != net.config().window) {
            throw Error(ErrorCode::ShapeMismatch, "window length " + std::to_string(w.length) +
                                                      " differs from the model's " +
                                                      std::to_string(net.config().window));
        }
    }
}

template <typename Real>
std::vector<int> argmax_rows(const nn::Tensor<Real>& logits) {
    const std::size_t K = logits.dim(1);
    std::vector<int> out(logits.dim(0));
    const auto v = logits.data();
    for (std::size_t n = 0; n < out.size(); ++n) {
        const auto row = v.subspan(n * K, K);
        out[n] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

}  // namespace

template <typename Real>
double mean_loss(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                 std::span<const prep::LabeledWindow> windows, std::size_t batch_size) {
    if (windows.empty()) {
        throw Error(ErrorCode::EmptyDataset, "no windows to score");
    }
    check_window_length(net, windows);
    nn::NoGradGuard no_grad;
    double total = 0.0;
    for (const auto batch : prep::sequential_batches(windows, batch_size)) {
        const auto labels = class_labels(batch);
        const auto logits = net.forward_windows(stack_windows<Real>(batch), maps, nn::Mode::Eval);
        total += static_cast<double>(nn::softmax_cross_entropy(logits, std::span<const int>(labels)).item()) *
                 static_cast<double>(batch.size());
    }
    return total / static_cast<double>(windows.size());
}

template <typename Real>
std::vector<int> predict_classes(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                                 std::span<const prep::LabeledWindow> windows, std::size_t batch_size) {
    check_window_length(net, windows);
    nn::NoGradGuard no_grad;
    std::vector<int> out;
    out.reserve(windows.size());
    for (const auto batch : prep::sequential_batches(windows, batch_size)) {
        const auto logits = net.forward_windows(stack_windows<Real>(batch), maps, nn::Mode::Eval);
        std::vector<double> as_double(logits.data().begin(), logits.data().end());
        model::predict_proba(as_double, logits.dim(1));  // rejects non-finite logits
        const auto ids = argmax_rows(logits);
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

template <typename Real>
TrainHistory train(model::HlobModel<Real>& net, const ColumnMaps& maps, std::span<const prep::LabeledWindow> train_set,
                   std::span<const prep::LabeledWindow> validation_set, const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) {
        throw Error(ErrorCode::EmptyDataset, "training set is empty");
    }
    if (validation_set.empty()) {
        throw Error(ErrorCode::EmptyDataset, "validation set is empty");
    }
    check_window_length(net, train_set);
    check_window_length(net, validation_set);

    auto& params = net.parameters();
    std::mt19937_64 dropout_rng(mix_seed(config.seed, 0xd0));
    std::uint64_t step = 0;
    std::vector<std::vector<Real>> best_values;
    std::vector<std::size_t> order(train_set.size());
    std::vector<prep::LabeledWindow> batch;

    auto train_epoch = [&](std::size_t epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5f00 + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(train_set[order[i]]);
            }
            const auto labels = class_labels(batch);
            nn::zero_grad<Real>(params);
            auto logits = net.forward_windows(stack_windows<Real>(batch), maps, nn::Mode::Train, &dropout_rng);
            auto loss = nn::softmax_cross_entropy(logits, std::span<const int>(labels));
            loss.backward();
            nn::adamw_step<Real>(params, config.adamw, ++step);
            total += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
        }
        EpochStats stats;
        stats.train_loss = total / static_cast<double>(train_set.size());
        if (config.track_train_accuracy) {
            const auto predicted = predict_classes(net, maps, train_set, config.batch_size);
            const auto truth = class_labels(train_set);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                hits += predicted[i] == truth[i];
            }
            stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(truth.size());
        }
        return stats;
    };
    auto validation = [&] { return mean_loss(net, maps, validation_set, config.batch_size); };
    auto snapshot = [&] {
        best_values.clear();
        for (const auto& p : params) {
            best_values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
        }
    };

    TrainHistory history =
        run_epochs(train_epoch, validation, snapshot, config.max_epochs, config.patience, config.early_stop_delta);
    history.optimizer_steps = step;
    if (!best_values.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::copy(best_values[i].begin(), best_values[i].end(), params[i].tensor.data().begin());
        }
    }
    return history;
}

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::LengthMismatch, "truth and prediction lengths differ");
    }
    Confusion c{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] > 2 || predicted[i] < 0 || predicted[i] > 2) {
            throw Error(ErrorCode::BadLabel, "class id outside [0, 2] at position " + std::to_string(i), i);
        }
        ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return c;
}

double f1_score(const Confusion& c, F1Average average) {
    double total = 0.0;
    double weighted = 0.0;
    double macro = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        double tp = static_cast<double>(c[k][k]);
        double support = 0.0;
        double predicted = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            support += static_cast<double>(c[k][j]);
            predicted += static_cast<double>(c[j][k]);
        }
        const double denom = support + predicted;
        const double f1 = denom > 0 ? 2.0 * tp / denom : 0.0;
        macro += f1 / 3.0;
        weighted += f1 * support;
        total += support;
    }
    if (average == F1Average::Weighted) {
        return total > 0 ? weighted / total : 0.0;
    }
    return macro;
}

double mcc(const Confusion& c) {
    double s = 0.0;
    double correct = 0.0;
    std::array<double, 3> t{};  // true totals
    std::array<double, 3> p{};  // predicted totals
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double v = static_cast<double>(c[i][j]);
            s += v;
            t[i] += v;
            p[j] += v;
        }
        correct += static_cast<double>(c[i][i]);
    }
    double pt = 0.0;
    double pp = 0.0;
    double tt = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        pt += p[k] * t[k];
        pp += p[k] * p[k];
        tt += t[k] * t[k];
    }
    const double denom = std::sqrt(s * s - pp) * std::sqrt(s * s - tt);
    if (denom == 0.0) {
        return 0.0;
    }
    return std::clamp((correct * s - pt) / denom, -1.0, 1.0);
}

RoundTrips round_trip_stats(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
    }
    RoundTrips out;
    std::int64_t correct = 0;
    int position = 0;
    std::size_t opener = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        if (p < -1 || p > 1 || labels[i] < -1 || labels[i] > 1) {
            throw Error(ErrorCode::BadLabel, "direction outside {-1, 0, +1} at position " + std::to_string(i), i);
        }
        if (position == 0) {
            if (p != 0) {
                position = p;
                opener = i;
            }
        } else if (p == -position) {
            ++out.tt;
            correct += (predictions[opener] == labels[opener] && p == labels[i]) ? 1 : 0;
            position = 0;
        }
    }
    out.p_t = out.tt > 0 ? static_cast<double>(correct) / static_cast<double>(out.tt) : 0.0;
    return out;
}

EvalReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted, F1Average average) {
    if (truth.empty()) {
        throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
    }
    EvalReport r;
    r.confusion = confusion_matrix(truth, predicted);
    r.f1_macro = f1_score(r.confusion, average);
    r.mcc = mcc(r.confusion);
    std::vector<int> pred_dir(predicted.size());
    std::vector<int> true_dir(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        pred_dir[i] = predicted[i] - 1;
        true_dir[i] = truth[i] - 1;
    }
    const auto trips = round_trip_stats(pred_dir, true_dir);
    r.p_t = trips.p_t;
    r.tt = trips.tt;
    return r;
}

template <typename Real>
EvalReport evaluate(const model::HlobModel<Real>& net, const ColumnMaps& maps,
                    std::span<const prep::LabeledWindow> test_set, std::size_t batch_size) {
    if (test_set.empty()) {
        throw Error(ErrorCode::EmptyDataset, "test set is empty");
    }
    const auto predicted = predict_classes(net, maps, test_set, batch_size);
    const auto truth = class_labels(test_set);
    return evaluate_predictions(truth, predicted);
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw Error(ErrorCode::EmptyList, "percentile of an empty list");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "percentile rank must lie in [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

QuadrantThresholds quadrant_thresholds(std::span<const RunRecord> runs) {
    std::vector<double> tt;
    std::vector<double> pt;
    for (const auto& r : runs) {
        tt.push_back(static_cast<double>(r.report.tt));
        pt.push_back(r.report.p_t);
    }
    return {percentile(tt, 0.25), percentile(pt, 0.75)};
}

int quadrant(double tt, double p_t, const QuadrantThresholds& th) {
    const bool many = tt >= th.tt_p25;
    const bool high = p_t > th.p_t_p75;
    if (high) {
        return many ? 2 : 1;
    }
    return many ? 4 : 3;
}

std::vector<std::filesystem::path> emit_report(std::span<const RunRecord> runs, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
    }
    std::map<std::size_t, std::vector<const RunRecord*>> by_horizon;
    for (const auto& r : runs) {
        by_horizon[r.horizon].push_back(&r);
    }
    std::vector<std::filesystem::path> written;
    auto open = [&](const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
        }
        written.push_back(path);
        return out;
    };
    for (const auto& [horizon, group] : by_horizon) {
        const std::string suffix = "_h" + std::to_string(horizon) + ".csv";
        {
            auto out = open(out_dir / ("metrics" + suffix));
            out << "ticker,year,f1,mcc,p_t,tt\n";
            std::map<std::string, std::vector<const RunRecord*>> by_ticker;
            for (const auto* r : group) {
                by_ticker[r->ticker].push_back(r);
            }
            for (auto& [ticker, rows] : by_ticker) {
                std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->year < b->year; });
                std::set<std::string> years;
                double f1 = 0, m = 0, pt = 0, tt = 0;
                for (const auto* r : rows) {
                    years.insert(r->year);
                    f1 += r->report.f1_macro;
                    m += r->report.mcc;
                    pt += r->report.p_t;
                    tt += static_cast<double>(r->report.tt);
                }
                std::string year_list;
                for (const auto& y : years) {
                    year_list += (year_list.empty() ? "" : "+") + y;
                }
                const double n = static_cast<double>(rows.size());
                out << ticker << ',' << year_list << ',' << fmt(f1 / n) << ',' << fmt(m / n) << ',' << fmt(pt / n)
                    << ',' << fmt(tt / n) << '\n';
            }
        }
        {
            std::vector<RunRecord> copies;
            for (const auto* r : group) {
                copies.push_back(*r);
            }
            const auto th = quadrant_thresholds(copies);
            auto out = open(out_dir / ("quadrants" + suffix));
            out << "kind,model,ticker,year,tt,p_t,quadrant\n";
            for (const auto* r : group) {
                const auto tt = static_cast<double>(r->report.tt);
                out << "point," << r->model << ',' << r->ticker << ',' << r->year << ',' << r->report.tt << ','
                    << fmt(r->report.p_t) << ',' << quadrant(tt, r->report.p_t, th) << '\n';
            }
            out << "threshold_tt_p25,,,," << fmt(th.tt_p25) << ",,\n";
            out << "threshold_p_t_p75,,,,," << fmt(th.p_t_p75) << ",\n";
        }
    }
    std::sort(written.begin(), written.end());
    return written;
}

#define HLOBLAB_TRAIN_INSTANTIATE(Real)                                                                              \
    template nn::Tensor<Real> stack_windows<Real>(std::span<const prep::LabeledWindow>);                            \
    template TrainHistory train<Real>(model::HlobModel<Real>&, const ColumnMaps&,                                   \
                                      std::span<const prep::LabeledWindow>, std::span<const prep::LabeledWindow>,   \
                                      const TrainConfig&);                                                          \
    template double mean_loss<Real>(const model::HlobModel<Real>&, const ColumnMaps&,                               \
                                    std::span<const prep::LabeledWindow>, std::size_t);                             \
    template std::vector<int> predict_classes<Real>(const model::HlobModel<Real>&, const ColumnMaps&,               \
                                                    std::span<const prep::LabeledWindow>, std::size_t);             \
    template EvalReport evaluate<Real>(const model::HlobModel<Real>&, const ColumnMaps&,                            \
                                       std::span<const prep::LabeledWindow>, std::size_t);

HLOBLAB_TRAIN_INSTANTIATE(float)
HLOBLAB_TRAIN_INSTANTIATE(double)

}  // namespace hloblab::train
