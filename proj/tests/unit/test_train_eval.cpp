#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hloblab/infonet.hpp"
#include "hloblab/train_eval.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace hloblab;
using namespace hloblab::train;

namespace {

const Confusion kFixture{{{50, 10, 5}, {8, 60, 7}, {4, 9, 47}}};

std::vector<int> expand_truth(const Confusion& c, bool truth) {
    std::vector<int> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (std::int64_t k = 0; k < c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; ++k) {
                out.push_back(truth ? i : j);
            }
        }
    }
    return out;
}

// Correlation of one-hot indicator matrices.
double mcc_oracle(const std::vector<int>& x, const std::vector<int>& y) {
    const auto n = static_cast<double>(x.size());
    double cov_xy = 0, cov_xx = 0, cov_yy = 0;
    for (int k = 0; k < 3; ++k) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mx += x[i] == k;
            my += y[i] == k;
        }
        mx /= n;
        my /= n;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double a = (x[i] == k) - mx;
            const double b = (y[i] == k) - my;
            cov_xy += a * b;
            cov_xx += a * a;
            cov_yy += b * b;
        }
    }
    return cov_xx * cov_yy > 0 ? cov_xy / std::sqrt(cov_xx * cov_yy) : 0.0;
}

// Trips by forward search: open at the next nonzero, close at the next opposite.
RoundTrips trips_oracle(const std::vector<int>& pred, const std::vector<int>& label) {
    RoundTrips r;
    std::int64_t good = 0;
    std::size_t i = 0;
    while (i < pred.size()) {
        while (i < pred.size() && pred[i] == 0) {
            ++i;
        }
        if (i == pred.size()) {
            break;
        }
        std::size_t j = i + 1;
        while (j < pred.size() && pred[j] != -pred[i]) {
            ++j;
        }
        if (j == pred.size()) {
            break;
        }
        ++r.tt;
        good += (pred[i] == label[i] && pred[j] == label[j]);
        i = j + 1;
    }
    r.p_t = r.tt ? static_cast<double>(good) / static_cast<double>(r.tt) : 0.0;
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("early stopping on a constant loss halts at patience + 1") {
    EarlyStopper s(15, 0.003);
    std::size_t stopped = 0;
    for (std::size_t e = 1; e <= 100 && stopped == 0; ++e) {
        if (s.update(1.0)) {
            stopped = e;
        }
    }
    CHECK(stopped == 16);
    CHECK(s.best_epoch() == 1);
}

TEST_CASE("early stopping keeps going while improving by at least delta") {
    EarlyStopper s(2, 0.1);
    CHECK_FALSE(s.update(1.0));
    CHECK_FALSE(s.update(0.8));
    CHECK_FALSE(s.update(0.6));  // best(1) - best(3) = 0.4
    CHECK_FALSE(s.update(0.55)); // best(2) - best(4) = 0.25
    CHECK(s.update(0.7));        // best(3) - best(5) = 0.05
    CHECK(s.best_epoch() == 4);
    CHECK(s.best_loss() == 0.55);
}

TEST_CASE("epoch driver snapshots on improvement") {
    const std::vector<double> losses{3, 2, 2.5, 1, 1.5, 1.2, 1.1, 1.3, 1.4, 1.05};
    int snapshots = 0;
    const auto h = run_epochs([](std::size_t e) { return EpochStats{static_cast<double>(e), 0.0}; },
                              [&, i = std::size_t{0}]() mutable { return losses[i++]; }, [&] { ++snapshots; },
                              losses.size(), 3, 0.01);
    CHECK(snapshots == 3);
    CHECK(h.best_epoch == 4);
    CHECK(h.best_validation_loss == 1.0);
    CHECK(h.stopped_early);
    CHECK(h.epochs.size() == 7);  // best(4) - best(7) = 0
}

TEST_CASE("confusion, F1 and MCC on a fixed table") {
    const auto truth = expand_truth(kFixture, true);
    const auto pred = expand_truth(kFixture, false);
    const auto c = confusion_matrix(truth, pred);
    CHECK(c == kFixture);
    CHECK(f1_score(c) == doctest::Approx(0.7855127734701611).epsilon(1e-12));
    CHECK(f1_score(c, F1Average::Weighted) == doctest::Approx(0.7850880939347823).epsilon(1e-12));
    CHECK(mcc(c) == doctest::Approx(0.6758660316839238).epsilon(1e-12));
    CHECK(mcc(c) == doctest::Approx(mcc_oracle(truth, pred)).epsilon(1e-12));

    // per-class F1 from precision and recall
    double macro = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        double col = 0, row = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            col += static_cast<double>(c[j][k]);
            row += static_cast<double>(c[k][j]);
        }
        const double p = static_cast<double>(c[k][k]) / col;
        const double r = static_cast<double>(c[k][k]) / row;
        macro += 2 * p * r / (p + r) / 3.0;
    }
    CHECK(f1_score(c) == doctest::Approx(macro).epsilon(1e-12));
}

TEST_CASE("MCC on random labels matches the correlation oracle") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> cls(0, 2);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<int> t(200), p(200);
        for (std::size_t i = 0; i < 200; ++i) {
            t[i] = cls(rng);
            p[i] = trial % 2 ? cls(rng) : t[i];
        }
        CHECK(mcc(confusion_matrix(t, p)) == doctest::Approx(mcc_oracle(t, p)).epsilon(1e-10));
    }
}

TEST_CASE("degenerate predictions") {
    const std::vector<int> truth{0, 1, 2, 1};
    const std::vector<int> constant{1, 1, 1, 1};
    const auto c = confusion_matrix(truth, constant);
    CHECK(mcc(c) == 0.0);
    CHECK(f1_score(c) == doctest::Approx((2.0 * 2 / (2 + 4)) / 3.0));
    const std::vector<int> short_pred{1};
    CHECK_THROWS_AS(confusion_matrix(truth, short_pred), Error);
    const std::vector<int> bad{0, 1, 3, 1};
    CHECK_THROWS_AS(confusion_matrix(truth, bad), Error);
}

TEST_CASE("round trips against a forward-search oracle") {
    const std::vector<int> pred{0, 1, 1, 0, -1, -1, 1, 0, 0};
    const std::vector<int> lab{0, 1, 0, 0, -1, 0, 0, 1, 0};
    const auto r = round_trip_stats(pred, lab);
    CHECK(r.tt == 2);  // (1, 4) and (5, 6)
    CHECK(r.p_t == 0.5);

    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> dir(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> p(1 + trial % 40), l(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = dir(rng);
            l[i] = dir(rng);
        }
        const auto got = round_trip_stats(p, l);
        const auto want = trips_oracle(p, l);
        CHECK(got.tt == want.tt);
        CHECK(got.p_t == want.p_t);
    }
    const std::vector<int> none{0, 0, 1, 1};
    CHECK(round_trip_stats(none, none).tt == 0);
    CHECK(round_trip_stats(none, none).p_t == 0.0);
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(round_trip_stats(bad, std::vector<int>{0}), Error);
}

TEST_CASE("percentile interpolates linearly between ranks") {
    const std::vector<double> v{3, 1, 4, 1, 5, 9, 2, 6};
    CHECK(percentile(v, 0.25) == doctest::Approx(1.75));
    CHECK(percentile(v, 0.75) == doctest::Approx(5.25));
    CHECK(percentile(v, 0.0) == 1.0);
    CHECK(percentile(v, 1.0) == 9.0);
    CHECK(percentile({7.0}, 0.3) == 7.0);
    CHECK_THROWS_AS(percentile({}, 0.5), Error);
}

TEST_CASE("quadrants split on the thresholds") {
    const QuadrantThresholds th{10.0, 0.5};
    CHECK(quadrant(5, 0.9, th) == 1);
    CHECK(quadrant(20, 0.9, th) == 2);
    CHECK(quadrant(5, 0.1, th) == 3);
    CHECK(quadrant(20, 0.1, th) == 4);
}

TEST_CASE("report files average per ticker and list thresholds") {
    std::vector<RunRecord> runs;
    auto add = [&](std::string ticker, std::string year, double f1, double m, double pt, std::int64_t tt) {
        RunRecord r;
        r.ticker = std::move(ticker);
        r.year = std::move(year);
        r.report.f1_macro = f1;
        r.report.mcc = m;
        r.report.p_t = pt;
        r.report.tt = tt;
        runs.push_back(r);
    };
    add("AAA", "2018", 0.5, 0.2, 0.6, 10);
    add("AAA", "2017", 0.7, 0.4, 0.4, 30);
    add("BBB", "2017", 0.3, 0.1, 0.9, 5);
    const auto dir = std::filesystem::temp_directory_path() / "hloblab_report_test";
    std::filesystem::remove_all(dir);
    const auto paths = emit_report(runs, dir);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].filename() == "metrics_h10.csv");
    CHECK(paths[1].filename() == "quadrants_h10.csv");
    CHECK(slurp(paths[0]) ==
          "ticker,year,f1,mcc,p_t,tt\n"
          "AAA,2017+2018,0.600000,0.300000,0.500000,20.000000\n"
          "BBB,2017,0.300000,0.100000,0.900000,5.000000\n");
    // tt p25 of {10, 30, 5} = 7.5, p_t p75 of {0.6, 0.4, 0.9} = 0.75
    CHECK(slurp(paths[1]) ==
          "kind,model,ticker,year,tt,p_t,quadrant\n"
          "point,hlob,AAA,2018,10,0.600000,4\n"
          "point,hlob,AAA,2017,30,0.400000,4\n"
          "point,hlob,BBB,2017,5,0.900000,1\n"
          "threshold_tt_p25,,,,7.500000,,\n"
          "threshold_p_t_p75,,,,,0.750000,\n");
    std::filesystem::remove_all(dir);
}

TEST_CASE("training restores the best validation parameters") {
    Eigen::MatrixXd w(20, 20);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j <= i; ++j) {
            w(i, j) = w(j, i) = i == j ? 0.0 : u(rng);
        }
    }
    const auto complex = infonet::extract_simplices(infonet::build_tmfg(w));
    const auto maps = infonet::head_column_maps(complex);
    auto cfg = model::HlobConfig::for_complex(complex, 5);
    cfg.channels = 3;
    cfg.lstm_hidden = 4;

    auto features = std::make_shared<prep::RowMatrix>(60, 40);
    std::normal_distribution<double> g(0, 1);
    std::vector<prep::MaybeLabel> labels(60);
    for (Eigen::Index r = 0; r < 60; ++r) {
        const int cls = static_cast<int>(r % 3);
        labels[static_cast<std::size_t>(r)] = prep::label_from_class(cls);
        for (Eigen::Index c = 0; c < 40; ++c) {
            (*features)(r, c) = g(rng) + (c % 4 == 1 ? cls - 1.0 : 0.0);
        }
    }
    const auto windows = prep::build_windows(features, labels, 5);
    const std::span<const prep::LabeledWindow> all(windows);
    TrainConfig tc;
    tc.max_epochs = 4;
    tc.patience = 2;
    tc.batch_size = 8;
    tc.adamw.lr = 1e-3;
    tc.seed = 5;
    model::HlobModel<double> net(cfg, 1);
    const auto history = train::train(net, maps, all.first(40), all.subspan(40), tc);
    REQUIRE(!history.epochs.empty());
    CHECK(history.optimizer_steps == history.epochs.size() * 5);
    CHECK(mean_loss(net, maps, all.subspan(40), 8) == doctest::Approx(history.best_validation_loss).epsilon(1e-12));

    model::HlobModel<double> again(cfg, 1);
    const auto repeat = train::train(again, maps, all.first(40), all.subspan(40), tc);
    CHECK(repeat.best_validation_loss == history.best_validation_loss);

    const auto report = evaluate(net, maps, all.subspan(40), 8);
    std::int64_t total = 0;
    for (const auto& row : report.confusion) {
        for (auto v : row) {
            total += v;
        }
    }
    CHECK(total == static_cast<std::int64_t>(all.size() - 40));
}
