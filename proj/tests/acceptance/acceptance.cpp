// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include "hloblab/cli.hpp"
#include "hloblab/gradcheck_suite.hpp"
#include "hloblab/infonet.hpp"
#include "hloblab/preprocess.hpp"
#include "hloblab/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <sstream>

using namespace hloblab;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kTmfgBudgetSeconds = 5.0;
constexpr double kMiTolerance = 1e-12;
constexpr double kMetricTolerance = 1e-10;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kSeparableAccuracy = 0.95;
constexpr std::size_t kSeparableEpochs = 50;
constexpr double kSeparableBudgetSeconds = 600.0;
constexpr double kSmokeBudgetSeconds = 900.0;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            w(i, j) = w(j, i) = u(rng);
        }
    }
    return w;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// 1. Structure of the filtered graph over 20 vertices.
Outcome tmfg_structure() {
    Outcome o;
    std::mt19937_64 rng(2024);
    const auto t0 = Clock::now();
    for (int trial = 0; trial < 200; ++trial) {
        const auto w = random_symmetric(20, rng);
        const auto g = infonet::build_tmfg(w);
        const auto sc = infonet::extract_simplices(g);
        const auto tag = "matrix " + std::to_string(trial);
        o.require(g.edges.size() == 54 && sc.edges.size() == 54, tag + ": edge count");
        o.require(sc.triangles.size() == 52, tag + ": triangle count");
        o.require(sc.tetrahedra.size() == 17, tag + ": tetrahedron count");
        o.require(g.edges.size() == 3 * 20 - 6, tag + ": |E| != 3|V| - 6");
        auto order = g.insertion_order();
        std::reverse(order.begin(), order.end());
        o.require(infonet::is_perfect_elimination_ordering(g.adjacency(), order), tag + ": not chordal");
        // every triangle bounds two tetrahedra or is a hull face; every retained triangle is a 3-clique
        const auto adj = g.adjacency();
        for (const auto& t : sc.triangles) {
            o.require(adj[t[0]][t[1]] && adj[t[0]][t[2]] && adj[t[1]][t[2]], tag + ": triangle not a clique");
        }
    }
    const double s = seconds_since(t0);
    o.require(s < kTmfgBudgetSeconds, "runtime " + fmt(s) + " s");
    if (o.pass) {
        o.detail = "200 matrices, 54/52/17, chordal, " + fmt(s) + " s";
    }
    return o;
}

// 2. Five-vertex builds against exhaustive enumeration of (seed, host face).
Outcome tmfg_oracle() {
    Outcome o;
    std::mt19937_64 rng(55);
    const auto t0 = Clock::now();
    for (int trial = 0; trial < 50; ++trial) {
        auto w = random_symmetric(5, rng);
        if (trial % 10 == 0) {
            w = w.unaryExpr([](double v) { return std::round(v * 2.0) / 2.0; });  // force ties
        }
        // Candidates ordered by (seed lexicographic, outsider fixed, face discovery index).
        struct Candidate {
            std::array<int, 4> seed;
            std::array<int, 3> face;
            double seed_score;
            double gain;
        };
        std::vector<Candidate> all;
        for (int a = 0; a < 5; ++a)
            for (int b = a + 1; b < 5; ++b)
                for (int c = b + 1; c < 5; ++c)
                    for (int d = c + 1; d < 5; ++d) {
                        const std::array<int, 4> seed{a, b, c, d};
                        const int v = 10 - a - b - c - d;
                        const double score = w(a, b) + w(a, c) + w(a, d) + w(b, c) + w(b, d) + w(c, d);
                        for (const auto& f : {std::array<int, 3>{a, b, c}, {a, b, d}, {a, c, d}, {b, c, d}}) {
                            all.push_back({seed, f, score, w(v, f[0]) + w(v, f[1]) + w(v, f[2])});
                        }
                    }
        // Seed: first strict maximum in lexicographic order. Face: first strict maximum in discovery order.
        const Candidate* best_seed = &all.front();
        for (const auto& c : all) {
            if (c.seed_score > best_seed->seed_score) {
                best_seed = &c;
            }
        }
        const Candidate* best = nullptr;
        for (const auto& c : all) {
            if (c.seed == best_seed->seed && (best == nullptr || c.gain > best->gain)) {
                best = &c;
            }
        }
        const auto g = infonet::build_tmfg(w);
        const auto tag = "matrix " + std::to_string(trial);
        o.require(g.seed == best->seed, tag + ": seed differs");
        o.require(g.insertions.size() == 1 && g.insertions[0].vertex == 10 - best->seed[0] - best->seed[1] -
                                                                             best->seed[2] - best->seed[3],
                  tag + ": inserted vertex differs");
        o.require(!g.insertions.empty() && g.insertions[0].host.vertices == best->face, tag + ": host face differs");
    }
    const double s = seconds_since(t0);
    o.require(s < kTmfgBudgetSeconds, "runtime " + fmt(s) + " s");
    if (o.pass) {
        o.detail = "50 matrices match exhaustive enumeration";
    }
    return o;
}

std::vector<std::int32_t> column_from_table(const std::vector<std::vector<int>>& t, bool rows) {
    std::vector<std::int32_t> out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = 0; j < t[i].size(); ++j) {
            for (int k = 0; k < t[i][j]; ++k) {
                out.push_back(static_cast<std::int32_t>(rows ? i : j));
            }
        }
    }
    return out;
}

// 3. Plug-in mutual information.
Outcome mi_estimator() {
    Outcome o;
    struct Fixture {
        std::vector<std::vector<int>> table;
        double nats;  // 40-digit evaluation, rounded
    };
    const std::vector<Fixture> fixtures{
        {{{2, 1}, {1, 2}}, 0.056633012265132490967},
        {{{5, 0}, {0, 5}}, 0.69314718055994530942},
        {{{1, 1}, {1, 1}}, 0.0},
        {{{3, 1, 0}, {0, 2, 2}}, 0.4544543674493905025},
        {{{4, 2, 1}, {1, 3, 2}, {0, 1, 6}}, 0.28563694217321500307},
        {{{7, 1}, {2, 5}, {1, 4}}, 0.20794415416798359283},
    };
    double worst = 0.0;
    for (const auto& f : fixtures) {
        const double got = infonet::mutual_information(column_from_table(f.table, true), column_from_table(f.table, false));
        worst = std::max(worst, std::abs(got - f.nats));
    }
    o.require(worst <= kMiTolerance, "fixture error " + fmt(worst));

    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> len(2, 300);
    std::uniform_int_distribution<int> card(1, 12);
    double worst_self = 0.0;
    double worst_sym = 0.0;
    double most_negative = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = len(rng);
        std::uniform_int_distribution<int> bx(0, card(rng) - 1);
        std::uniform_int_distribution<int> by(0, card(rng) - 1);
        std::vector<std::int32_t> x(static_cast<std::size_t>(n));
        std::vector<std::int32_t> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = bx(rng);
            y[static_cast<std::size_t>(i)] = by(rng);
        }
        const double xy = infonet::mutual_information(x, y);
        const double yx = infonet::mutual_information(y, x);
        worst_sym = std::max(worst_sym, std::abs(xy - yx));
        most_negative = std::min(most_negative, xy);
        worst_self = std::max(worst_self, std::abs(infonet::mutual_information(x, x) - infonet::entropy(x)));
    }
    o.require(worst_self <= kMiTolerance, "MI(x,x) - H(x) = " + fmt(worst_self));
    o.require(worst_sym <= kMiTolerance, "asymmetry " + fmt(worst_sym));
    o.require(most_negative >= -kMiTolerance, "negative MI " + fmt(most_negative));
    if (o.pass) {
        o.detail = "6 fixtures max err " + fmt(worst) + "; 1000 pairs symmetric, non-negative, MI(x,x)=H(x)";
    }
    return o;
}

std::string run_cli(const std::vector<std::string>& args, int* code) {
    std::ostringstream out;
    std::ostringstream err;
    *code = cli::dispatch(args, out, err);
    return out.str() + err.str();
}

// 4. Parameter counts reported by `describe`.
Outcome parameter_audit() {
    Outcome o;
    int code = 0;
    const auto text = run_cli({"describe"}, &code);
    o.require(code == 0, "describe exited " + std::to_string(code));
    std::map<std::string, std::size_t> reported;
    bool in_components = false;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("component", 0) == 0) {
            in_components = true;
            continue;
        }
        if (line.empty()) {
            in_components = false;
        }
        std::istringstream fields(line);
        std::string name;
        std::size_t count = 0;
        if (in_components && fields >> name >> count) {
            reported[name] = count;
        }
    }
    const std::map<std::string, std::size_t> expected{
        {"head.tetra.conv_pv", 96},  {"head.tetra.block2", 12384}, {"head.tri.block2", 11360},
        {"head.edge.block2", 10336}, {"head.tetra.conv3", 17440},  {"head.tri.conv3", 53280},
        {"head.edge.conv3", 55328},  {"lstm", 16640},              {"total", 177155},
    };
    for (const auto& [name, count] : expected) {
        const auto it = reported.find(name);
        o.require(it != reported.end() && it->second == count,
                  name + " reported " + (it == reported.end() ? "nothing" : std::to_string(it->second)));
    }
    if (o.pass) {
        o.detail = "block2 12384/11360/10336, conv3 17440/53280/55328, lstm 16640, total 177155";
    }
    return o;
}

// 5. Shape cascade reported by `describe --shapes`.
Outcome shape_cascade() {
    Outcome o;
    int code = 0;
    const auto text = run_cli({"describe", "--shapes"}, &code);
    o.require(code == 0, "describe exited " + std::to_string(code));
    std::map<std::string, std::string> shapes;
    const std::regex row(R"(^(\S+)\s+\[([0-9x]+)\]$)");
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        std::smatch m;
        if (std::regex_match(line, m, row)) {
            shapes[m[1].str()] = m[2].str();
        }
    }
    const std::array<std::array<int, 4>, 3> widths{{{136, 68, 17, 1}, {312, 156, 52, 1}, {216, 108, 54, 1}}};
    for (std::size_t h = 0; h < 3; ++h) {
        const std::string base = std::string("head.") + model::kHeadNames[h];
        const auto& w = widths[h];
        const std::vector<std::pair<std::string, std::string>> want{
            {base + ".input", "1x1x100x" + std::to_string(w[0])},
            {base + ".conv_pv", "1x32x100x" + std::to_string(w[1])},
            {base + ".block2.conv_simplex", "1x32x100x" + std::to_string(w[2])},
            {base + ".block2.conv_time2", "1x32x100x" + std::to_string(w[2])},
            {base + ".conv3", "1x32x100x" + std::to_string(w[3])},
        };
        for (const auto& [name, shape] : want) {
            o.require(shapes[name] == shape, name + " is [" + shapes[name] + "], want [" + shape + "]");
        }
    }
    o.require(shapes["concat"] == "1x100x96", "concat is [" + shapes["concat"] + "]");
    o.require(shapes["out"] == "1x3", "logits are [" + shapes["out"] + "]");
    if (o.pass) {
        o.detail = "136>68>17>1, 312>156>52>1, 216>108>54>1 at T=100; concat 100x96; logits 3";
    }
    return o;
}

// 6. Finite-difference gradient suite.
Outcome gradient_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    double worst32 = 0.0;
    double worst64 = 0.0;
    std::size_t cases = 0;
    for (const auto precision : {nn::Precision::Float32, nn::Precision::Float64}) {
        for (const auto& e : nn::run_gradcheck_suite(precision)) {
            ++cases;
            (precision == nn::Precision::Float32 ? worst32 : worst64) =
                std::max(precision == nn::Precision::Float32 ? worst32 : worst64, e.max_relative_error);
            o.require(e.passed, e.name + " rel err " + fmt(e.max_relative_error) + " >= " + fmt(e.tolerance));
        }
    }
    const double s = seconds_since(t0);
    o.require(s < kGradBudgetSeconds, "runtime " + fmt(s) + " s");
    if (o.pass) {
        o.detail = std::to_string(cases) + " checks, max rel err " + fmt(worst32) + " (32-bit) " + fmt(worst64) +
                   " (64-bit), " + fmt(s) + " s";
    }
    return o;
}

// 7. Mid-price labels.
Outcome labeling() {
    Outcome o;
    const double tick = 100.0;
    // change = m[t+1] - m[t] per step: +100, -100, +99, -99, +50, 0, -150
    const std::vector<double> path{1000, 1100, 1000, 1099, 1000, 1050, 1050, 900};
    const std::vector<prep::Label> want{prep::Label::Up,     prep::Label::Down,   prep::Label::Stable,
                                        prep::Label::Stable, prep::Label::Stable, prep::Label::Stable,
                                        prep::Label::Down};
    const auto got = prep::label_series(path, 1, tick);
    for (std::size_t t = 0; t < want.size(); ++t) {
        o.require(got[t] && *got[t] == want[t], "boundary case at t=" + std::to_string(t));
    }
    o.require(!got.back().has_value(), "last position labeled");

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> step(-3, 3);
    std::uniform_int_distribution<int> hz(1, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> mids{100000.0};
        for (int i = 0; i < 60; ++i) {
            mids.push_back(mids.back() + 50.0 * step(rng));
        }
        std::vector<double> mirrored(mids.size());
        std::transform(mids.begin(), mids.end(), mirrored.begin(), [](double m) { return -m; });
        const auto h = static_cast<std::size_t>(hz(rng));
        const auto a = prep::label_series(mids, h, tick);
        const auto b = prep::label_series(mirrored, h, tick);
        for (std::size_t t = 0; t < a.size(); ++t) {
            const bool ok = a[t].has_value() == b[t].has_value() &&
                            (!a[t] || static_cast<int>(*a[t]) == -static_cast<int>(*b[t]));
            o.require(ok, "anti-symmetry broken on path " + std::to_string(trial));
        }
    }
    if (o.pass) {
        o.detail = "boundaries exact; anti-symmetric on 1000 paths";
    }
    return o;
}

// 8. Early stopping, balanced sampling and a separable dataset.
Outcome training_harness() {
    Outcome o;
    train::EarlyStopper stopper(15, 0.003);
    std::size_t fired = 0;
    for (std::size_t e = 1; e <= 100 && fired == 0; ++e) {
        if (stopper.update(0.75)) {
            fired = e;
        }
    }
    o.require(fired == 16, "stopper fired at " + std::to_string(fired));

    std::mt19937_64 rng(8);
    auto zeros = std::make_shared<prep::RowMatrix>(prep::RowMatrix::Zero(1, 40));
    std::vector<prep::LabeledWindow> day;
    const std::array<std::size_t, 3> counts{7000, 12000, 5600};
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
            day.push_back({zeros, {}, 0, 1, prep::label_from_class(c)});
        }
    }
    std::shuffle(day.begin(), day.end(), rng);
    const auto picked = prep::balanced_sample(day, 5000, 1);
    std::array<std::size_t, 3> per_class{};
    for (auto i : picked) {
        ++per_class[static_cast<std::size_t>(prep::class_id(day[i].label))];
    }
    o.require(per_class == std::array<std::size_t, 3>{5000, 5000, 5000}, "sampler counts not 5000 each");

    // Separable data through the full model geometry at a short window.
    constexpr std::size_t kWindow = 10;
    constexpr std::size_t kPerClass = 50;
    const auto complex = infonet::extract_simplices(infonet::build_tmfg(random_symmetric(20, rng)));
    const auto maps = infonet::head_column_maps(complex);
    const auto config = model::HlobConfig::for_complex(complex, kWindow);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<prep::LabeledWindow> samples;
    for (std::size_t i = 0; i < 3 * kPerClass; ++i) {
        const int c = static_cast<int>(i % 3);
        auto m = std::make_shared<prep::RowMatrix>(kWindow, 40);
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            for (Eigen::Index j = 0; j < 40; ++j) {
                (*m)(r, j) = noise(rng) + (j % 2 == 1 ? static_cast<double>(c - 1) : 0.0);
            }
        }
        samples.push_back({m, {}, kWindow - 1, kWindow, prep::label_from_class(c)});
    }
    train::TrainConfig tc;
    tc.max_epochs = kSeparableEpochs;
    tc.patience = kSeparableEpochs;
    tc.adamw.lr = 1e-3;
    tc.seed = 8;
    tc.track_train_accuracy = true;
    model::HlobModel<float> net(config, 8);
    const auto t0 = Clock::now();
    const auto history = train::train(net, maps, samples, samples, tc);
    const double s = seconds_since(t0);
    std::size_t reached = 0;
    for (const auto& e : history.epochs) {
        if (e.train_accuracy >= kSeparableAccuracy) {
            reached = e.epoch;
            break;
        }
    }
    o.require(reached != 0, "train accuracy never reached " + fmt(kSeparableAccuracy));
    o.require(s < kSeparableBudgetSeconds, "runtime " + fmt(s) + " s");
    if (o.pass) {
        o.detail = "stopper at 16; sampler 5000x3; separable data >= 95% at epoch " + std::to_string(reached) +
                   " (" + fmt(s) + " s for " + std::to_string(history.epochs.size()) + " epochs)";
    }
    return o;
}

train::RoundTrips scan_trips(const std::vector<int>& p, const std::vector<int>& l) {
    train::RoundTrips r;
    std::int64_t good = 0;
    std::size_t i = 0;
    while (true) {
        while (i < p.size() && p[i] == 0) {
            ++i;
        }
        std::size_t j = i + 1;
        while (j < p.size() && p[j] != -p[i]) {
            ++j;
        }
        if (i >= p.size() || j >= p.size()) {
            break;
        }
        ++r.tt;
        good += p[i] == l[i] && p[j] == l[j];
        i = j + 1;
    }
    r.p_t = r.tt > 0 ? static_cast<double>(good) / static_cast<double>(r.tt) : 0.0;
    return r;
}

// 9. Classification and trading metrics.
Outcome metrics() {
    Outcome o;
    struct Fixture {
        train::Confusion c;
        double f1;
        double mcc;
    };
    // Hand-derived: per-class F1 = 2 tp / (row + col); Gorodkin MCC from diagonal and marginals.
    const std::vector<Fixture> fixtures{
        {{{{50, 10, 5}, {8, 60, 7}, {4, 9, 47}}}, 0.7855127734701611, 0.6758660316839238},
        {{{{10, 0, 0}, {0, 10, 0}, {0, 0, 10}}}, 1.0, 1.0},
        {{{{0, 10, 0}, {0, 10, 0}, {0, 10, 0}}}, 1.0 / 6.0, 0.0},
        {{{{0, 0, 5}, {0, 0, 0}, {5, 0, 0}}}, 0.0, -1.0},
    };
    double worst = 0.0;
    for (const auto& f : fixtures) {
        worst = std::max(worst, std::abs(train::f1_score(f.c) - f.f1));
        worst = std::max(worst, std::abs(train::mcc(f.c) - f.mcc));
    }
    o.require(worst <= kMetricTolerance, "fixture error " + fmt(worst));

    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> cell(0, 20);
    for (int trial = 0; trial < 1000; ++trial) {
        train::Confusion c{};
        for (auto& row : c) {
            for (auto& v : row) {
                v = trial % 7 == 0 ? 0 : cell(rng);
            }
        }
        if (trial % 5 == 0) {
            const auto k = static_cast<std::size_t>(trial % 3);
            for (auto& row : c) {
                for (std::size_t j = 0; j < 3; ++j) {
                    row[j] = j == k ? row[j] : 0;  // single predicted column
                }
            }
        }
        const double m = train::mcc(c);
        o.require(m >= -1.0 && m <= 1.0, "MCC out of range " + fmt(m));
        if (trial % 5 == 0) {
            o.require(m == 0.0, "degenerate-column MCC " + fmt(m));
        }
    }

    std::uniform_int_distribution<int> dir(-1, 1);
    std::uniform_int_distribution<int> length(0, 400);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> p(static_cast<std::size_t>(length(rng)));
        std::vector<int> l(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = dir(rng);
            l[i] = dir(rng);
        }
        const auto got = train::round_trip_stats(p, l);
        const auto want = scan_trips(p, l);
        o.require(got.tt == want.tt && got.p_t == want.p_t, "round trips differ on sequence " + std::to_string(trial));
    }
    if (o.pass) {
        o.detail = "4 fixtures max err " + fmt(worst) + "; MCC in [-1,1]; 100 round-trip scans exact";
    }
    return o;
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") {
            continue;
        }
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream bytes;
        bytes << in.rdbuf();
        files[fs::relative(entry.path(), root).string()] = bytes.str();
    }
    return files;
}

// 10. Whole pipeline on a tiny synthetic configuration, run twice.
Outcome end_to_end() {
    Outcome o;
    const auto dir = fs::temp_directory_path() / "hloblab_acceptance_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "run.ticker = SYN\n"
               "run.seed = 11\n"
               "run.out_dir = out\n"
               "data.dir = data\n"
               "synth.days = 2017-03-01..2017-03-14\n"
               "synth.events = 2500\n"
               "split.train = 2017-03-08..2017-03-13\n"
               "split.validation = 2017-03-10\n"
               "split.test = 2017-03-14\n"
               "infonet.bins = 16\n"
               "infonet.bootstrap = 2\n"
               "model.window = 20\n"
               "train.max_epochs = 2\n"
               "train.sample_cap = 60\n"
               "report.year = 2017\n";
    }
    const std::string cfg = (dir / "run.cfg").string();
    const auto t0 = Clock::now();
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2 && o.pass; ++pass) {
        fs::remove_all(dir / "out");
        fs::remove_all(dir / "data");
        for (const char* verb : {"synth", "ingest", "mi", "tmfg", "train", "eval", "report"}) {
            int code = 0;
            const auto log = run_cli({verb, "-c", cfg}, &code);
            o.require(code == 0, std::string(verb) + " failed: " + log);
            if (!o.pass) {
                break;
            }
        }
        if (!o.pass) {
            break;
        }
        const auto files = snapshot_tree(dir / "out");
        o.require(files.count("report/metrics_h10.csv") == 1, "no metrics report");
        o.require(files.count("report/quadrants_h10.csv") == 1, "no quadrant report");
        if (pass == 0) {
            first = files;
        } else {
            o.require(files.size() == first.size(), "re-run wrote a different file set");
            for (const auto& [name, bytes] : files) {
                const auto it = first.find(name);
                o.require(it != first.end() && it->second == bytes, "re-run differs in " + name);
            }
        }
    }
    const double s = seconds_since(t0);
    o.require(s < kSmokeBudgetSeconds, "runtime " + fmt(s) + " s");
    if (o.pass) {
        o.detail = std::to_string(first.size()) + " artifacts byte-identical across two runs, " + fmt(s) + " s";
        fs::remove_all(dir);
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"tmfg structure", tmfg_structure},
        {"tmfg oracle equivalence", tmfg_oracle},
        {"mutual information", mi_estimator},
        {"parameter audit", parameter_audit},
        {"shape cascade", shape_cascade},
        {"gradient suite", gradient_suite},
        {"labeling", labeling},
        {"training harness", training_harness},
        {"metrics", metrics},
        {"end-to-end smoke", end_to_end},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.push_back(std::atoi(argv[i]));
    }
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && std::find(selected.begin(), selected.end(), id) == selected.end()) {
            continue;
        }
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        failures += outcome.pass ? 0 : 1;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first
                  << "): " << outcome.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
