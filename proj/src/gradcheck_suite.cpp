#include "hloblab/gradcheck_suite.hpp"

#include "hloblab/gradcheck.hpp"
#include "hloblab/hlob_model.hpp"
#include "hloblab/infonet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hloblab::nn {

namespace {

constexpr long double kStep = 1e-6L;

struct LeafSpec {
    Shape shape;
    std::vector<double> values;
};

template <typename Leaves>
using RealOf = typename std::decay_t<Leaves>::value_type::value_type;

template <typename Real>
std::vector<Tensor<Real>> make_leaves(const std::vector<LeafSpec>& specs, bool requires_grad) {
    std::vector<Tensor<Real>> leaves;
    for (const auto& s : specs) {
        std::vector<Real> v(s.values.begin(), s.values.end());
        leaves.emplace_back(s.shape, std::move(v), requires_grad);
    }
    return leaves;
}

class SuiteBuilder {
public:
    SuiteBuilder(Precision precision, std::uint64_t seed) : precision_(precision), rng_(seed) {}

    /// Values uniform in ±[0.1, 1] so leaky-relu kinks stay far from the probes.
    LeafSpec leaf(Shape shape) {
        std::uniform_real_distribution<double> mag(0.1, 1.0);
        std::bernoulli_distribution sign(0.5);
        LeafSpec s{std::move(shape), {}};
        s.values.resize(shape_numel(s.shape));
        for (auto& v : s.values) {
            v = sign(rng_) ? mag(rng_) : -mag(rng_);
        }
        return s;
    }

    std::vector<double> coefficients(std::size_t n) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> c(n);
        for (auto& v : c) {
            v = u(rng_);
        }
        return c;
    }

    template <typename Loss>
    void check(const std::string& name, std::vector<LeafSpec> specs, Loss loss, std::size_t max_coords = 0) {
        if (precision_ == Precision::Float32) {
            run<float>(name, std::move(specs), loss, 1e-4, max_coords);
        } else {
            run<double>(name, std::move(specs), loss, 1e-6, max_coords);
        }
    }

    std::vector<GradCheckEntry> take() { return std::move(entries_); }

private:
    template <typename Real, typename Loss>
    void run(const std::string& name, std::vector<LeafSpec> specs, Loss& loss, double tolerance,
             std::size_t max_coords) {
        for (auto& s : specs) {
            for (auto& v : s.values) {
                v = static_cast<double>(static_cast<Real>(v));
            }
        }
        auto leaves = make_leaves<Real>(specs, true);
        loss(leaves).backward();

        GradCheckEntry entry{name, 0.0, 0.0, 0, tolerance, false};
        NoGradGuard no_grad;
        auto probe = make_leaves<long double>(specs, false);
        for (std::size_t l = 0; l < probe.size(); ++l) {
            std::vector<std::size_t> coords(probe[l].numel());
            std::iota(coords.begin(), coords.end(), std::size_t{0});
            if (max_coords != 0 && coords.size() > max_coords) {
                std::shuffle(coords.begin(), coords.end(), rng_);
                coords.resize(max_coords);
            }
            const auto grad = leaves[l].grad();
            auto values = probe[l].data();
            double diff2 = 0.0;
            double analytic2 = 0.0;
            double numeric2 = 0.0;
            for (auto i : coords) {
                const long double saved = values[i];
                values[i] = saved + kStep;
                const long double up = loss(probe).item();
                values[i] = saved - kStep;
                const long double down = loss(probe).item();
                values[i] = saved;
                const double analytic = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
                const double numeric = static_cast<double>((up - down) / (2.0L * kStep));
                entry.max_elementwise_error = std::max(entry.max_elementwise_error, relative_error(analytic, numeric));
                diff2 += (analytic - numeric) * (analytic - numeric);
                analytic2 += analytic * analytic;
                numeric2 += numeric * numeric;
                ++entry.coordinates;
            }
            const double denom = std::max({std::sqrt(analytic2), std::sqrt(numeric2), 1e-12});
            entry.max_relative_error = std::max(entry.max_relative_error, std::sqrt(diff2) / denom);
        }
        entry.passed = entry.max_relative_error < tolerance;
        entries_.push_back(std::move(entry));
    }

    Precision precision_;
    std::mt19937_64 rng_;
    std::vector<GradCheckEntry> entries_;
};

/// Reduces any tensor to a scalar with fixed coefficients.
template <typename Real>
Tensor<Real> reduce(const Tensor<Real>& x, const std::vector<double>& coefficients) {
    std::vector<Real> c(coefficients.begin(), coefficients.begin() + static_cast<std::ptrdiff_t>(x.numel()));
    return weighted_sum(x, std::span<const Real>(c));
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(Precision precision, std::uint64_t seed) {
    SuiteBuilder b(precision, seed);
    const auto c = b.coefficients(4096);

    b.check("conv2d.pv", {b.leaf({2, 1, 3, 8}), b.leaf({3, 1, 1, 2}), b.leaf({3})}, [&](auto& x) {
        return reduce(conv2d(x[0], x[1], x[2], {.stride_h = 1, .stride_w = 2}), c);
    });
    b.check("conv2d.simplex", {b.leaf({2, 3, 3, 6}), b.leaf({3, 3, 1, 3}), b.leaf({3})}, [&](auto& x) {
        return reduce(conv2d(x[0], x[1], x[2], {.stride_h = 1, .stride_w = 3}), c);
    });
    b.check("conv2d.time_same", {b.leaf({2, 3, 5, 2}), b.leaf({3, 3, 4, 1}), b.leaf({3})}, [&](auto& x) {
        return reduce(conv2d(x[0], x[1], x[2], {.pad_top = 1, .pad_bottom = 2}), c);
    });
    b.check("conv2d.general_nobias", {b.leaf({1, 2, 5, 5}), b.leaf({2, 2, 2, 3})}, [&](auto& x) {
        using R = RealOf<decltype(x)>;
        const Conv2dOptions o{.stride_h = 2, .stride_w = 1, .pad_top = 1, .pad_bottom = 0, .pad_left = 2, .pad_right = 1};
        return reduce(conv2d(x[0], x[1], Tensor<R>{}, o), c);
    });
    b.check("leaky_relu", {b.leaf({3, 4})}, [&](auto& x) {
        using R = RealOf<decltype(x)>;
        return reduce(leaky_relu(x[0], R(0.01)), c);
    });
    b.check("dropout.train", {b.leaf({4, 5})}, [&](auto& x) {
        std::mt19937_64 rng(42);
        return reduce(dropout(x[0], 0.35, Mode::Train, rng), c);
    });
    b.check("linear", {b.leaf({3, 5}), b.leaf({4, 5}), b.leaf({4})},
            [&](auto& x) { return reduce(linear(x[0], x[1], x[2]), c); });
    const std::vector<LeafSpec> lstm_leaves{b.leaf({2, 4, 3}), b.leaf({12, 3}), b.leaf({12, 3}), b.leaf({12}),
                                            b.leaf({12})};
    b.check("lstm.output", lstm_leaves,
            [&](auto& x) { return reduce(lstm(x[0], x[1], x[2], x[3], x[4]).output, c); });
    b.check("lstm.h_n", lstm_leaves, [&](auto& x) { return reduce(lstm(x[0], x[1], x[2], x[3], x[4]).h_n, c); });
    b.check("last_timestep", {b.leaf({2, 4, 3})}, [&](auto& x) { return reduce(last_timestep(x[0]), c); });
    b.check("channels_to_sequence", {b.leaf({2, 3, 4, 1})},
            [&](auto& x) { return reduce(channels_to_sequence(x[0]), c); });
    b.check("concat_last", {b.leaf({2, 3, 2}), b.leaf({2, 3, 4})}, [&](auto& x) {
        using R = RealOf<decltype(x)>;
        return reduce(concat_last(std::vector<Tensor<R>>{x[0], x[1]}), c);
    });
    const std::vector<std::size_t> columns{0, 2, 2, 5, 1};
    b.check("gather_last", {b.leaf({2, 1, 3, 6})},
            [&](auto& x) { return reduce(gather_last(x[0], std::span<const std::size_t>(columns)), c); });
    const std::vector<int> labels{0, 2, 1, 2};
    b.check("softmax_cross_entropy", {b.leaf({4, 3})},
            [&](auto& x) { return softmax_cross_entropy(x[0], std::span<const int>(labels)); });
    b.check("sum_squares", {b.leaf({3, 3})}, [&](auto& x) { return sum_squares(x[0]); });

    // Composed model: every parameter tensor plus the raw window input.
    std::mt19937_64 mrng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd w(infonet::kVertices, infonet::kVertices);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            w(i, j) = w(j, i) = i == j ? 0.0 : u(mrng);
        }
    }
    const auto complex = infonet::extract_simplices(infonet::build_tmfg(w));
    const auto maps = infonet::head_column_maps(complex);
    auto config = model::HlobConfig::for_complex(complex, 6);
    config.channels = 2;
    config.lstm_hidden = 3;
    const model::HlobModel<double> reference(config, seed);  // shapes only
    std::vector<LeafSpec> specs{b.leaf({2, 1, config.window, lob::kFeatures})};
    // Positive fan-in-scaled conv weights keep activations O(1) and mostly on
    // the unit-slope side; small recurrent weights keep the gates unsaturated.
    for (const auto& p : reference.parameters()) {
        auto spec = b.leaf(p.tensor.shape());
        const auto& shape = p.tensor.shape();
        const bool conv = p.name.rfind("head.", 0) == 0;
        const bool weight = p.name.ends_with(".weight") || p.name.find(".weight_") != std::string::npos;
        const double fan_in = weight ? static_cast<double>(spec.values.size() / shape[0]) : 1.0;
        for (auto& v : spec.values) {
            if (conv) {
                v = weight ? (0.5 + std::abs(v)) / fan_in : 0.1 * std::abs(v);
            } else if (p.name.rfind("lstm.", 0) == 0) {
                v = weight ? v / std::sqrt(fan_in) : 0.3 * v;
            }
        }
        specs.push_back(std::move(spec));
    }
    const std::vector<int> model_labels{0, 2};
    b.check(
        "hlob.loss", specs,
        [&](auto& x) {
            using R = RealOf<decltype(x)>;
            model::HlobModel<R> net(config, seed);
            for (std::size_t i = 0; i < net.parameters().size(); ++i) {
                net.parameters()[i].tensor = x[i + 1];
            }
            std::mt19937_64 rng(11);
            return softmax_cross_entropy(net.forward_windows(x[0], maps, Mode::Train, &rng),
                                         std::span<const int>(model_labels));
        },
        24);
    return b.take();
}

}  // namespace hloblab::nn
