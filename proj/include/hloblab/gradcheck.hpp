#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include "hloblab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace hloblab::nn {

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

/// Compares the reverse-mode gradient of scalar `f` at `x` with central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h over every coordinate.
template <typename Real>
GradCheckResult grad_check_detailed(const std::function<Tensor<Real>(const Tensor<Real>&)>& f,
                                    const Tensor<Real>& x, double h) {
    if (!(h > 0)) {
        throw Error(ErrorCode::InvalidArgument, "finite-difference step must be positive");
    }
    Tensor<Real> probe(x.shape(), std::vector<Real>(x.data().begin(), x.data().end()), true);
    auto loss = f(probe);
    loss.backward();
    std::vector<Real> analytic(probe.grad().begin(), probe.grad().end());
    analytic.resize(probe.numel(), Real{0});

    GradCheckResult result;
    NoGradGuard no_grad;
    Tensor<Real> shifted(x.shape(), std::vector<Real>(x.data().begin(), x.data().end()), false);
    auto values = shifted.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Real saved = values[i];
        values[i] = static_cast<Real>(static_cast<double>(saved) + h);
        const double up = static_cast<double>(f(shifted).item());
        values[i] = static_cast<Real>(static_cast<double>(saved) - h);
        const double down = static_cast<double>(f(shifted).item());
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = relative_error(static_cast<double>(analytic[i]), numeric);
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_index = i;
        }
        ++result.coordinates;
    }
    return result;
}

template <typename Real>
double grad_check(const std::function<Tensor<Real>(const Tensor<Real>&)>& f, const Tensor<Real>& x, double h) {
    return grad_check_detailed(f, x, h).max_relative_error;
}

/// Checks gradients of a closure-captured loss with respect to tensors it
/// reads (model parameters). At most `max_coordinates` coordinates per tensor
/// are probed, chosen by `seed`; pass 0 to probe all of them.
template <typename Real>
GradCheckResult grad_check_leaves(const std::function<Tensor<Real>()>& loss_fn, std::vector<Tensor<Real>> leaves,
                                  double h, std::size_t max_coordinates = 0, std::uint64_t seed = 0) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    auto loss = loss_fn();
    loss.backward();

    GradCheckResult result;
    std::mt19937_64 rng(seed);
    NoGradGuard no_grad;
    std::size_t flat_offset = 0;
    for (auto& leaf : leaves) {
        std::vector<double> analytic(leaf.numel(), 0.0);
        for (std::size_t i = 0; i < leaf.grad().size(); ++i) {
            analytic[i] = static_cast<double>(leaf.grad()[i]);
        }
        std::vector<std::size_t> coords(leaf.numel());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            coords[i] = i;
        }
        if (max_coordinates != 0 && coords.size() > max_coordinates) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coordinates);
            std::sort(coords.begin(), coords.end());
        }
        auto values = leaf.data();
        for (auto i : coords) {
            const Real saved = values[i];
            values[i] = static_cast<Real>(static_cast<double>(saved) + h);
            const double up = static_cast<double>(loss_fn().item());
            values[i] = static_cast<Real>(static_cast<double>(saved) - h);
            const double down = static_cast<double>(loss_fn().item());
            values[i] = saved;
            const double err = relative_error(analytic[i], (up - down) / (2.0 * h));
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_index = flat_offset + i;
            }
            ++result.coordinates;
        }
        flat_offset += leaf.numel();
    }
    return result;
}

}  // namespace hloblab::nn
