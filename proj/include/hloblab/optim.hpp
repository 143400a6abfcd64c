#pragma once

#include "hloblab/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hloblab::nn {

template <typename Real>
struct Parameter {
    std::string name;  // e.g. "head.tetra.conv_pv.weight"
    Tensor<Real> tensor;
    std::vector<Real> first_moment;
    std::vector<Real> second_moment;

    Parameter(std::string n, Tensor<Real> t)
        : name(std::move(n)), tensor(std::move(t)), first_moment(tensor.numel(), Real{0}),
          second_moment(tensor.numel(), Real{0}) {
        tensor.set_requires_grad(true);
    }
};

struct AdamWConfig {
    double lr = 6e-5;
    double beta1 = 0.90;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// One AdamW update with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// `step` is 1-based and drives the bias corrections. Parameters without a
/// gradient buffer are treated as having a zero gradient.
template <typename Real>
void adamw_step(std::span<Parameter<Real>> params, const AdamWConfig& config, std::uint64_t step) {
    if (step == 0) {
        throw Error(ErrorCode::InvalidArgument, "AdamW step counter is 1-based");
    }
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (auto& p : params) {
        auto values = p.tensor.data();
        const auto grad = p.tensor.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
            const double m = config.beta1 * static_cast<double>(p.first_moment[i]) + (1.0 - config.beta1) * g;
            const double v = config.beta2 * static_cast<double>(p.second_moment[i]) + (1.0 - config.beta2) * g * g;
            p.first_moment[i] = static_cast<Real>(m);
            p.second_moment[i] = static_cast<Real>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            const double x = static_cast<double>(values[i]);
            values[i] = static_cast<Real>(x - config.lr * (m_hat / (std::sqrt(v_hat) + config.eps) +
                                                             config.weight_decay * x));
        }
    }
}

template <typename Real>
void zero_grad(std::span<Parameter<Real>> params) {
    for (auto& p : params) {
        p.tensor.zero_grad();
    }
}

}  // namespace hloblab::nn
