#pragma once

// Minimal dense tensor engine with reverse-mode differentiation. Only the
// layers the HLOB network needs are provided. Instantiated for float
// (training) and double (gradient checks).

#include "hloblab/error.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hloblab::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class Mode { Train, Eval };

namespace detail {

template <typename Real>
struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::uint64_t tape_id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<Real>& ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), Real{0});
        }
        return grad;
    }
};

std::uint64_t next_tape_id();

}  // namespace detail

bool grad_enabled();

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename Real>
class Tensor {
public:
    using value_type = Real;
    using Node = detail::Node<Real>;
    using BackwardFn = std::function<void(Node&)>;

    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real{0}, bool requires_grad = false);
    Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<Real> data() { return node_->value; }
    std::span<const Real> data() const { return node_->value; }
    /// Empty until a backward pass reaches this tensor.
    std::span<const Real> grad() const { return node_->grad; }
    Real item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    void zero_grad();
    std::uint64_t tape_id() const { return node_->tape_id; }

    /// Reverse sweep from this scalar; gradients accumulate into every
    /// reachable tensor that requires them.
    void backward();

    Tensor detach() const;

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Creates an op result. The tape entry is recorded only when grad mode is
    /// on and at least one parent requires gradients.
    static Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& parents,
                              BackwardFn backward);

private:
    std::shared_ptr<Node> node_;
};

struct Conv2dOptions {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_top = 0;
    std::size_t pad_bottom = 0;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;
};

/// Cross-correlation of N x C x H x W input with O x C x kh x kw weight.
/// `bias` (length O) may be undefined.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    const Conv2dOptions& options = {});

template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope = Real(0.01));

/// Inverted dropout in train mode, identity in eval mode.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, Mode mode, std::mt19937_64& rng);

/// N x I input, O x I weight, O bias.
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias);

template <typename Real>
struct LstmOutput {
    Tensor<Real> output;  // N x T x H
    Tensor<Real> h_n;     // N x H, differentiable view of the last step
    Tensor<Real> c_n;     // N x H, detached
};

/// Single-layer LSTM, gate order (input, forget, cell, output), zero initial state.
/// weight_ih: 4H x I, weight_hh: 4H x H, biases: 4H.
template <typename Real>
LstmOutput<Real> lstm(const Tensor<Real>& input, const Tensor<Real>& weight_ih, const Tensor<Real>& weight_hh,
                      const Tensor<Real>& bias_ih, const Tensor<Real>& bias_hh);

/// N x T x H -> N x H (last time step).
template <typename Real>
Tensor<Real> last_timestep(const Tensor<Real>& x);

/// N x C x T x 1 -> N x T x C.
template <typename Real>
Tensor<Real> channels_to_sequence(const Tensor<Real>& x);

/// Concatenates N x T x C_i tensors along the last axis.
template <typename Real>
Tensor<Real> concat_last(const std::vector<Tensor<Real>>& parts);

/// y[..., k] = x[..., columns[k]] on the last axis; backward scatters and sums.
template <typename Real>
Tensor<Real> gather_last(const Tensor<Real>& x, std::span<const std::size_t> columns);

/// Mean over the batch of -log softmax(logits)[label]; labels in [0, K).
template <typename Real>
Tensor<Real> softmax_cross_entropy(const Tensor<Real>& logits, std::span<const int> labels);

template <typename Real>
Tensor<Real> sum_squares(const Tensor<Real>& x);

/// Σ coefficients[i] * x[i]; reduces any tensor to a scalar for gradient checks.
template <typename Real>
Tensor<Real> weighted_sum(const Tensor<Real>& x, std::span<const Real> coefficients);

/// Row-wise stabilized softmax of an N x K buffer.
template <typename Real>
std::vector<Real> softmax_rows(std::span<const Real> logits, std::size_t classes);

}  // namespace hloblab::nn
