#pragma once

// Three-head homological convolutional network with an LSTM and a linear
// classifier. Each head sees the flattened (price, volume) pairs of one
// simplicial family:
//
//   conv_pv      1 x 2, stride 1 x 2          1 -> C   width W -> W/2
//   block2       1 x arity, stride arity      C -> C   W/2 -> Ω
//                4 x 1 (time, same padding)   C -> C
//                4 x 1 (time, same padding)   C -> C
//   conv3        1 x Ω                        C -> C   Ω -> 1, then dropout
//
// The three N x C x T x 1 maps become N x T x 3C, feed an LSTM, and its final
// hidden state feeds the output layer. Logits are returned unnormalized.

#include "hloblab/infonet.hpp"
#include "hloblab/optim.hpp"
#include "hloblab/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hloblab::model {

inline constexpr std::array<const char*, 3> kHeadNames{"tetra", "tri", "edge"};

struct HlobConfig {
    std::size_t window = 100;  // T
    std::size_t channels = 32;
    std::array<std::size_t, 3> widths{136, 312, 216};
    std::array<std::size_t, 3> arities{4, 3, 2};
    std::array<std::size_t, 3> cardinalities{17, 52, 54};  // Ω
    double dropout = 0.35;
    std::size_t lstm_hidden = 32;
    std::size_t classes = 3;
    double leaky_slope = 0.01;
    std::size_t time_kernel = 4;

    /// Throws ConfigInconsistent unless width = Ω * arity * 2 for every head.
    void validate() const;
    std::string canonical() const;
    std::uint64_t digest() const;

    /// Geometry implied by a simplicial complex over 20 volume vertices.
    static HlobConfig for_complex(const infonet::SimplicialComplex& complex, std::size_t window = 100);
};

struct ShapeProbe {
    std::string name;
    nn::Shape shape;
};

struct LayerCount {
    std::string name;
    std::size_t parameters;
};

template <typename Real>
class HlobModel {
public:
    using TensorT = nn::Tensor<Real>;
    using HeadTensors = std::array<TensorT, 3>;

    HlobModel(HlobConfig config, std::uint64_t seed);

    const HlobConfig& config() const { return config_; }
    std::vector<nn::Parameter<Real>>& parameters() { return params_; }
    const std::vector<nn::Parameter<Real>>& parameters() const { return params_; }
    nn::Parameter<Real>& parameter(std::string_view name);
    std::size_t parameter_count() const;

    /// heads[h] is N x 1 x T x width[h]. Train mode requires `rng` for dropout.
    TensorT forward(const HeadTensors& heads, nn::Mode mode, std::mt19937_64* rng = nullptr,
                    std::vector<ShapeProbe>* probes = nullptr) const;

    /// Gathers the head inputs from N x 1 x T x 40 windows through `column_maps`
    /// inside the tape, so gradients reach the raw LOB features.
    TensorT forward_windows(const TensorT& windows, const std::array<std::vector<std::size_t>, 3>& column_maps,
                            nn::Mode mode, std::mt19937_64* rng = nullptr) const;

    /// Per-layer parameter counts ("head.tetra.conv_pv", ..., "lstm", "out").
    std::vector<LayerCount> layer_table() const;
    /// Aggregated per component: conv_pv, block2 and conv3 per head, lstm, out.
    std::vector<LayerCount> component_table() const;

private:
    struct ConvRef {
        std::size_t weight;
        std::size_t bias;
        nn::Conv2dOptions options;
    };
    struct HeadLayers {
        ConvRef conv_pv;
        ConvRef conv_simplex;
        ConvRef conv_time1;
        ConvRef conv_time2;
        ConvRef conv3;
    };

    std::size_t add_parameter(std::string name, nn::Shape shape, std::size_t fan_in, std::mt19937_64& rng);
    TensorT apply_conv(const TensorT& x, const ConvRef& conv) const;

    HlobConfig config_;
    std::vector<nn::Parameter<Real>> params_;
    std::array<HeadLayers, 3> heads_{};
    std::size_t lstm_wih_ = 0, lstm_whh_ = 0, lstm_bih_ = 0, lstm_bhh_ = 0;
    std::size_t out_w_ = 0, out_b_ = 0;
};

template <typename Real>
HlobModel<Real> build_hlob(const HlobConfig& config, std::uint64_t seed) {
    return HlobModel<Real>(config, seed);
}

/// Stabilized softmax per row; throws NonFiniteLogit on NaN/inf input.
std::vector<double> predict_proba(std::span<const double> logits, std::size_t classes = 3);

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t run_digest = 0;
    std::uint64_t optimizer_step = 0;
};

template <typename Real>
struct LoadedCheckpoint {
    HlobModel<Real> model;
    CheckpointMeta meta;
};

/// Binary container, little-endian throughout:
///   "HLOBCKPT" | u32 version | u32 scalar bytes | u64 model digest | u64 seed |
///   u64 run digest | u64 optimizer step | u32 len + canonical config |
///   u32 count | per tensor: u32 len + name, u32 rank, u64 dims[rank],
///   values, first moments, second moments | u64 FNV-1a of everything before.
template <typename Real>
void save_checkpoint(const HlobModel<Real>& model, const std::filesystem::path& path, const CheckpointMeta& meta);

/// Throws IoFailure on unreadable/truncated/corrupt files and DigestMismatch
/// when the stored geometry differs from `expected`.
template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::filesystem::path& path, const HlobConfig& expected);

}  // namespace hloblab::model
