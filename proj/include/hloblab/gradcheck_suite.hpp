#pragma once

// Finite-difference checks over every differentiable op and the composed
// model loss, on small random shapes.

#include <cstdint>
#include <string>
#include <vector>

namespace hloblab::nn {

enum class Precision { Float32, Float64 };

struct GradCheckEntry {
    std::string name;
    double max_relative_error = 0.0;     // max over tensors of |a - n| / max(|a|, |n|), 2-norms
    double max_elementwise_error = 0.0;  // informational
    std::size_t coordinates = 0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Analytic gradients come from the engine at `precision`. Central
/// differences (step 1e-6) are taken on the extended-precision engine at the
/// same rounded inputs, so the reference is not limited by the cancellation
/// of the precision under test. The gate is the per-tensor norm-wise
/// relative error: 1e-4 (32-bit), 1e-6 (64-bit).
std::vector<GradCheckEntry> run_gradcheck_suite(Precision precision, std::uint64_t seed = 7);

}  // namespace hloblab::nn
