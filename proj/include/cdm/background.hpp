#pragma once

#include "cdm/numeric.hpp"

#include <cstddef>
#include <vector>

namespace cdm {

inline constexpr double kBgNormFloor = 1e-12;

/// Background concept subspace: PCA basis of background region features.
struct BackgroundModel {
    Vector mean;
    Matrix basis;  // d x k, orthonormal columns
    double variance_threshold = 0.95;
    double total_variance = 0.0;
    bool degenerate = false;  // zero-variance fit; basis is an arbitrary unit vector

    std::size_t components() const { return static_cast<std::size_t>(basis.cols()); }
    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

BackgroundModel fit_background(const std::vector<Vector>& bg_features, double variance_threshold = 0.95,
                               std::size_t max_k = 64);

struct BackgroundScore {
    double residual = 0.0;  // r(z) on the centered feature
    double score = 0.0;     // min(1, r / max(||z - mean||, eps))
};

BackgroundScore bg_score(const BackgroundModel& model, const Vector& z);

}  // namespace cdm
