#pragma once

#include "cdm/box.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cdm {

inline constexpr double kCovarianceFloor = 1e-6;

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

/// Mixture of Gaussians over (x, y, w, h).
struct GmmBoxPrior {
    std::vector<double> weights;
    std::vector<Vec4> means;
    std::vector<Mat4> covariances;

    std::size_t components() const { return weights.size(); }
};

struct GmmFit {
    GmmBoxPrior prior;
    std::vector<double> loglik_trace;  // one entry per E-step, fitted params give the last
    bool degenerate = false;
};

/// EM with full covariances from k-means++ seeding. Stops when the
/// log-likelihood gain falls below tol or after max_iters E-steps.
/// Covariance eigenvalues are floored at kCovarianceFloor.
GmmFit gmm_fit_em(const std::vector<Box>& boxes, std::size_t n_components, std::size_t max_iters, double tol,
                  std::uint64_t seed = 0);

double gmm_log_density(const GmmBoxPrior& prior, const Vec4& point);
double gmm_density(const GmmBoxPrior& prior, const Box& box);

/// Per-sample responsibilities of the current prior (rows sum to 1).
std::vector<std::vector<double>> gmm_responsibilities(const GmmBoxPrior& prior, const std::vector<Box>& boxes);

/// Draws n boxes: component by weight, Cholesky Gaussian draw, then clamp_to_image.
std::vector<Box> gmm_sample(const GmmBoxPrior& prior, std::size_t n, std::uint64_t seed);

/// Learned proposals first, then sampled; exact duplicates dropped; truncated to budget.
std::vector<Box> mix_proposals(const std::vector<Box>& learned, const std::vector<Box>& sampled, std::size_t budget);

/// Symmetrizes and floors eigenvalues at kCovarianceFloor.
Mat4 floor_covariance(const Mat4& cov);

}  // namespace cdm
