#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cdm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// d x n_cols matrix with orthonormal columns, from a seeded Gaussian fill
/// followed by Householder QR. Column signs follow diag(R) > 0, so the result
/// is a pure function of (seed, d, n_cols).
Matrix orthonormal_columns(std::uint64_t seed, std::size_t d, std::size_t n_cols);

/// Cosine similarity clamped to [-1, 1]. Throws DegenerateInputError when
/// either argument has zero norm.
double cosine(const Vector& a, const Vector& b);

/// Same as cosine() but returns 0 for a zero-norm argument.
double cosine_or_zero(const Vector& a, const Vector& b);

/// Accumulates upstream * d cos(a, b) / da into grad_a and d/db into grad_b.
/// No-op when either norm is zero (the activation is pinned to 0 there).
void cosine_backward(const Vector& a, const Vector& b, double upstream,
                     Vector& grad_a, Vector& grad_b);

Vector softmax(const Vector& logits);

struct PcaResult {
    Vector mean;
    Matrix basis;         // d x k, orthonormal columns, decreasing eigenvalue
    Vector eigenvalues;   // all d eigenvalues of the covariance, decreasing
    double total_variance = 0.0;
};

/// PCA on mean-centered samples. Keeps the shortest prefix of components whose
/// eigenvalues reach variance_threshold of the total, capped at max_components.
/// Zero total variance keeps one (arbitrary, leading) component.
PcaResult pca_fit(const std::vector<Vector>& samples, double variance_threshold,
                  std::size_t max_components);

/// K unit vectors in R^d with pairwise inner product -1/(K-1): the centered
/// simplex expressed in a Helmert basis, padded with zeros to d coordinates.
std::vector<Vector> etf_targets(std::size_t k, std::size_t d);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace cdm
