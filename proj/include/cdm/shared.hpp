#pragma once

#include "cdm/numeric.hpp"

#include <cstddef>
#include <vector>

namespace cdm {

inline constexpr double kBceEpsilon = 1e-6;

/// K + M cosines of coords_v against the adapted llm-derived embeddings
/// (columns of known_adapted) followed by the residual dictionary columns.
/// A zero coords_v yields all zeros.
Vector shared_activations(const Vector& coords_v, const Matrix& known_adapted, const Matrix& residual);

/// Cosine activation -> probability: clamp((a + 1) / 2, eps, 1 - eps).
double activation_probability(double a, double eps = kBceEpsilon);

/// Binary cross-entropy over llm-derived activations with 0/1 labels.
double shared_bce_loss(const Vector& activations, const Vector& labels);
/// d shared_bce_loss / d activations (zero where the probability is clamped).
Vector shared_bce_grad(const Vector& activations, const Vector& labels);

struct SaeOutput {
    Vector alpha;           // m codes, alpha = W_e coords_v
    Vector reconstruction;  // D alpha
    double rec_loss = 0.0;     // ||coords_v - D alpha||^2
    double sparse_loss = 0.0;  // lambda * sum |alpha|
};

SaeOutput sae_forward(const Matrix& encoder, const Matrix& dictionary, const Vector& coords_v, double lambda);

struct AlignTerms {
    double coherence = 0.0;        // ||D_k^T D_r||_F^2
    double energy_known = 0.0;     // mean alpha_i^2 over batch and known group
    double energy_residual = 0.0;  // mean alpha_i^2 over batch and residual group
    double value() const;
};

/// Coherence between dictionary blocks plus the gap between group activation
/// energies. alphas hold full m-length codes with the known group first.
AlignTerms align_terms(const Matrix& dict_known, const Matrix& dict_residual, const std::vector<Vector>& alphas);
double align_loss(const Matrix& dict_known, const Matrix& dict_residual, const std::vector<Vector>& alphas);

/// max_i a_i clamped to [0, 1]. Throws PreconditionError on an empty vector.
double unknown_share_score(const Vector& activations);

}  // namespace cdm
