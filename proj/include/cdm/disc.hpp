#pragma once

#include "cdm/numeric.hpp"

#include <utility>
#include <vector>

namespace cdm {

/// One cosine per discriminative concept between coords_u and the adapted
/// concept embeddings (columns of adapted). A zero coords_u yields all zeros.
Vector disc_activations(const Vector& coords_u, const Matrix& adapted);

/// Activation of the concept a region's class should own (a_pos) and of its
/// counterpart in the same pair (a_neg).
using PairActivation = std::pair<double, double>;

/// Sum of max(0, margin - (a_pos - a_neg)).
double disc_loss(const std::vector<PairActivation>& pairs, double margin);

/// d disc_loss / d(a_pos, a_neg) per pair: (-1, +1) on active hinges, (0, 0) otherwise.
std::vector<std::pair<double, double>> disc_loss_grad(const std::vector<PairActivation>& pairs, double margin);

/// Concept-bottleneck classifier: softmax(W^T a_u), W is K_u x n_classes.
Vector classify(const Matrix& weights, const Vector& a_u);

}  // namespace cdm
