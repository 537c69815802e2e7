#include "cdm/disc.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <string>

namespace cdm {

Vector disc_activations(const Vector& coords_u, const Matrix& adapted) {
    if (adapted.rows() != coords_u.size())
        throw DimensionError("disc_activations: adapted embeddings have dimension " + std::to_string(adapted.rows()) +
                             ", coords_u has " + std::to_string(coords_u.size()));
    Vector a(adapted.cols());
    for (Eigen::Index i = 0; i < adapted.cols(); ++i) a(i) = cosine_or_zero(coords_u, adapted.col(i));
    return a;
}

double disc_loss(const std::vector<PairActivation>& pairs, double margin) {
    if (!(margin > 0.0)) throw PreconditionError("disc_loss: margin must be positive");
    double total = 0.0;
    for (const auto& [pos, neg] : pairs) total += std::max(0.0, margin - (pos - neg));
    return total;
}

std::vector<std::pair<double, double>> disc_loss_grad(const std::vector<PairActivation>& pairs, double margin) {
    std::vector<std::pair<double, double>> out;
    out.reserve(pairs.size());
    for (const auto& [pos, neg] : pairs) {
        if (margin - (pos - neg) > 0.0) out.emplace_back(-1.0, 1.0);
        else out.emplace_back(0.0, 0.0);
    }
    return out;
}

Vector classify(const Matrix& weights, const Vector& a_u) {
    if (weights.rows() != a_u.size())
        throw DimensionError("classify: W has " + std::to_string(weights.rows()) + " rows but a_u has " +
                             std::to_string(a_u.size()) + " entries");
    return softmax(weights.transpose() * a_u);
}

}  // namespace cdm
