#include "cdm/shared.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdm {

Vector shared_activations(const Vector& coords_v, const Matrix& known_adapted, const Matrix& residual) {
    if (known_adapted.rows() != coords_v.size() || (residual.cols() > 0 && residual.rows() != coords_v.size()))
        throw DimensionError("shared_activations: dictionary dimension does not match coords_v");
    const Eigen::Index k = known_adapted.cols();
    Vector a(k + residual.cols());
    for (Eigen::Index i = 0; i < k; ++i) a(i) = cosine_or_zero(coords_v, known_adapted.col(i));
    for (Eigen::Index r = 0; r < residual.cols(); ++r) a(k + r) = cosine_or_zero(coords_v, residual.col(r));
    return a;
}

double activation_probability(double a, double eps) { return std::clamp(0.5 * (a + 1.0), eps, 1.0 - eps); }

double shared_bce_loss(const Vector& activations, const Vector& labels) {
    if (activations.size() != labels.size()) throw DimensionError("shared_bce_loss: label count mismatch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < activations.size(); ++i) {
        const double p = activation_probability(activations(i));
        const double y = labels(i);
        total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return total;
}

Vector shared_bce_grad(const Vector& activations, const Vector& labels) {
    if (activations.size() != labels.size()) throw DimensionError("shared_bce_grad: label count mismatch");
    Vector g = Vector::Zero(activations.size());
    for (Eigen::Index i = 0; i < activations.size(); ++i) {
        const double raw = 0.5 * (activations(i) + 1.0);
        if (raw <= kBceEpsilon || raw >= 1.0 - kBceEpsilon) continue;
        const double y = labels(i);
        g(i) = 0.5 * (-y / raw + (1.0 - y) / (1.0 - raw));
    }
    return g;
}

SaeOutput sae_forward(const Matrix& encoder, const Matrix& dictionary, const Vector& coords_v, double lambda) {
    if (encoder.cols() != coords_v.size() || dictionary.rows() != coords_v.size() ||
        dictionary.cols() != encoder.rows())
        throw DimensionError("sae_forward: encoder/dictionary shapes do not chain with coords_v");
    SaeOutput out;
    out.alpha = encoder * coords_v;
    out.reconstruction = dictionary * out.alpha;
    out.rec_loss = (coords_v - out.reconstruction).squaredNorm();
    out.sparse_loss = lambda * out.alpha.lpNorm<1>();
    return out;
}

double AlignTerms::value() const { return coherence + std::abs(energy_known - energy_residual); }

AlignTerms align_terms(const Matrix& dict_known, const Matrix& dict_residual, const std::vector<Vector>& alphas) {
    AlignTerms t;
    if (dict_known.cols() > 0 && dict_residual.cols() > 0)
        t.coherence = (dict_known.transpose() * dict_residual).squaredNorm();
    if (alphas.empty()) return t;
    const Eigen::Index k = dict_known.cols();
    const Eigen::Index m = dict_residual.cols();
    for (const auto& a : alphas) {
        if (a.size() != k + m) throw DimensionError("align_loss: code length does not match dictionary");
        if (k > 0) t.energy_known += a.head(k).squaredNorm();
        if (m > 0) t.energy_residual += a.tail(m).squaredNorm();
    }
    const double b = static_cast<double>(alphas.size());
    if (k > 0) t.energy_known /= b * static_cast<double>(k);
    if (m > 0) t.energy_residual /= b * static_cast<double>(m);
    return t;
}

double align_loss(const Matrix& dict_known, const Matrix& dict_residual, const std::vector<Vector>& alphas) {
    return align_terms(dict_known, dict_residual, alphas).value();
}

double unknown_share_score(const Vector& activations) {
    if (activations.size() == 0) throw PreconditionError("unknown_share_score: empty activation vector");
    return std::clamp(activations.maxCoeff(), 0.0, 1.0);
}

}  // namespace cdm
