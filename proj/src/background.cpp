#include "cdm/background.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <string>

namespace cdm {

BackgroundModel fit_background(const std::vector<Vector>& bg_features, double variance_threshold,
                               std::size_t max_k) {
    PcaResult pca = pca_fit(bg_features, variance_threshold, max_k);
    BackgroundModel m;
    m.mean = std::move(pca.mean);
    m.variance_threshold = variance_threshold;
    m.total_variance = pca.total_variance;
    if (pca.total_variance == 0.0) {
        m.degenerate = true;
        m.basis = Matrix::Zero(m.mean.size(), 1);
        m.basis(0, 0) = 1.0;
    } else {
        m.basis = std::move(pca.basis);
    }
    return m;
}

BackgroundScore bg_score(const BackgroundModel& model, const Vector& z) {
    if (z.size() != model.mean.size())
        throw DimensionError("bg_score expects dimension " + std::to_string(model.mean.size()) + ", got " +
                             std::to_string(z.size()));
    const Vector centered = z - model.mean;
    const Vector recon = model.basis * (model.basis.transpose() * centered);
    BackgroundScore s;
    s.residual = (centered - recon).norm();
    s.score = std::min(1.0, s.residual / std::max(centered.norm(), kBgNormFloor));
    return s;
}

}  // namespace cdm
