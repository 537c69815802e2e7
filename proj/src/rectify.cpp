#include "cdm/rectify.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cdm {

double concept_evidence(double activation, double floor) {
    return std::clamp(0.5 * (activation + 1.0), floor, 1.0);
}

double completeness_factor(const std::vector<double>& c_hat, const RectifyConfig& config) {
    if (c_hat.empty()) return 1.0;
    double log_sum = 0.0;
    for (double c : c_hat) log_sum += std::log(std::clamp(c, config.activation_floor, 1.0));
    return std::exp(config.eta / static_cast<double>(c_hat.size()) * log_sum);
}

Vector rectify_known(const Vector& s_cls, const std::vector<std::vector<double>>& c_hat_per_class,
                     const RectifyConfig& config) {
    if (config.eta < 0.0) throw PreconditionError("rectify_known: eta must be >= 0");
    if (static_cast<std::size_t>(s_cls.size()) != c_hat_per_class.size())
        throw DimensionError("rectify_known: one concept list per class required");
    Vector out(s_cls.size());
    for (Eigen::Index j = 0; j < s_cls.size(); ++j)
        out(j) = s_cls(j) * completeness_factor(c_hat_per_class[static_cast<std::size_t>(j)], config);
    return out;
}

double unknown_score(double s_share, double s_bg, const Vector& s_known) {
    const double top_known = s_known.size() > 0 ? s_known.maxCoeff() : 0.0;
    return std::clamp(std::max(s_share, s_bg) * (1.0 - top_known), 0.0, 1.0);
}

}  // namespace cdm
