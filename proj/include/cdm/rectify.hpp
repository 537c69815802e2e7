#pragma once

#include "cdm/box.hpp"
#include "cdm/numeric.hpp"

#include <vector>

namespace cdm {

struct RectifyConfig {
    double eta = 0.8;
    double activation_floor = 1e-6;
};

/// Shared-concept activation -> completeness evidence in [floor, 1].
double concept_evidence(double activation, double floor = 1e-6);

/// (prod c_hat)^(eta / |C|), evaluated in log space; 1 for an empty set.
double completeness_factor(const std::vector<double>& c_hat, const RectifyConfig& config);

/// S_known^j = S_cls^j * completeness_factor(c_hat of class j). Entries of
/// c_hat_per_class are floored at config.activation_floor.
Vector rectify_known(const Vector& s_cls, const std::vector<std::vector<double>>& c_hat_per_class,
                     const RectifyConfig& config);

/// max(s_share, s_bg) * (1 - max_j s_known_j).
double unknown_score(double s_share, double s_bg, const Vector& s_known);

struct ScoredDetection {
    Box box;
    Vector s_known;     // per known class, in [0, 1]
    double s_unk = 0.0;
    // Raw evidence kept for reporting.
    Vector s_cls;
    double s_share = 0.0;
    double s_bg = 0.0;
    Vector completeness;  // per known class, (prod c_hat)^(eta / |C_j|)
};

}  // namespace cdm
