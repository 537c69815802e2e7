#include "cdm/rpn.hpp"

#include "cdm/errors.hpp"
#include "cdm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace cdm {

bool inside_unit_image(const Box& b, double tol) {
    return b.w > 0.0 && b.h > 0.0 && b.w <= 1.0 + tol && b.h <= 1.0 + tol && b.x0() >= -tol && b.y0() >= -tol &&
           b.x1() <= 1.0 + tol && b.y1() <= 1.0 + tol;
}

namespace {

// Clamps one axis given center c and side s, returning the new (center, side).
std::pair<double, double> clamp_axis(double c, double s) {
    c = std::clamp(c, 0.0, 1.0);
    s = std::clamp(s, kMinBoxSide, 1.0);
    double lo = std::max(0.0, c - 0.5 * s);
    double hi = std::min(1.0, c + 0.5 * s);
    if (hi - lo < kMinBoxSide) {
        if (lo <= 0.0) hi = kMinBoxSide;
        else lo = hi - kMinBoxSide;
    }
    return {0.5 * (lo + hi), hi - lo};
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Gaussian {
    Vec4 mean;
    Eigen::LLT<Mat4> chol;
    double log_norm;  // -0.5 (4 log 2pi + log det)
};

Gaussian prepare(const Vec4& mean, const Mat4& cov) {
    Gaussian g{mean, Eigen::LLT<Mat4>(cov), 0.0};
    if (g.chol.info() != Eigen::Success) throw DegenerateInputError("GMM covariance is not positive definite");
    const Mat4 l = g.chol.matrixL();
    double logdet = 0.0;
    for (int i = 0; i < 4; ++i) logdet += 2.0 * std::log(l(i, i));
    g.log_norm = -0.5 * (4.0 * kLog2Pi + logdet);
    return g;
}

double log_gauss(const Gaussian& g, const Vec4& x) {
    const Vec4 diff = x - g.mean;
    const Vec4 sol = g.chol.matrixL().solve(diff);
    return g.log_norm - 0.5 * sol.squaredNorm();
}

double log_sum_exp(const std::vector<double>& v) {
    double top = -std::numeric_limits<double>::infinity();
    for (double x : v) top = std::max(top, x);
    if (!std::isfinite(top)) return top;
    double s = 0.0;
    for (double x : v) s += std::exp(x - top);
    return top + std::log(s);
}

Vec4 to_vec(const Box& b) { return Vec4(b.x, b.y, b.w, b.h); }

// E-step: fills log-responsibilities and returns the total log-likelihood.
double e_step(const GmmBoxPrior& prior, const std::vector<Vec4>& pts, std::vector<std::vector<double>>& resp) {
    std::vector<Gaussian> gs;
    for (std::size_t k = 0; k < prior.components(); ++k) gs.push_back(prepare(prior.means[k], prior.covariances[k]));
    resp.assign(pts.size(), std::vector<double>(prior.components(), 0.0));
    double ll = 0.0;
    std::vector<double> terms(prior.components());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t k = 0; k < gs.size(); ++k)
            terms[k] = prior.weights[k] > 0.0 ? std::log(prior.weights[k]) + log_gauss(gs[k], pts[i])
                                              : -std::numeric_limits<double>::infinity();
        const double lse = log_sum_exp(terms);
        ll += lse;
        for (std::size_t k = 0; k < gs.size(); ++k) resp[i][k] = std::exp(terms[k] - lse);
    }
    return ll;
}

}  // namespace

Box clamp_to_image(Box b) {
    auto [x, w] = clamp_axis(b.x, b.w);
    auto [y, h] = clamp_axis(b.y, b.h);
    return {x, y, w, h};
}

Mat4 floor_covariance(const Mat4& cov) {
    const Mat4 sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Mat4> eig(sym);
    const Vec4 vals = eig.eigenvalues().cwiseMax(kCovarianceFloor);
    const Mat4 out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

GmmFit gmm_fit_em(const std::vector<Box>& boxes, std::size_t n_components, std::size_t max_iters, double tol,
                  std::uint64_t seed) {
    if (n_components < 1) throw PreconditionError("gmm_fit_em: need at least one component");
    if (boxes.size() < n_components) throw InsufficientDataError("gmm_fit_em: fewer boxes than components");
    if (max_iters < 1) throw PreconditionError("gmm_fit_em: max_iters must be >= 1");

    std::vector<Vec4> pts;
    pts.reserve(boxes.size());
    for (const auto& b : boxes) pts.push_back(to_vec(b));
    const double n = static_cast<double>(pts.size());

    GmmFit fit;
    Rng rng(seed);

    // k-means++ seeding.
    std::vector<Vec4> centers{pts[rng.below(pts.size())]};
    std::vector<double> d2(pts.size());
    while (centers.size() < n_components) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, (pts[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            fit.degenerate = true;
            pick = rng.below(pts.size());
        } else {
            double target = rng.uniform() * total;
            for (pick = 0; pick + 1 < pts.size(); ++pick) {
                target -= d2[pick];
                if (target < 0.0) break;
            }
        }
        centers.push_back(pts[pick]);
    }

    Vec4 global_mean = Vec4::Zero();
    for (const auto& p : pts) global_mean += p;
    global_mean /= n;
    Mat4 global_cov = Mat4::Zero();
    for (const auto& p : pts) global_cov += (p - global_mean) * (p - global_mean).transpose();
    global_cov /= n;
    if (global_cov.trace() <= 0.0) fit.degenerate = true;

    GmmBoxPrior& prior = fit.prior;
    prior.weights.assign(n_components, 1.0 / static_cast<double>(n_components));
    prior.means = centers;
    prior.covariances.assign(n_components, floor_covariance(global_cov));

    std::vector<std::vector<double>> resp;
    for (std::size_t it = 0; it < max_iters; ++it) {
        const double ll = e_step(prior, pts, resp);
        const bool converged = !fit.loglik_trace.empty() && ll - fit.loglik_trace.back() < tol;
        fit.loglik_trace.push_back(ll);
        if (converged || it + 1 == max_iters) break;

        for (std::size_t k = 0; k < n_components; ++k) {
            double nk = 0.0;
            Vec4 mu = Vec4::Zero();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                nk += resp[i][k];
                mu += resp[i][k] * pts[i];
            }
            prior.weights[k] = nk / n;
            if (nk < 1e-12) continue;  // starved component keeps its shape; weight ~ 0
            mu /= nk;
            Mat4 cov = Mat4::Zero();
            for (std::size_t i = 0; i < pts.size(); ++i)
                cov += resp[i][k] * (pts[i] - mu) * (pts[i] - mu).transpose();
            prior.means[k] = mu;
            prior.covariances[k] = floor_covariance(cov / nk);
        }
        double wsum = 0.0;
        for (double w : prior.weights) wsum += w;
        for (double& w : prior.weights) w /= wsum;
    }
    return fit;
}

double gmm_log_density(const GmmBoxPrior& prior, const Vec4& point) {
    std::vector<double> terms;
    for (std::size_t k = 0; k < prior.components(); ++k) {
        if (prior.weights[k] <= 0.0) continue;
        terms.push_back(std::log(prior.weights[k]) + log_gauss(prepare(prior.means[k], prior.covariances[k]), point));
    }
    return log_sum_exp(terms);
}

double gmm_density(const GmmBoxPrior& prior, const Box& box) { return std::exp(gmm_log_density(prior, to_vec(box))); }

std::vector<std::vector<double>> gmm_responsibilities(const GmmBoxPrior& prior, const std::vector<Box>& boxes) {
    std::vector<Vec4> pts;
    for (const auto& b : boxes) pts.push_back(to_vec(b));
    std::vector<std::vector<double>> resp;
    e_step(prior, pts, resp);
    return resp;
}

std::vector<Box> gmm_sample(const GmmBoxPrior& prior, std::size_t n, std::uint64_t seed) {
    std::vector<Box> out;
    if (n == 0) return out;
    if (prior.components() == 0) throw PreconditionError("gmm_sample: empty prior");
    std::vector<Mat4> chols;
    for (const auto& c : prior.covariances) {
        Eigen::LLT<Mat4> llt(c);
        if (llt.info() != Eigen::Success) throw DegenerateInputError("gmm_sample: covariance not positive definite");
        chols.push_back(llt.matrixL());
    }
    Rng rng(seed);
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        double u = rng.uniform();
        std::size_t k = 0;
        for (; k + 1 < prior.components(); ++k) {
            u -= prior.weights[k];
            if (u < 0.0) break;
        }
        Vec4 z;
        for (int i = 0; i < 4; ++i) z(i) = rng.normal();
        const Vec4 x = prior.means[k] + chols[k] * z;
        out.push_back(clamp_to_image({x(0), x(1), x(2), x(3)}));
    }
    return out;
}

std::vector<Box> mix_proposals(const std::vector<Box>& learned, const std::vector<Box>& sampled, std::size_t budget) {
    std::vector<Box> out;
    std::set<std::array<double, 4>> seen;
    auto take = [&](const std::vector<Box>& src) {
        for (const auto& b : src) {
            if (out.size() >= budget) return;
            if (seen.insert(b.as_array()).second) out.push_back(b);
        }
    };
    take(learned);
    take(sampled);
    return out;
}

}  // namespace cdm
