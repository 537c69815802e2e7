#include "cdm/numeric.hpp"

#include "cdm/errors.hpp"
#include "cdm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdm {

Matrix orthonormal_columns(std::uint64_t seed, std::size_t d, std::size_t n_cols) {
    if (n_cols < 1 || n_cols > d) {
        throw DimensionError("orthonormal_columns: need 1 <= n_cols <= d, got n_cols=" +
                             std::to_string(n_cols) + " d=" + std::to_string(d));
    }
    Rng rng(seed);
    Matrix fill(d, n_cols);
    for (Eigen::Index c = 0; c < fill.cols(); ++c)
        for (Eigen::Index r = 0; r < fill.rows(); ++r) fill(r, c) = rng.normal();

    Eigen::HouseholderQR<Matrix> qr(fill);
    Matrix q = qr.householderQ() * Matrix::Identity(d, n_cols);
    const Matrix& r = qr.matrixQR();
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
        if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    }
    return q;
}

double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("cosine: size mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine: zero-norm input");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_or_zero(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("cosine: size mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

void cosine_backward(const Vector& a, const Vector& b, double upstream,
                     Vector& grad_a, Vector& grad_b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0 || upstream == 0.0) return;
    const double inv = 1.0 / (na * nb);
    const double c = a.dot(b) * inv;
    grad_a.noalias() += upstream * (b * inv - (c / (na * na)) * a);
    grad_b.noalias() += upstream * (a * inv - (c / (nb * nb)) * b);
}

Vector softmax(const Vector& logits) {
    if (!all_finite(logits)) throw DegenerateInputError("softmax: non-finite input");
    if (logits.size() == 0) return logits;
    const double top = logits.maxCoeff();
    Vector p = (logits.array() - top).exp();
    return p / p.sum();
}

PcaResult pca_fit(const std::vector<Vector>& samples, double variance_threshold,
                  std::size_t max_components) {
    if (samples.size() < 2) throw InsufficientDataError("pca_fit: need at least 2 samples");
    if (!(variance_threshold > 0.0 && variance_threshold <= 1.0))
        throw PreconditionError("pca_fit: variance_threshold must lie in (0, 1]");
    if (max_components < 1) throw PreconditionError("pca_fit: max_components must be >= 1");
    const Eigen::Index d = samples.front().size();
    for (const auto& s : samples)
        if (s.size() != d) throw DimensionError("pca_fit: samples differ in dimension");

    PcaResult out;
    out.mean = Vector::Zero(d);
    for (const auto& s : samples) out.mean += s;
    out.mean /= static_cast<double>(samples.size());

    Matrix cov = Matrix::Zero(d, d);
    for (const auto& s : samples) {
        const Vector c = s - out.mean;
        cov.selfadjointView<Eigen::Lower>().rankUpdate(c);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(samples.size() - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    // Eigen sorts ascending; flip to decreasing.
    const Vector evals_asc = eig.eigenvalues();
    const Matrix evecs_asc = eig.eigenvectors();
    out.eigenvalues = evals_asc.reverse().cwiseMax(0.0);
    Matrix evecs = evecs_asc.rowwise().reverse();
    // Sign convention: largest-magnitude entry of each eigenvector is positive.
    for (Eigen::Index c = 0; c < evecs.cols(); ++c) {
        Eigen::Index arg = 0;
        evecs.col(c).cwiseAbs().maxCoeff(&arg);
        if (evecs(arg, c) < 0.0) evecs.col(c) = -evecs.col(c);
    }

    out.total_variance = out.eigenvalues.sum();
    const std::size_t cap = std::min<std::size_t>(max_components, static_cast<std::size_t>(d));
    std::size_t keep = 1;
    if (out.total_variance > 0.0) {
        double acc = 0.0;
        keep = static_cast<std::size_t>(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            acc += out.eigenvalues(i);
            if (acc >= variance_threshold * out.total_variance) {
                keep = static_cast<std::size_t>(i + 1);
                break;
            }
        }
    }
    keep = std::min(keep, cap);
    out.basis = evecs.leftCols(static_cast<Eigen::Index>(keep));
    return out;
}

std::vector<Vector> etf_targets(std::size_t k, std::size_t d) {
    if (k < 2) throw PreconditionError("etf_targets: need K >= 2");
    if (d + 1 < k) throw DimensionError("etf_targets: need d >= K - 1");
    const double scale = std::sqrt(static_cast<double>(k) / static_cast<double>(k - 1));
    std::vector<Vector> out;
    out.reserve(k);
    for (std::size_t cls = 0; cls < k; ++cls) {
        // Coordinates of sqrt(K/(K-1)) (e_cls - 1/K) in the Helmert basis of 1-perp.
        Vector t = Vector::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t j = 1; j < k; ++j) {
            const double jj = static_cast<double>(j);
            const double norm = std::sqrt(jj * (jj + 1.0));
            double entry = 0.0;
            if (cls < j) entry = 1.0 / norm;
            else if (cls == j) entry = -jj / norm;
            t(static_cast<Eigen::Index>(j - 1)) = scale * entry;
        }
        out.push_back(t / t.norm());
    }
    return out;
}

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace cdm
