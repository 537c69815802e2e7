#include "doctest.h"
#include "oracles.hpp"

#include "cdm/errors.hpp"
#include "cdm/numeric.hpp"
#include "cdm/rng.hpp"

#include <cmath>

using namespace cdm;

namespace {

double gram_error(const Matrix& q) {
    return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("orthonormal_columns") {
    const Matrix q = orthonormal_columns(7, 3, 3);
    CHECK(gram_error(q) <= 1e-9);
    CHECK(orthonormal_columns(7, 3, 3) == q);

    const Matrix r = orthonormal_columns(7, 4, 2);
    CHECK(r.rows() == 4);
    CHECK(r.cols() == 2);
    double worst = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) worst = std::max(worst, std::abs(r.col(i).dot(r.col(j)) - (i == j ? 1.0 : 0.0)));
    CHECK(worst <= 1e-9);

    CHECK_THROWS_AS(orthonormal_columns(1, 3, 4), DimensionError);
    CHECK_THROWS_AS(orthonormal_columns(1, 3, 0), DimensionError);
    CHECK(orthonormal_columns(1, 5, 3) != orthonormal_columns(2, 5, 3));
}

TEST_CASE("orthonormal_columns gram stays tight across sizes") {
    for (std::size_t d : {1u, 2u, 17u, 64u, 200u, 512u}) {
        for (std::size_t n : {std::size_t{1}, d / 2 + 1, d}) {
            CAPTURE(d);
            CAPTURE(n);
            CHECK(gram_error(orthonormal_columns(d * 31 + n, d, n)) <= 1e-9);
        }
    }
}

TEST_CASE("cosine") {
    CHECK(cosine(Vector::Unit(2, 0), Vector::Unit(2, 0)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine(Vector::Unit(2, 0), Vector::Unit(2, 1)) == 0.0);
    CHECK(cosine(Vector::Ones(2), Vector::Unit(2, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cosine(Vector::Zero(2), Vector::Ones(2)), DegenerateInputError);
    CHECK_THROWS_AS(cosine(Vector::Ones(2), Vector::Ones(3)), DimensionError);
    CHECK(cosine_or_zero(Vector::Zero(2), Vector::Ones(2)) == 0.0);

    Vector a(3), b(3);
    a << 1e8, 1e8, 1e8;
    b << 3, 3, 3;
    CHECK(cosine(a, b) <= 1.0);
    CHECK(cosine(a, -b) >= -1.0);
}

TEST_CASE("cosine_backward matches central differences") {
    Rng rng(3);
    Vector a(5), b(5);
    for (int i = 0; i < 5; ++i) {
        a(i) = rng.normal();
        b(i) = rng.normal();
    }
    Vector ga = Vector::Zero(5), gb = Vector::Ones(5);
    cosine_backward(a, b, 1.7, ga, gb);
    gb.array() -= 1.0;
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
        Vector ap = a, am = a;
        ap(i) += h;
        am(i) -= h;
        CHECK(ga(i) == doctest::Approx(1.7 * (cosine(ap, b) - cosine(am, b)) / (2 * h)).epsilon(1e-6));
        Vector bp = b, bm = b;
        bp(i) += h;
        bm(i) -= h;
        CHECK(gb(i) == doctest::Approx(1.7 * (cosine(a, bp) - cosine(a, bm)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("softmax") {
    const Vector half = softmax(Vector::Zero(2));
    CHECK(half(0) == 0.5);
    CHECK(half(1) == 0.5);

    Vector v(2);
    v << std::log(2.0), 0.0;
    const Vector p = softmax(v);
    CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(p(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    v << 1000.0, 0.0;
    const Vector big = softmax(v);
    CHECK(all_finite(big));
    CHECK(big(0) == doctest::Approx(1.0));
    CHECK(big(1) < 1e-300);

    v << std::nan(""), 0.0;
    CHECK_THROWS_AS(softmax(v), DegenerateInputError);
}

TEST_CASE("softmax shift invariance and normalization") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Vector v(6);
        for (int i = 0; i < 6; ++i) v(i) = 10.0 * rng.normal();
        const double shift = rng.uniform(-50.0, 50.0);
        const Vector p = softmax(v);
        const Vector q = softmax(v.array() + shift);
        CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
        CHECK(p.minCoeff() >= 0.0);
    }
}

TEST_CASE("pca_fit on rank-1 data") {
    std::vector<Vector> xs;
    for (double s : {1.0, 2.0, -3.0, 0.5}) xs.push_back(s * Vector::Unit(3, 0));
    const PcaResult r = pca_fit(xs, 0.99, 3);
    REQUIRE(r.basis.cols() == 1);
    CHECK(std::abs(std::abs(r.basis(0, 0)) - 1.0) <= 1e-12);
    CHECK(std::abs(r.basis(1, 0)) <= 1e-12);
}

TEST_CASE("pca_fit on isotropic 2-D data keeps both axes") {
    Rng rng(5);
    std::vector<Vector> xs;
    for (int i = 0; i < 500; ++i) xs.push_back(Vector::Map(std::vector<double>{rng.normal(), rng.normal()}.data(), 2));
    const PcaResult r = pca_fit(xs, 1.0, 2);
    CHECK(r.basis.cols() == 2);
    CHECK(gram_error(r.basis) <= 1e-9);
}

TEST_CASE("pca_fit on a plane in 5-D agrees with Jacobi eigenvalues") {
    Rng rng(9);
    const Matrix plane = orthonormal_columns(21, 5, 2);
    Vector offset(5);
    offset << 1, -2, 0.5, 3, 0;
    std::vector<Vector> xs;
    for (int i = 0; i < 100; ++i) xs.push_back(offset + plane * Vector::Map(std::vector<double>{3 * rng.normal(), rng.normal()}.data(), 2));
    const PcaResult r = pca_fit(xs, 0.999, 5);
    CHECK(r.basis.cols() == 2);

    const oracle::Eig e = oracle::jacobi(oracle::covariance(xs));
    REQUIRE(r.eigenvalues.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(r.eigenvalues(i) == doctest::Approx(e.values(i)).epsilon(1e-9).scale(1.0));
    CHECK(r.total_variance == doctest::Approx(e.values.sum()).epsilon(1e-12));
    // leading eigenvectors agree up to sign
    for (int i = 0; i < 2; ++i) CHECK(std::abs(std::abs(r.basis.col(i).dot(e.vectors.col(i))) - 1.0) <= 1e-8);
    CHECK(r.eigenvalues(1) - r.eigenvalues(2) > 0.5);
}

TEST_CASE("pca_fit projection is idempotent") {
    Rng rng(13);
    std::vector<Vector> xs;
    for (int i = 0; i < 60; ++i) {
        Vector x(8);
        for (int j = 0; j < 8; ++j) x(j) = rng.normal() * (j + 1);
        xs.push_back(x);
    }
    const PcaResult r = pca_fit(xs, 0.8, 8);
    const Matrix p = r.basis * r.basis.transpose();
    for (const auto& x : xs) {
        const Vector once = p * (x - r.mean);
        CHECK((p * once - once).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("pca_fit preconditions") {
    CHECK_THROWS_AS(pca_fit({Vector::Ones(3)}, 0.9, 2), InsufficientDataError);
    CHECK_THROWS_AS(pca_fit({Vector::Ones(3), Vector::Zero(3)}, 0.0, 2), PreconditionError);
    CHECK_THROWS_AS(pca_fit({Vector::Ones(3), Vector::Zero(2)}, 0.5, 2), DimensionError);
    const PcaResult capped = pca_fit({Vector::Unit(3, 0), Vector::Unit(3, 1), Vector::Unit(3, 2), Vector::Zero(3)}, 1.0, 1);
    CHECK(capped.basis.cols() == 1);
}

TEST_CASE("etf_targets") {
    const auto two = etf_targets(2, 1);
    REQUIRE(two.size() == 2);
    CHECK(two[0].dot(two[1]) == doctest::Approx(-1.0).epsilon(1e-12));

    for (auto [k, d] : {std::pair<std::size_t, std::size_t>{4, 3}, {10, 64}, {3, 2}, {7, 20}}) {
        const auto t = etf_targets(k, d);
        REQUIRE(t.size() == k);
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(t[i].size() == static_cast<Eigen::Index>(d));
            CHECK(std::abs(t[i].norm() - 1.0) <= 1e-9);
            for (std::size_t j = i + 1; j < k; ++j, ++pairs)
                CHECK(std::abs(t[i].dot(t[j]) + 1.0 / static_cast<double>(k - 1)) <= 1e-9);
        }
        CHECK(pairs == k * (k - 1) / 2);
    }
    CHECK_THROWS_AS(etf_targets(5, 3), DimensionError);
    CHECK_THROWS_AS(etf_targets(1, 3), PreconditionError);
}
