#include "cdm/decomp.hpp"

#include "cdm/errors.hpp"
#include "cdm/rng.hpp"

#include <cmath>
#include <string>

namespace cdm {

namespace {

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = stddev * rng.normal();
    return m;
}

Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

}  // namespace

ConceptHeadParams ConceptHeadParams::zeros(std::size_t d_in, std::size_t h, std::size_t d) {
    const auto in = static_cast<Eigen::Index>(d_in);
    const auto hid = static_cast<Eigen::Index>(h);
    const auto out = static_cast<Eigen::Index>(d);
    return {Matrix::Zero(hid, in), Vector::Zero(hid), Matrix::Zero(hid, hid),
            Vector::Zero(hid),     Matrix::Zero(out, hid), Vector::Zero(out)};
}

ConceptHeadParams ConceptHeadParams::init(std::uint64_t seed, std::size_t d_in, std::size_t h, std::size_t d) {
    if (d_in == 0 || h == 0 || d == 0) throw DimensionError("concept head dimensions must be positive");
    Rng rng(seed);
    ConceptHeadParams p = zeros(d_in, h, d);
    p.w1 = gaussian(rng, h, d_in, std::sqrt(2.0 / static_cast<double>(d_in)));
    p.w2 = gaussian(rng, h, h, std::sqrt(2.0 / static_cast<double>(h)));
    p.w3 = gaussian(rng, d, h, std::sqrt(1.0 / static_cast<double>(h)));
    return p;
}

HeadTrace concept_head_trace(const ConceptHeadParams& params, const Vector& input) {
    if (static_cast<std::size_t>(input.size()) != params.input_dim())
        throw DimensionError("concept head expects input dimension " + std::to_string(params.input_dim()) +
                             ", got " + std::to_string(input.size()));
    HeadTrace t;
    t.pre1 = params.w1 * input + params.b1;
    t.act1 = relu(t.pre1);
    t.pre2 = params.w2 * t.act1 + params.b2;
    t.act2 = relu(t.pre2);
    t.z = params.w3 * t.act2 + params.b3;
    return t;
}

Vector concept_head_forward(const ConceptHeadParams& params, const Vector& input) {
    return concept_head_trace(params, input).z;
}

void concept_head_backward(const ConceptHeadParams& params, const HeadTrace& trace, const Vector& input,
                           const Vector& grad_z, ConceptHeadParams& grad) {
    grad.w3.noalias() += grad_z * trace.act2.transpose();
    grad.b3 += grad_z;
    Vector g2 = params.w3.transpose() * grad_z;
    g2 = (trace.pre2.array() > 0.0).select(g2, 0.0);
    grad.w2.noalias() += g2 * trace.act1.transpose();
    grad.b2 += g2;
    Vector g1 = params.w2.transpose() * g2;
    g1 = (trace.pre1.array() > 0.0).select(g1, 0.0);
    grad.w1.noalias() += g1 * input.transpose();
    grad.b1 += g1;
}

Matrix Adapter::apply(const Matrix& embeddings) const {
    if (embeddings.rows() != weight.cols())
        throw DimensionError("adapter expects embeddings of dimension " + std::to_string(weight.cols()) + ", got " +
                             std::to_string(embeddings.rows()));
    Matrix out = weight * embeddings;
    out.colwise() += bias;
    return out;
}

Adapter Adapter::init(std::uint64_t seed, std::size_t d_e, std::size_t out) {
    Rng rng(seed);
    return {gaussian(rng, out, d_e, std::sqrt(1.0 / static_cast<double>(d_e))),
            Vector::Zero(static_cast<Eigen::Index>(out))};
}

SubspaceFrame build_frame(std::uint64_t seed, std::size_t d, std::size_t d_u, std::size_t d_v) {
    if (d_u < 1 || d_v < 1 || d_u + d_v > d)
        throw DimensionError("build_frame: need d_u, d_v >= 1 and d_u + d_v <= d (d=" + std::to_string(d) +
                             ", d_u=" + std::to_string(d_u) + ", d_v=" + std::to_string(d_v) + ")");
    const Matrix q = orthonormal_columns(seed, d, d_u + d_v);
    SubspaceFrame f;
    f.q_u = q.leftCols(static_cast<Eigen::Index>(d_u));
    f.q_v = q.rightCols(static_cast<Eigen::Index>(d_v));
    f.seed = seed;
    return f;
}

Decomposition decompose(const SubspaceFrame& frame, const Vector& z) {
    if (static_cast<std::size_t>(z.size()) != frame.dim())
        throw DimensionError("decompose expects dimension " + std::to_string(frame.dim()) + ", got " +
                             std::to_string(z.size()));
    Decomposition out;
    out.coords_u = frame.q_u.transpose() * z;
    out.coords_v = frame.q_v.transpose() * z;
    out.u = frame.q_u * out.coords_u;
    out.v = frame.q_v * out.coords_v;
    out.f_bg = z - out.u - out.v;
    return out;
}

}  // namespace cdm
