#pragma once

#include "cdm/numeric.hpp"

#include <cstddef>
#include <cstdint>

namespace cdm {

/// Three affine layers with ReLU between them: d_in -> h -> h -> d.
struct ConceptHeadParams {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
    Matrix w3;
    Vector b3;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(w3.rows()); }

    static ConceptHeadParams zeros(std::size_t d_in, std::size_t h, std::size_t d);
    /// He-normal hidden layers, 1/fan_in output layer, zero biases.
    static ConceptHeadParams init(std::uint64_t seed, std::size_t d_in, std::size_t h, std::size_t d);

    template <typename F>
    void for_each_block(F&& f) {
        f("head.w1", w1); f("head.b1", b1);
        f("head.w2", w2); f("head.b2", b2);
        f("head.w3", w3); f("head.b3", b3);
    }
    template <typename F>
    void for_each_block(F&& f) const {
        f("head.w1", w1); f("head.b1", b1);
        f("head.w2", w2); f("head.b2", b2);
        f("head.w3", w3); f("head.b3", b3);
    }
};

/// Intermediate values kept for the backward pass.
struct HeadTrace {
    Vector pre1, act1, pre2, act2, z;
};

Vector concept_head_forward(const ConceptHeadParams& params, const Vector& input);
HeadTrace concept_head_trace(const ConceptHeadParams& params, const Vector& input);
/// Accumulates dL/dparams into grad given dL/dz.
void concept_head_backward(const ConceptHeadParams& params, const HeadTrace& trace, const Vector& input,
                           const Vector& grad_z, ConceptHeadParams& grad);

/// Affine bridge from embedding space (d_e) into subspace coordinates; concept
/// activations compare coords_u / coords_v against adapted embeddings.
struct Adapter {
    Matrix weight;  // out x d_e
    Vector bias;    // out

    /// Columns of the result are weight * e + bias for each embedding column e.
    Matrix apply(const Matrix& embeddings) const;
    static Adapter init(std::uint64_t seed, std::size_t d_e, std::size_t out);
};

/// Fixed frame: [q_u | q_v] has orthonormal columns. Not trainable.
struct SubspaceFrame {
    Matrix q_u;  // d x d_u
    Matrix q_v;  // d x d_v
    std::uint64_t seed = 0;

    std::size_t dim() const { return static_cast<std::size_t>(q_u.rows()); }
    std::size_t dim_u() const { return static_cast<std::size_t>(q_u.cols()); }
    std::size_t dim_v() const { return static_cast<std::size_t>(q_v.cols()); }
};

SubspaceFrame build_frame(std::uint64_t seed, std::size_t d, std::size_t d_u, std::size_t d_v);

struct Decomposition {
    Vector u;
    Vector v;
    Vector f_bg;
    Vector coords_u;
    Vector coords_v;
};

/// u = Q_U Q_U^T z, v = Q_V Q_V^T z, f_bg = z - u - v.
Decomposition decompose(const SubspaceFrame& frame, const Vector& z);

}  // namespace cdm
