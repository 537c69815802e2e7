#pragma once

#include "cdm/background.hpp"
#include "cdm/catalog.hpp"
#include "cdm/decomp.hpp"
#include "cdm/embed.hpp"
#include "cdm/json_io.hpp"
#include "cdm/numeric.hpp"
#include "cdm/rectify.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdm {

/// Catalog facts the model needs, flattened to indices.
struct ConceptLayout {
    struct Pair {
        int class_a = 0;
        int class_b = 0;
        int positive = 0;  // class index owning the attribute
        bool operator==(const Pair&) const = default;
    };

    std::vector<std::string> classes;         // known classes, catalog order
    std::vector<Pair> pairs;                  // discriminative pair p -> concepts 2p (has), 2p+1 (lacks)
    std::vector<std::string> disc_texts;      // K_u = 2 * pairs
    std::vector<std::string> shared_texts;    // K llm-derived attribute texts, id order
    std::vector<int> shared_ids;              // catalog ids of those concepts
    std::vector<std::vector<int>> class_concepts;  // class -> indices into shared_texts (C_j)
    std::size_t residual_count = 0;           // M

    std::size_t n_classes() const { return classes.size(); }
    std::size_t n_disc() const { return disc_texts.size(); }
    std::size_t n_llm() const { return shared_texts.size(); }

    int class_index(const std::string& cls) const;  // -1 if not a known class
    /// 0/1 presence of each llm-derived concept for a class (the BCE labels).
    Vector concept_labels(int cls) const;

    bool operator==(const ConceptLayout&) const = default;
};

/// Text of the negative concept of a discriminative pair.
std::string negative_concept_text(const std::string& attribute);

ConceptLayout layout_from_catalog(const ConceptCatalog& catalog);

/// Everything the optimizer updates. Blocks are visited in a fixed order that
/// defines the flat parameter index used by finite-difference sweeps.
struct ModelParams {
    ConceptHeadParams head;
    Adapter disc_adapter;     // d_e -> d_u
    Matrix classifier;        // K_u x n_classes
    Adapter shared_adapter;   // d_e -> d_v
    Matrix encoder;           // (K + M) x d_v
    Matrix dict_residual;     // d_v x M

    template <typename F>
    void for_each_block(F&& f) {
        head.for_each_block(f);
        f("disc.adapter.weight", disc_adapter.weight);
        f("disc.adapter.bias", disc_adapter.bias);
        f("disc.classifier", classifier);
        f("shared.adapter.weight", shared_adapter.weight);
        f("shared.adapter.bias", shared_adapter.bias);
        f("shared.encoder", encoder);
        f("shared.dict_residual", dict_residual);
    }
    template <typename F>
    void for_each_block(F&& f) const {
        head.for_each_block(f);
        f("disc.adapter.weight", disc_adapter.weight);
        f("disc.adapter.bias", disc_adapter.bias);
        f("disc.classifier", classifier);
        f("shared.adapter.weight", shared_adapter.weight);
        f("shared.adapter.bias", shared_adapter.bias);
        f("shared.encoder", encoder);
        f("shared.dict_residual", dict_residual);
    }

    std::size_t size() const;
    double& at(std::size_t flat_index);
    double at(std::size_t flat_index) const;
    std::vector<double> flatten() const;
    void assign(const std::vector<double>& flat);
    /// Block name owning a flat index.
    std::string block_of(std::size_t flat_index) const;
    ModelParams zeros_like() const;
    /// this += scale * other
    void add_scaled(const ModelParams& other, double scale);
    bool all_finite() const;
};

struct ModelConfig {
    std::size_t d = 256;
    std::size_t d_u = 96;
    std::size_t d_v = 96;
    std::size_t hidden = 256;
    std::uint64_t frame_seed = 17;
    double margin = 0.5;    // delta
    double lambda = 0.01;   // L1 weight on SAE codes
    double eta = 0.8;
    double bg_variance_threshold = 0.95;
    std::size_t bg_max_k = 64;
};

struct Model {
    ModelConfig config;
    std::uint64_t init_seed = 0;
    ConceptLayout layout;
    ModelParams params;
    SubspaceFrame frame;
    Matrix disc_embeddings;    // d_e x K_u
    Matrix shared_embeddings;  // d_e x K
    Matrix dict_known;         // d_v x K, frozen copy of shared_adapter(shared_embeddings)
    BackgroundModel background;

    std::size_t input_dim() const { return params.head.input_dim(); }
    std::size_t embed_dim() const { return static_cast<std::size_t>(disc_embeddings.rows()); }
    /// Copies the adapter images of the llm-derived embeddings into dict_known.
    void refresh_dict_known();
};

/// shared_adapter applied to the llm-derived embeddings (d_v x K).
Matrix shared_adapter_images(const Model& model);

/// Fresh model for a catalog. Embeddings for every concept text must be in the table.
Model init_model(const ConceptCatalog& catalog, const EmbeddingTable& embeddings, std::size_t d_in,
                 const ModelConfig& config, std::uint64_t seed);

/// Adapted concept vectors computed once per parameter state.
struct AdaptedConcepts {
    Matrix disc;    // d_u x K_u
    Matrix shared;  // d_v x K
};
AdaptedConcepts adapt_concepts(const Model& model);

/// Per-region forward values used by scoring and diagnostics.
struct RegionForward {
    Vector z;
    Decomposition parts;
    Vector disc_activations;
    Vector s_cls;
    Vector shared_activations;  // K + M
    double s_share = 0.0;
    double s_bg = 0.0;
    double bg_residual = 0.0;
};

RegionForward forward_region(const Model& model, const AdaptedConcepts& adapted, const Vector& feature);
/// Same chain starting from a decomposition instead of a feature.
RegionForward forward_parts(const Model& model, const AdaptedConcepts& adapted, const Decomposition& parts);

Json model_to_json(const Model& model);
Model model_from_json(const Json& doc);
void save_checkpoint(const std::string& path, const Model& model, const Json& extra = Json::object());
Model load_checkpoint(const std::string& path);

}  // namespace cdm
