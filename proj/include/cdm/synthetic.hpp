#pragma once

#include "cdm/catalog.hpp"
#include "cdm/embed.hpp"
#include "cdm/io.hpp"
#include "cdm/provider.hpp"
#include "cdm/rpn.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cdm {

/// Open-world toy world: classes described by binary attributes, region
/// features laid out in a reference frame of the feature space.
struct SyntheticConfig {
    std::size_t n_known = 10;
    std::size_t n_unknown = 4;
    std::size_t n_attributes = 20;
    std::size_t attrs_per_class = 6;
    std::size_t novel_attributes = 2;     // attributes no known class can own
    std::size_t unknown_known_attrs = 2;  // attributes each unknown copies from its look-alike known class
    std::size_t feature_dim = 48;
    double noise = 0.03;          // per-coordinate Gaussian sigma
    double context = 0.5;         // background clutter mixed into object features
    double confusion = 0.5;       // weight of the look-alike's direction in an unknown's direction
    double attribute_weight = 2.0;  // attribute block scale relative to the discriminative block
    std::size_t bg_rank = 4;
    std::size_t min_objects = 2;
    std::size_t max_objects = 4;
    std::size_t train_images = 120;
    std::size_t eval_images = 60;
    double unknown_miss_rate = 0.3;  // chance the learned proposer skips an unknown object
    std::size_t bg_proposals = 3;
    std::size_t gmm_components = 4;
    std::size_t gmm_samples = 50;  // GMM proposals per eval image
    std::uint64_t seed = 1;
};

void validate(const SyntheticConfig& config);

struct SyntheticDataset {
    SyntheticConfig config;
    std::vector<std::string> known_classes;
    std::vector<std::string> unknown_classes;
    std::vector<std::string> attributes;
    std::vector<std::vector<int>> class_attributes;  // known rows, then unknown rows; attribute indices
    std::vector<int> look_alike;                     // per unknown class: index of the known class it imitates
    std::vector<Region> train;
    std::vector<Region> eval_regions;
    std::vector<GroundTruth> eval_gt;
    GmmBoxPrior true_box_prior;    // object boxes are drawn from this
    GmmBoxPrior fitted_box_prior;  // EM fit on training boxes, drives GMM proposals
    ResponseCache provider_records;
};

SyntheticDataset gen_synthetic(const SyntheticConfig& config, const CatalogOptions& catalog = {});

/// Canned provider answers for the world's attribute matrix, recorded by
/// running catalog construction once.
ResponseCache record_provider(const SyntheticDataset& world, const CatalogOptions& options);

/// Dataset metadata document (everything but the region files).
Json world_to_json(const SyntheticDataset& world);
void world_from_json(const Json& doc, SyntheticDataset& world);

/// Writes train.jsonl, eval_regions.jsonl, eval_gt.jsonl, provider.json and world.json into dir.
std::vector<std::string> save_dataset(const std::string& dir, const SyntheticDataset& world);
SyntheticDataset load_dataset(const std::string& dir);

/// synthetic_embed for every concept text of a catalog (positive and negative
/// discriminative texts, llm-derived shared texts).
EmbeddingTable embed_catalog(const ConceptCatalog& catalog, std::size_t d_e, std::uint64_t seed);

}  // namespace cdm
