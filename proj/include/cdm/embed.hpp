#pragma once

#include "cdm/numeric.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

namespace cdm {

struct ConceptEmbedding {
    std::string concept_id;
    Vector vector;  // unit norm
};

/// Deterministic stand-in for a text encoder: a Gaussian vector seeded by
/// fnv1a(text) ^ seed, normalized. Throws PreconditionError on empty text.
ConceptEmbedding synthetic_embed(const std::string& attribute_text, std::size_t d_e, std::uint64_t seed);

/// Concept id -> unit vector, all of dimension d_e. Concept ids are the concept
/// texts (attribute text, or "not <attribute>" for negative discriminative
/// concepts).
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t d_e = 0) : d_e_(d_e) {}

    std::size_t dim() const { return d_e_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(const std::string& id) const { return entries_.count(id) > 0; }

    /// Throws DimensionError for a vector of the wrong size, PreconditionError
    /// for a duplicate id.
    void add(ConceptEmbedding embedding);
    const ConceptEmbedding& lookup(const std::string& id) const;

    const std::map<std::string, ConceptEmbedding>& entries() const { return entries_; }

    bool operator==(const EmbeddingTable& other) const;

private:
    std::size_t d_e_;
    std::map<std::string, ConceptEmbedding> entries_;
};

const ConceptEmbedding& lookup(const EmbeddingTable& table, const std::string& concept_id);

void save_table(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::string& path);

}  // namespace cdm
