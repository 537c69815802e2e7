#pragma once

#include "cdm/json_io.hpp"
#include "cdm/provider.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace cdm {

/// Cumulative class model across incremental tasks.
struct TaskState {
    int task_index = 1;
    std::vector<std::string> known_classes;     // K_t, in arrival order
    std::vector<std::string> previous_known;    // K_{t-1}; empty for t = 1

    bool is_known(const std::string& cls) const;
    bool is_new(const std::string& cls) const;
};

struct DiscriminativePair {
    std::string class_a;
    std::string class_b;
    std::string attribute;
    std::string positive_class;

    bool operator==(const DiscriminativePair&) const = default;
};

enum class ConceptOrigin { LlmDerived, Residual };

struct SharedConcept {
    int id = 0;
    std::string attribute;                       // empty for residual concepts
    std::vector<std::string> possessing_classes; // in K_t order; empty for residuals
    ConceptOrigin origin = ConceptOrigin::LlmDerived;

    bool operator==(const SharedConcept&) const = default;
};

struct SharedConceptSet {
    std::vector<SharedConcept> concepts;  // ordered by id
    bool shortfall = false;               // fewer than the target llm-derived count
};

struct CatalogOptions {
    std::size_t n_min = 3;          // minimum shared attributes requested per pair
    std::size_t llm_count = 100;    // K
    std::size_t residual_count = 50;  // M
};

struct ConceptCatalog {
    TaskState task;
    std::vector<DiscriminativePair> discriminative;
    std::vector<SharedConcept> shared;
    std::size_t llm_target = 0;
    std::size_t residual_count = 0;
    bool shortfall = false;
    std::map<std::string, std::vector<int>> per_class_sets;  // C_j, recomputed from the class maps

    std::size_t llm_count() const;
    std::vector<const SharedConcept*> llm_concepts() const;
    void refresh_class_sets();
};

/// Discriminative pair set for the task. For t = 1 every unordered pair of K_t
/// is queried; for t > 1 the prior pairs are returned unchanged and only
/// new x new and new x old pairs are queried. Throws ProviderError naming the
/// failing pair.
std::vector<DiscriminativePair> build_discriminative(const TaskState& task, ConceptProvider& provider,
                                                     const std::vector<DiscriminativePair>& prior = {});

/// LLM-derived shared concepts (plus M residual placeholders) for a first task.
SharedConceptSet build_shared(const TaskState& task, ConceptProvider& provider, std::size_t n_min,
                              std::size_t llm_count, std::size_t residual_count);

/// Full first-task catalog.
ConceptCatalog build_catalog(const std::vector<std::string>& classes, ConceptProvider& provider,
                             const CatalogOptions& options);

/// Advances the task index and merges pairs/attributes for new_classes. Existing
/// pairs and concepts keep their ids and text; class maps of existing concepts
/// only grow.
ConceptCatalog extend_for_task(const ConceptCatalog& catalog, const std::vector<std::string>& new_classes,
                               ConceptProvider& provider, std::size_t n_min);

/// Ids of the llm-derived shared concepts possessed by a known class.
std::vector<int> class_concept_set(const ConceptCatalog& catalog, const std::string& class_id);

std::string case_fold(const std::string& text);

Json catalog_to_json(const ConceptCatalog& catalog);
ConceptCatalog catalog_from_json(const Json& doc);
void save_catalog(const std::string& path, const ConceptCatalog& catalog);
ConceptCatalog load_catalog(const std::string& path);

}  // namespace cdm
