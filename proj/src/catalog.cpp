#include "cdm/catalog.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>

namespace cdm {

bool TaskState::is_known(const std::string& cls) const {
    return std::find(known_classes.begin(), known_classes.end(), cls) != known_classes.end();
}

bool TaskState::is_new(const std::string& cls) const {
    return is_known(cls) &&
           std::find(previous_known.begin(), previous_known.end(), cls) == previous_known.end();
}

std::size_t ConceptCatalog::llm_count() const {
    return static_cast<std::size_t>(std::count_if(shared.begin(), shared.end(), [](const auto& c) {
        return c.origin == ConceptOrigin::LlmDerived;
    }));
}

std::vector<const SharedConcept*> ConceptCatalog::llm_concepts() const {
    std::vector<const SharedConcept*> out;
    for (const auto& c : shared)
        if (c.origin == ConceptOrigin::LlmDerived) out.push_back(&c);
    return out;
}

void ConceptCatalog::refresh_class_sets() {
    per_class_sets.clear();
    for (const auto& cls : task.known_classes) per_class_sets[cls];
    for (const auto& c : shared) {
        if (c.origin != ConceptOrigin::LlmDerived) continue;
        for (const auto& cls : c.possessing_classes) per_class_sets[cls].push_back(c.id);
    }
}

std::string case_fold(const std::string& text) {
    std::string out = text;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

namespace {

void require_unique(const std::vector<std::string>& classes) {
    std::set<std::string> seen;
    for (const auto& c : classes) {
        if (c.empty()) throw PreconditionError("class identifiers must be nonempty");
        if (!seen.insert(c).second) throw PreconditionError("duplicate class identifier '" + c + "'");
    }
}

// Unordered pairs of K_t in arrival order. With skip_old, pairs whose members
// are both previously known are omitted.
std::vector<std::pair<std::string, std::string>> class_pairs(const TaskState& task, bool skip_old) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto& k = task.known_classes;
    for (std::size_t i = 0; i < k.size(); ++i) {
        for (std::size_t j = i + 1; j < k.size(); ++j) {
            if (skip_old && !task.is_new(k[i]) && !task.is_new(k[j])) continue;
            out.emplace_back(k[i], k[j]);
        }
    }
    return out;
}

// Intersects a provider answer with K_t, keeping K_t order.
std::vector<std::string> intersect_known(const TaskState& task, const std::vector<std::string>& answer) {
    std::set<std::string> wanted(answer.begin(), answer.end());
    std::vector<std::string> out;
    for (const auto& cls : task.known_classes)
        if (wanted.count(cls)) out.push_back(cls);
    return out;
}

std::vector<std::string> union_known(const TaskState& task, const std::vector<std::string>& a,
                                     const std::vector<std::string>& b) {
    std::vector<std::string> both = a;
    both.insert(both.end(), b.begin(), b.end());
    return intersect_known(task, both);
}

// Alg. 2 over K_t merged into an existing concept list. New attributes are
// admitted in (coverage desc, text asc) order while the llm-derived count is
// below the target.
SharedConceptSet merge_shared(const TaskState& task, ConceptProvider& provider, std::size_t n_min,
                              std::size_t llm_target, std::vector<SharedConcept> existing) {
    std::unordered_map<std::string, std::size_t> existing_by_text;
    for (std::size_t i = 0; i < existing.size(); ++i)
        if (existing[i].origin == ConceptOrigin::LlmDerived)
            existing_by_text[case_fold(existing[i].attribute)] = i;

    std::vector<std::string> generated;
    std::set<std::string> seen;
    for (const auto& [a, b] : class_pairs(task, false)) {
        std::vector<std::string> attrs;
        try {
            attrs = provider.shared(a, b, n_min);
        } catch (const Error& e) {
            throw ProviderError("shared query failed for pair (" + a + ", " + b + "): " + e.what());
        }
        for (const auto& attr : attrs) {
            if (attr.empty()) continue;
            if (seen.insert(case_fold(attr)).second) generated.push_back(attr);
        }
    }

    struct Candidate {
        std::string attribute;
        std::vector<std::string> classes;
    };
    std::vector<Candidate> fresh;
    for (const auto& attr : generated) {
        std::vector<std::string> answer;
        try {
            answer = provider.invert(attr, task.known_classes);
        } catch (const Error& e) {
            throw ProviderError("inversion failed for attribute '" + attr + "': " + e.what());
        }
        auto classes = intersect_known(task, answer);
        auto hit = existing_by_text.find(case_fold(attr));
        if (hit != existing_by_text.end()) {
            auto& known_concept = existing[hit->second];
            known_concept.possessing_classes = union_known(task, known_concept.possessing_classes, classes);
        } else {
            fresh.push_back({attr, std::move(classes)});
        }
    }

    std::stable_sort(fresh.begin(), fresh.end(), [](const Candidate& x, const Candidate& y) {
        if (x.classes.size() != y.classes.size()) return x.classes.size() > y.classes.size();
        return x.attribute < y.attribute;
    });

    std::size_t llm = static_cast<std::size_t>(std::count_if(
        existing.begin(), existing.end(), [](const auto& c) { return c.origin == ConceptOrigin::LlmDerived; }));
    int next_id = 0;
    for (const auto& c : existing) next_id = std::max(next_id, c.id + 1);

    SharedConceptSet out;
    out.concepts = std::move(existing);
    for (auto& cand : fresh) {
        if (llm >= llm_target) break;
        out.concepts.push_back({next_id++, cand.attribute, std::move(cand.classes), ConceptOrigin::LlmDerived});
        ++llm;
    }
    out.shortfall = llm < llm_target;
    return out;
}

}  // namespace

std::vector<DiscriminativePair> build_discriminative(const TaskState& task, ConceptProvider& provider,
                                                     const std::vector<DiscriminativePair>& prior) {
    if (task.known_classes.size() < 2) throw PreconditionError("build_discriminative: need at least 2 known classes");
    require_unique(task.known_classes);
    const bool incremental = task.task_index > 1;
    std::vector<DiscriminativePair> out = incremental ? prior : std::vector<DiscriminativePair>{};
    std::vector<DiscriminativePair> added;
    for (const auto& [a, b] : class_pairs(task, incremental)) {
        DiscriminativeAnswer ans;
        try {
            ans = provider.discriminative(a, b);
        } catch (const Error& e) {
            throw ProviderError("discriminative query failed for pair (" + a + ", " + b + "): " + e.what());
        }
        added.push_back({a, b, ans.attribute, ans.positive_class});
    }
    out.insert(out.end(), added.begin(), added.end());
    return out;
}

SharedConceptSet build_shared(const TaskState& task, ConceptProvider& provider, std::size_t n_min,
                              std::size_t llm_count, std::size_t residual_count) {
    if (task.known_classes.size() < 2) throw PreconditionError("build_shared: need at least 2 known classes");
    if (llm_count < 1) throw PreconditionError("build_shared: K must be >= 1");
    require_unique(task.known_classes);
    SharedConceptSet out = merge_shared(task, provider, n_min, llm_count, {});
    int next_id = static_cast<int>(out.concepts.size());
    for (std::size_t r = 0; r < residual_count; ++r)
        out.concepts.push_back({next_id++, {}, {}, ConceptOrigin::Residual});
    return out;
}

ConceptCatalog build_catalog(const std::vector<std::string>& classes, ConceptProvider& provider,
                             const CatalogOptions& options) {
    ConceptCatalog cat;
    cat.task.task_index = 1;
    cat.task.known_classes = classes;
    cat.discriminative = build_discriminative(cat.task, provider);
    auto shared = build_shared(cat.task, provider, options.n_min, options.llm_count, options.residual_count);
    cat.shared = std::move(shared.concepts);
    cat.shortfall = shared.shortfall;
    cat.llm_target = options.llm_count;
    cat.residual_count = options.residual_count;
    cat.refresh_class_sets();
    return cat;
}

ConceptCatalog extend_for_task(const ConceptCatalog& catalog, const std::vector<std::string>& new_classes,
                               ConceptProvider& provider, std::size_t n_min) {
    for (const auto& cls : new_classes)
        if (catalog.task.is_known(cls))
            throw PreconditionError("extend_for_task: class '" + cls + "' is already known");
    require_unique(new_classes);

    ConceptCatalog out = catalog;
    out.task.task_index = catalog.task.task_index + 1;
    out.task.previous_known = catalog.task.known_classes;
    out.task.known_classes.insert(out.task.known_classes.end(), new_classes.begin(), new_classes.end());
    if (new_classes.empty()) return out;

    out.discriminative = build_discriminative(out.task, provider, catalog.discriminative);
    auto merged = merge_shared(out.task, provider, n_min, catalog.llm_target, catalog.shared);
    out.shared = std::move(merged.concepts);
    std::sort(out.shared.begin(), out.shared.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
    out.shortfall = merged.shortfall;
    out.refresh_class_sets();
    return out;
}

std::vector<int> class_concept_set(const ConceptCatalog& catalog, const std::string& class_id) {
    if (!catalog.task.is_known(class_id)) throw LookupError("unknown class id '" + class_id + "'");
    std::vector<int> out;
    for (const auto& c : catalog.shared) {
        if (c.origin != ConceptOrigin::LlmDerived) continue;
        if (std::find(c.possessing_classes.begin(), c.possessing_classes.end(), class_id) !=
            c.possessing_classes.end())
            out.push_back(c.id);
    }
    return out;
}

Json catalog_to_json(const ConceptCatalog& catalog) {
    Json disc = Json::array();
    for (const auto& p : catalog.discriminative)
        disc.push_back({{"a", p.class_a}, {"b", p.class_b}, {"attribute", p.attribute}, {"positive", p.positive_class}});
    Json shared = Json::array();
    for (const auto& c : catalog.shared)
        shared.push_back({{"id", c.id},
                          {"attribute", c.attribute},
                          {"classes", c.possessing_classes},
                          {"origin", c.origin == ConceptOrigin::LlmDerived ? "llm-derived" : "residual"}});
    return Json{{"schema_version", kSchemaVersion},
                {"task_index", catalog.task.task_index},
                {"known_classes", catalog.task.known_classes},
                {"previous_known", catalog.task.previous_known},
                {"llm_target", catalog.llm_target},
                {"residual_count", catalog.residual_count},
                {"shortfall", catalog.shortfall},
                {"discriminative", disc},
                {"shared", shared}};
}

ConceptCatalog catalog_from_json(const Json& doc) {
    check_schema(doc, "catalog");
    ConceptCatalog cat;
    try {
        cat.task.task_index = doc.at("task_index").get<int>();
        cat.task.known_classes = doc.at("known_classes").get<std::vector<std::string>>();
        cat.task.previous_known = doc.value("previous_known", std::vector<std::string>{});
        cat.llm_target = doc.at("llm_target").get<std::size_t>();
        cat.residual_count = doc.at("residual_count").get<std::size_t>();
        cat.shortfall = doc.value("shortfall", false);
        for (const auto& p : doc.at("discriminative"))
            cat.discriminative.push_back({p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                                          p.at("attribute").get<std::string>(),
                                          p.at("positive").get<std::string>()});
        for (const auto& c : doc.at("shared")) {
            const auto origin = c.at("origin").get<std::string>();
            if (origin != "llm-derived" && origin != "residual")
                throw FormatError("catalog: unknown concept origin '" + origin + "'");
            cat.shared.push_back({c.at("id").get<int>(), c.at("attribute").get<std::string>(),
                                  c.at("classes").get<std::vector<std::string>>(),
                                  origin == "llm-derived" ? ConceptOrigin::LlmDerived : ConceptOrigin::Residual});
        }
    } catch (const Json::exception& e) {
        throw FormatError(std::string("catalog: ") + e.what());
    }
    require_unique(cat.task.known_classes);
    for (const auto& p : cat.discriminative) {
        if (p.class_a == p.class_b || p.attribute.empty())
            throw FormatError("catalog: malformed discriminative pair");
        if (!cat.task.is_known(p.class_a) || !cat.task.is_known(p.class_b))
            throw FormatError("catalog: discriminative pair references an unknown class");
    }
    for (const auto& c : cat.shared) {
        if (c.origin == ConceptOrigin::Residual && (!c.attribute.empty() || !c.possessing_classes.empty()))
            throw FormatError("catalog: residual concept carries text or classes");
        for (const auto& cls : c.possessing_classes)
            if (!cat.task.is_known(cls)) throw FormatError("catalog: class map references unknown class '" + cls + "'");
    }
    cat.refresh_class_sets();
    return cat;
}

void save_catalog(const std::string& path, const ConceptCatalog& catalog) {
    write_json_file(path, catalog_to_json(catalog));
}

ConceptCatalog load_catalog(const std::string& path) { return catalog_from_json(read_json_file(path)); }

}  // namespace cdm
