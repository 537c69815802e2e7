#include "cdm/embed.hpp"

#include "cdm/errors.hpp"
#include "cdm/json_io.hpp"
#include "cdm/rng.hpp"

#include <cmath>

namespace cdm {

ConceptEmbedding synthetic_embed(const std::string& attribute_text, std::size_t d_e, std::uint64_t seed) {
    if (attribute_text.empty()) throw PreconditionError("synthetic_embed: empty text");
    if (d_e == 0) throw DimensionError("synthetic_embed: d_e must be positive");
    Rng rng(fnv1a64(attribute_text) ^ seed);
    Vector v(static_cast<Eigen::Index>(d_e));
    double n = 0.0;
    while (n == 0.0) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
        n = v.norm();
    }
    return {attribute_text, v / n};
}

void EmbeddingTable::add(ConceptEmbedding embedding) {
    if (static_cast<std::size_t>(embedding.vector.size()) != d_e_)
        throw DimensionError("embedding '" + embedding.concept_id + "' has dimension " +
                             std::to_string(embedding.vector.size()) + ", table expects " + std::to_string(d_e_));
    if (!embedding.vector.allFinite()) throw FormatError("embedding '" + embedding.concept_id + "' is not finite");
    const std::string id = embedding.concept_id;
    if (!entries_.emplace(id, std::move(embedding)).second)
        throw PreconditionError("duplicate embedding id '" + id + "'");
}

const ConceptEmbedding& EmbeddingTable::lookup(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw LookupError("no embedding for concept '" + id + "'");
    return it->second;
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
    if (d_e_ != other.d_e_ || entries_.size() != other.entries_.size()) return false;
    for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
        if (a->first != b->first) return false;
        if (a->second.vector != b->second.vector) return false;
    }
    return true;
}

const ConceptEmbedding& lookup(const EmbeddingTable& table, const std::string& concept_id) {
    return table.lookup(concept_id);
}

void save_table(const std::string& path, const EmbeddingTable& table) {
    Json entries = Json::object();
    for (const auto& [id, e] : table.entries())
        entries[id] = std::vector<double>(e.vector.data(), e.vector.data() + e.vector.size());
    write_json_file(path, Json{{"schema_version", kSchemaVersion}, {"d_e", table.dim()}, {"entries", entries}});
}

EmbeddingTable load_table(const std::string& path) {
    const Json doc = read_json_file(path);
    check_schema(doc, "embedding table");
    try {
        EmbeddingTable table(doc.at("d_e").get<std::size_t>());
        for (const auto& [id, values] : doc.at("entries").items()) {
            const auto raw = values.get<std::vector<double>>();
            Vector v = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
            if (static_cast<std::size_t>(v.size()) != table.dim())
                throw FormatError("embedding table: entry '" + id + "' has dimension " + std::to_string(v.size()) +
                                  " but d_e is " + std::to_string(table.dim()));
            if (std::abs(v.norm() - 1.0) > 1e-9)
                throw FormatError("embedding table: entry '" + id + "' is not unit norm");
            table.add({id, std::move(v)});
        }
        return table;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("embedding table: ") + e.what());
    }
}

}  // namespace cdm
