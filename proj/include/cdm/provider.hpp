#pragma once

#include "cdm/json_io.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace cdm {

struct DiscriminativeAnswer {
    std::string attribute;
    std::string positive_class;
};

/// Source of concept text for catalog construction. Three query kinds, all
/// expressed as JSON requests {kind, payload} answered by {attributes, ...}:
///   discriminative {a, b}            -> {attributes: [attr], positive: class}
///   shared         {a, b, n_min}     -> {attributes: [attr, ...]}
///   invert         {attribute, classes} -> {attributes: [class, ...]}
class ConceptProvider {
public:
    virtual ~ConceptProvider() = default;

    /// Answers one raw request; throws ProviderError if it cannot.
    virtual Json query(const Json& request) = 0;

    DiscriminativeAnswer discriminative(const std::string& a, const std::string& b);
    std::vector<std::string> shared(const std::string& a, const std::string& b, std::size_t n_min);
    std::vector<std::string> invert(const std::string& attribute,
                                    const std::vector<std::string>& classes);
};

Json discriminative_request(const std::string& a, const std::string& b);
Json shared_request(const std::string& a, const std::string& b, std::size_t n_min);
Json invert_request(const std::string& attribute, const std::vector<std::string>& classes);

/// Cache key: the request serialized compactly with sorted object keys.
std::string canonical_request(const Json& request);

/// Canned request -> response records. The on-disk form is
/// {schema_version, responses: {canonical request: response}}; a remote
/// provider's cache file has the same layout and can be replayed offline.
class ResponseCache {
public:
    ResponseCache() = default;

    static ResponseCache load(const std::string& path);
    void save(const std::string& path) const;

    const Json* find(const std::string& key) const;
    void insert(const std::string& key, Json response);
    std::size_t size() const { return entries_.size(); }

    Json to_json() const;
    static ResponseCache from_json(const Json& doc);

private:
    std::map<std::string, Json> entries_;
};

/// Offline provider answering only from canned records.
class FileProvider : public ConceptProvider {
public:
    explicit FileProvider(ResponseCache records) : records_(std::move(records)) {}
    static FileProvider load(const std::string& path) { return FileProvider(ResponseCache::load(path)); }

    Json query(const Json& request) override;
    const ResponseCache& records() const { return records_; }

private:
    ResponseCache records_;
};

/// HTTP provider: POSTs the request JSON to base_url + path. Responses are
/// memoized in a cache file (when cache_path is nonempty) keyed by the
/// canonical request, and served from there on later runs.
class RemoteProvider : public ConceptProvider {
public:
    RemoteProvider(std::string base_url, std::string path, std::string cache_path = {});

    Json query(const Json& request) override;

private:
    std::string base_url_;
    std::string path_;
    std::string cache_path_;
    ResponseCache cache_;
};

/// Cache file location: $CDM_PROVIDER_CACHE/provider_cache.json when the
/// variable is set, otherwise fallback_dir/provider_cache.json.
std::string provider_cache_path(const std::string& fallback_dir);

}  // namespace cdm
