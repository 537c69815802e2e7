#include "cdm/provider.hpp"

#include "cdm/errors.hpp"

#include "httplib.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cdm {

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError("malformed JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const Json& doc) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw FormatError("write failed: " + path);
}

void check_schema(const Json& doc, const std::string& what) {
    if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
        throw FormatError(what + ": missing schema_version");
    if (doc["schema_version"].get<int>() > kSchemaVersion)
        throw FormatError(what + ": unsupported schema_version " + doc["schema_version"].dump());
}

Json discriminative_request(const std::string& a, const std::string& b) {
    return Json{{"kind", "discriminative"}, {"payload", {{"a", a}, {"b", b}}}};
}

Json shared_request(const std::string& a, const std::string& b, std::size_t n_min) {
    return Json{{"kind", "shared"}, {"payload", {{"a", a}, {"b", b}, {"n_min", n_min}}}};
}

Json invert_request(const std::string& attribute, const std::vector<std::string>& classes) {
    return Json{{"kind", "invert"}, {"payload", {{"attribute", attribute}, {"classes", classes}}}};
}

std::string canonical_request(const Json& request) { return request.dump(); }

namespace {

std::vector<std::string> string_list(const Json& response, const std::string& key,
                                     const Json& request) {
    if (!response.is_object() || !response.contains(key) || !response[key].is_array())
        throw ProviderError("response lacks '" + key + "' list for " + canonical_request(request));
    std::vector<std::string> out;
    for (const auto& item : response[key]) {
        if (!item.is_string())
            throw ProviderError("non-string entry in response for " + canonical_request(request));
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

DiscriminativeAnswer ConceptProvider::discriminative(const std::string& a, const std::string& b) {
    const Json request = discriminative_request(a, b);
    const Json response = query(request);
    auto attrs = string_list(response, "attributes", request);
    if (attrs.size() != 1 || attrs.front().empty())
        throw ProviderError("discriminative query must yield exactly one attribute: " +
                            canonical_request(request));
    if (!response.contains("positive") || !response["positive"].is_string())
        throw ProviderError("discriminative response lacks 'positive': " + canonical_request(request));
    DiscriminativeAnswer out{attrs.front(), response["positive"].get<std::string>()};
    if (out.positive_class != a && out.positive_class != b)
        throw ProviderError("positive class '" + out.positive_class + "' is not in the queried pair");
    return out;
}

std::vector<std::string> ConceptProvider::shared(const std::string& a, const std::string& b,
                                                 std::size_t n_min) {
    const Json request = shared_request(a, b, n_min);
    return string_list(query(request), "attributes", request);
}

std::vector<std::string> ConceptProvider::invert(const std::string& attribute,
                                                 const std::vector<std::string>& classes) {
    const Json request = invert_request(attribute, classes);
    return string_list(query(request), "attributes", request);
}

ResponseCache ResponseCache::load(const std::string& path) { return from_json(read_json_file(path)); }

void ResponseCache::save(const std::string& path) const { write_json_file(path, to_json()); }

const Json* ResponseCache::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void ResponseCache::insert(const std::string& key, Json response) {
    entries_[key] = std::move(response);
}

Json ResponseCache::to_json() const {
    Json responses = Json::object();
    for (const auto& [k, v] : entries_) responses[k] = v;
    return Json{{"schema_version", kSchemaVersion}, {"responses", responses}};
}

ResponseCache ResponseCache::from_json(const Json& doc) {
    check_schema(doc, "provider records");
    if (!doc.contains("responses") || !doc["responses"].is_object())
        throw FormatError("provider records: 'responses' must be an object");
    ResponseCache out;
    for (const auto& [k, v] : doc["responses"].items()) out.entries_[k] = v;
    return out;
}

Json FileProvider::query(const Json& request) {
    const std::string key = canonical_request(request);
    const Json* hit = records_.find(key);
    if (!hit) throw ProviderError("no canned response for " + key);
    return *hit;
}

RemoteProvider::RemoteProvider(std::string base_url, std::string path, std::string cache_path)
    : base_url_(std::move(base_url)), path_(std::move(path)), cache_path_(std::move(cache_path)) {
    if (!cache_path_.empty() && std::filesystem::exists(cache_path_))
        cache_ = ResponseCache::load(cache_path_);
}

Json RemoteProvider::query(const Json& request) {
    const std::string key = canonical_request(request);
    if (const Json* hit = cache_.find(key)) return *hit;

    httplib::Client client(base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    auto res = client.Post(path_, key, "application/json");
    if (!res) throw ProviderError("remote provider unreachable at " + base_url_ + path_);
    if (res->status != 200)
        throw ProviderError("remote provider returned HTTP " + std::to_string(res->status) +
                            " for " + key);
    Json response;
    try {
        response = Json::parse(res->body);
    } catch (const Json::exception& e) {
        throw ProviderError(std::string("remote provider sent malformed JSON: ") + e.what());
    }
    cache_.insert(key, response);
    if (!cache_path_.empty()) cache_.save(cache_path_);
    return response;
}

std::string provider_cache_path(const std::string& fallback_dir) {
    const char* env = std::getenv("CDM_PROVIDER_CACHE");
    const std::filesystem::path dir = (env && *env) ? std::filesystem::path(env)
                                                    : std::filesystem::path(fallback_dir);
    return (dir / "provider_cache.json").string();
}

}  // namespace cdm
