#pragma once

#include "cdm/errors.hpp"
#include "cdm/provider.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fixture {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Answers from an explicit class -> attributes table. Discriminative queries
// return the first attribute (table order) held by exactly one of the two.
class TableProvider : public cdm::ConceptProvider {
public:
    explicit TableProvider(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {}

    cdm::Json query(const cdm::Json& request) override {
        ++calls;
        const std::string kind = request.at("kind");
        const auto& p = request.at("payload");
        if (kind == "discriminative") {
            const std::string a = p.at("a"), b = p.at("b");
            for (const auto& [owner, other] : {std::pair{a, b}, std::pair{b, a}})
                for (const auto& attr : table_.at(owner))
                    if (!has(other, attr)) return {{"attributes", {attr}}, {"positive", owner}};
            throw cdm::ProviderError("no discriminating attribute");
        }
        if (kind == "shared") {
            std::vector<std::string> out;
            for (const auto& attr : table_.at(p.at("a")))
                if (has(p.at("b"), attr)) out.push_back(attr);
            return {{"attributes", out}};
        }
        std::vector<std::string> out;
        for (const auto& [cls, attrs] : table_)
            if (has(cls, p.at("attribute"))) out.push_back(cls);
        return {{"attributes", out}};
    }

    bool has(const std::string& cls, const std::string& attr) const {
        auto it = table_.find(cls);
        if (it == table_.end()) return false;
        for (const auto& a : it->second)
            if (a == attr) return true;
        return false;
    }

    std::map<std::string, std::vector<std::string>> table_;
    int calls = 0;
};

// Raw canned responses keyed by canonical request.
class CannedProvider : public cdm::ConceptProvider {
public:
    void set(const cdm::Json& request, cdm::Json response) { answers_[cdm::canonical_request(request)] = std::move(response); }
    cdm::Json query(const cdm::Json& request) override {
        auto it = answers_.find(cdm::canonical_request(request));
        if (it == answers_.end()) throw cdm::ProviderError("not canned: " + request.dump());
        return it->second;
    }

private:
    std::map<std::string, cdm::Json> answers_;
};

}  // namespace fixture
