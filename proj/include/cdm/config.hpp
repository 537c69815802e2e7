#pragma once

#include "cdm/catalog.hpp"
#include "cdm/model.hpp"
#include "cdm/pipeline.hpp"
#include "cdm/synthetic.hpp"
#include "cdm/train.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cdm {

/// Every tunable in one place, addressable by dotted key ("sgd.lr", ...).
struct RunConfig {
    std::uint64_t seed = 1;
    SyntheticConfig data;
    CatalogOptions catalog;
    std::size_t embed_dim = 128;
    std::uint64_t embed_seed = 7;
    ModelConfig model;
    LossWeights loss;
    SgdConfig sgd;
    PipelineConfig pipeline;
    std::string provider_url;
    std::string provider_path = "/concepts";
};

/// Sets one key from its text form. Throws ConfigError on unknown keys or unparsable values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies a "key = value" file on top of config. '#' starts a comment.
void apply_config_file(RunConfig& config, const std::string& path);
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin);

/// Checks every value against its module's preconditions.
void validate(const RunConfig& config);

/// All keys with their current values, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);
std::string render_config(const RunConfig& config);

}  // namespace cdm
