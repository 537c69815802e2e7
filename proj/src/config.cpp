#include "cdm/config.hpp"

#include "cdm/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

namespace cdm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "on") return true;
        if (text == "false" || text == "0" || text == "off") return false;
        throw ConfigError(key + ": expected a boolean, got '" + text + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else {
        T v{};
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (text.empty() || ec != std::errc() || ptr != end)
            throw ConfigError(key + ": cannot parse '" + text + "'");
        return v;
    }
}

template <typename T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_same_v<T, std::string>) {
        return v;
    } else {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, ptr);
    }
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field field_of(std::string key, T& (*access)(RunConfig&)) {
    Field f;
    f.key = key;
    f.set = [key, access](RunConfig& c, const std::string& text) { access(c) = parse_value<T>(key, text); };
    f.get = [access](const RunConfig& c) { return format_value<T>(access(const_cast<RunConfig&>(c))); };
    return f;
}

#define CDM_FIELD(key, member) field_of(key, +[](RunConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        CDM_FIELD("seed", seed),
        CDM_FIELD("data.n_known", data.n_known),
        CDM_FIELD("data.n_unknown", data.n_unknown),
        CDM_FIELD("data.n_attributes", data.n_attributes),
        CDM_FIELD("data.attrs_per_class", data.attrs_per_class),
        CDM_FIELD("data.novel_attributes", data.novel_attributes),
        CDM_FIELD("data.unknown_known_attrs", data.unknown_known_attrs),
        CDM_FIELD("data.feature_dim", data.feature_dim),
        CDM_FIELD("data.noise", data.noise),
        CDM_FIELD("data.context", data.context),
        CDM_FIELD("data.confusion", data.confusion),
        CDM_FIELD("data.attribute_weight", data.attribute_weight),
        CDM_FIELD("data.bg_rank", data.bg_rank),
        CDM_FIELD("data.min_objects", data.min_objects),
        CDM_FIELD("data.max_objects", data.max_objects),
        CDM_FIELD("data.train_images", data.train_images),
        CDM_FIELD("data.eval_images", data.eval_images),
        CDM_FIELD("data.unknown_miss_rate", data.unknown_miss_rate),
        CDM_FIELD("data.bg_proposals", data.bg_proposals),
        CDM_FIELD("data.gmm_components", data.gmm_components),
        CDM_FIELD("data.gmm_samples", data.gmm_samples),
        CDM_FIELD("catalog.n_min", catalog.n_min),
        CDM_FIELD("catalog.llm_count", catalog.llm_count),
        CDM_FIELD("catalog.residual_count", catalog.residual_count),
        CDM_FIELD("embed.dim", embed_dim),
        CDM_FIELD("embed.seed", embed_seed),
        CDM_FIELD("model.d", model.d),
        CDM_FIELD("model.d_u", model.d_u),
        CDM_FIELD("model.d_v", model.d_v),
        CDM_FIELD("model.hidden", model.hidden),
        CDM_FIELD("model.frame_seed", model.frame_seed),
        CDM_FIELD("model.margin", model.margin),
        CDM_FIELD("model.lambda", model.lambda),
        CDM_FIELD("model.eta", model.eta),
        CDM_FIELD("model.bg_variance_threshold", model.bg_variance_threshold),
        CDM_FIELD("model.bg_max_k", model.bg_max_k),
        CDM_FIELD("loss.disc", loss.disc),
        CDM_FIELD("loss.ce", loss.ce),
        CDM_FIELD("loss.sc", loss.sc),
        CDM_FIELD("loss.rec", loss.rec),
        CDM_FIELD("loss.sparse", loss.sparse),
        CDM_FIELD("loss.align", loss.align),
        CDM_FIELD("sgd.lr", sgd.lr),
        CDM_FIELD("sgd.batch_size", sgd.batch_size),
        CDM_FIELD("sgd.epochs", sgd.epochs),
        CDM_FIELD("pipeline.use_shared", pipeline.use_shared),
        CDM_FIELD("pipeline.use_bg", pipeline.use_bg),
        CDM_FIELD("pipeline.use_cgr", pipeline.use_cgr),
        CDM_FIELD("pipeline.use_gmm_proposals", pipeline.use_gmm_proposals),
        CDM_FIELD("pipeline.score_threshold", pipeline.score_threshold),
        CDM_FIELD("pipeline.nms_iou", pipeline.nms_iou),
        CDM_FIELD("pipeline.nms_cap", pipeline.nms_cap),
        CDM_FIELD("metrics.match_iou", pipeline.match_iou),
        CDM_FIELD("metrics.aose_conf", pipeline.aose_conf),
        CDM_FIELD("metrics.wi_recall", pipeline.wi_recall),
        CDM_FIELD("provider.url", provider_url),
        CDM_FIELD("provider.path", provider_path),
    };
    return table;
}

#undef CDM_FIELD

}  // namespace

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(config, trim(value));
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        try {
            apply_setting(config, trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(config, buf.str(), path);
}

void validate(const RunConfig& c) {
    try {
        validate(c.data);
        validate(c.pipeline);
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    if (c.catalog.n_min == 0) throw ConfigError("catalog.n_min must be >= 1");
    if (c.catalog.llm_count == 0) throw ConfigError("catalog.llm_count must be >= 1");
    if (c.embed_dim == 0) throw ConfigError("embed.dim must be >= 1");
    const auto& m = c.model;
    if (m.d_u == 0 || m.d_v == 0 || m.d_u + m.d_v > m.d) throw ConfigError("model: need 1 <= d_u, d_v and d_u + d_v <= d");
    if (m.hidden == 0) throw ConfigError("model.hidden must be >= 1");
    if (!(m.margin > 0.0)) throw ConfigError("model.margin must be > 0");
    if (!(m.lambda >= 0.0)) throw ConfigError("model.lambda must be >= 0");
    if (!(m.eta >= 0.0)) throw ConfigError("model.eta must be >= 0");
    if (!(m.bg_variance_threshold > 0.0 && m.bg_variance_threshold <= 1.0))
        throw ConfigError("model.bg_variance_threshold must lie in (0, 1]");
    if (m.bg_max_k == 0) throw ConfigError("model.bg_max_k must be >= 1");
    const auto& l = c.loss;
    for (double w : {l.disc, l.ce, l.sc, l.rec, l.sparse, l.align})
        if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (!(c.sgd.lr >= 0.0)) throw ConfigError("sgd.lr must be >= 0");
    if (c.sgd.batch_size == 0) throw ConfigError("sgd.batch_size must be >= 1");
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
    return out;
}

std::string render_config(const RunConfig& config) {
    std::string out;
    for (const auto& [k, v] : config_entries(config)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace cdm
