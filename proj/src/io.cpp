#include "cdm/io.hpp"

#include "cdm/errors.hpp"

#include <fstream>

namespace cdm {

namespace {

template <typename T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const Json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<T>();
}

template <typename T, typename F>
T parse_record(const Json& j, const char* what, F&& f) {
    check_schema(j, what);
    try {
        return f();
    } catch (const Json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

void check_confidence(double c) {
    if (!(c >= 0.0 && c <= 1.0)) throw FormatError("prediction confidence outside [0, 1]");
}

}  // namespace

Json box_to_json(const Box& b) { return Json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

Box box_from_json(const Json& j) {
    Box b{j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()};
    if (!(b.w > 0.0 && b.h > 0.0)) throw FormatError("box with non-positive side");
    return b;
}

Json region_to_json(const Region& r) {
    Json j{{"schema_version", kSchemaVersion},
           {"image", r.image},
           {"box", box_to_json(r.box)},
           {"label", r.label},
           {"source", r.source},
           {"feature", std::vector<double>(r.feature.data(), r.feature.data() + r.feature.size())}};
    if (!r.concept_labels.empty()) j["concept_labels"] = r.concept_labels;
    return j;
}

Region region_from_json(const Json& j) {
    return parse_record<Region>(j, "region record", [&] {
        Region r;
        r.image = j.at("image").get<std::string>();
        r.box = box_from_json(j.at("box"));
        r.label = j.at("label").get<std::string>();
        if (r.label.empty()) throw FormatError("region record: empty label");
        r.source = j.value("source", std::string("learned"));
        const auto f = j.at("feature").get<std::vector<double>>();
        r.feature = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
        if (!all_finite(r.feature)) throw FormatError("region record: non-finite feature");
        if (j.contains("concept_labels")) {
            r.concept_labels = j.at("concept_labels").get<std::vector<std::string>>();
            if (!r.concept_labels.empty() && (r.label == kUnknownLabel || r.label == kBackgroundLabel))
                throw FormatError("region record: unknown/background regions carry no concept labels");
        }
        return r;
    });
}

Json ground_truth_to_json(const GroundTruth& g) {
    return Json{{"schema_version", kSchemaVersion}, {"image", g.image}, {"box", box_to_json(g.box)}, {"label", g.label}};
}

GroundTruth ground_truth_from_json(const Json& j) {
    return parse_record<GroundTruth>(j, "ground truth record", [&] {
        return GroundTruth{j.at("image").get<std::string>(), box_from_json(j.at("box")), j.at("label").get<std::string>()};
    });
}

Json prediction_to_json(const Prediction& p) {
    return Json{{"schema_version", kSchemaVersion},
                {"image", p.image},
                {"box", box_to_json(p.box)},
                {"label", p.label},
                {"confidence", p.confidence}};
}

Prediction prediction_from_json(const Json& j) {
    return parse_record<Prediction>(j, "prediction record", [&] {
        Prediction p{j.at("image").get<std::string>(), box_from_json(j.at("box")), j.at("label").get<std::string>(),
                     j.at("confidence").get<double>()};
        check_confidence(p.confidence);
        return p;
    });
}

Json metrics_to_json(const MetricsReport& m) {
    return Json{{"schema_version", kSchemaVersion},
                {"u_recall", optional_json(m.u_recall)},
                {"wi", optional_json(m.wi)},
                {"a_ose", optional_json(m.a_ose)},
                {"map_prev", optional_json(m.map_prev)},
                {"map_curr", optional_json(m.map_curr)},
                {"map_both", optional_json(m.map_both)},
                {"known_accuracy", optional_json(m.known_accuracy)},
                {"n_regions", m.n_regions},
                {"n_predictions", m.n_predictions}};
}

MetricsReport metrics_from_json(const Json& j) {
    return parse_record<MetricsReport>(j, "metrics report", [&] {
        MetricsReport m;
        m.u_recall = optional_from<double>(j, "u_recall");
        m.wi = optional_from<double>(j, "wi");
        m.a_ose = optional_from<std::size_t>(j, "a_ose");
        m.map_prev = optional_from<double>(j, "map_prev");
        m.map_curr = optional_from<double>(j, "map_curr");
        m.map_both = optional_from<double>(j, "map_both");
        m.known_accuracy = optional_from<double>(j, "known_accuracy");
        m.n_regions = j.at("n_regions").get<std::size_t>();
        m.n_predictions = j.at("n_predictions").get<std::size_t>();
        return m;
    });
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out << text;
    if (!out) throw FormatError("write failed: " + path);
}

void write_jsonl(const std::string& path, const std::vector<Json>& records) {
    std::string text;
    for (const auto& r : records) {
        text += r.dump();
        text += '\n';
    }
    write_text_file(path, text);
}

std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<Json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

namespace {

template <typename T, typename ToJson>
void write_records(const std::string& path, const std::vector<T>& items, ToJson&& to_json) {
    std::vector<Json> records;
    records.reserve(items.size());
    for (const auto& item : items) records.push_back(to_json(item));
    write_jsonl(path, records);
}

template <typename T, typename FromJson>
std::vector<T> read_records(const std::string& path, FromJson&& from_json) {
    std::vector<T> out;
    for (const auto& j : read_jsonl(path)) out.push_back(from_json(j));
    return out;
}

}  // namespace

void write_regions(const std::string& path, const std::vector<Region>& regions) {
    write_records(path, regions, region_to_json);
}
std::vector<Region> read_regions(const std::string& path) { return read_records<Region>(path, region_from_json); }

void write_ground_truth(const std::string& path, const std::vector<GroundTruth>& gts) {
    write_records(path, gts, ground_truth_to_json);
}
std::vector<GroundTruth> read_ground_truth(const std::string& path) {
    return read_records<GroundTruth>(path, ground_truth_from_json);
}

void write_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    write_records(path, preds, prediction_to_json);
}
std::vector<Prediction> read_predictions(const std::string& path) {
    return read_records<Prediction>(path, prediction_from_json);
}

void write_metrics(const std::string& path, const MetricsReport& m) { write_json_file(path, metrics_to_json(m)); }
MetricsReport read_metrics(const std::string& path) { return metrics_from_json(read_json_file(path)); }

}  // namespace cdm
