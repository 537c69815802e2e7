#pragma once

#include "cdm/json_io.hpp"
#include "cdm/metrics.hpp"
#include "cdm/numeric.hpp"

#include <string>
#include <vector>

namespace cdm {

/// One region record: the head input for a box plus its label. Labels are a
/// known class, "unknown" or "background".
struct Region {
    std::string image;
    Vector feature;
    Box box;
    std::string label;
    std::vector<std::string> concept_labels;  // attribute texts, known classes only
    std::string source = "learned";           // "learned" or "gmm"
    bool operator==(const Region&) const = default;
};

Json box_to_json(const Box& b);
Box box_from_json(const Json& j);

Json region_to_json(const Region& r);
Region region_from_json(const Json& j);
Json ground_truth_to_json(const GroundTruth& g);
GroundTruth ground_truth_from_json(const Json& j);
Json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const Json& j);
Json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const Json& j);

/// Line-delimited JSON, one compact object per line.
void write_jsonl(const std::string& path, const std::vector<Json>& records);
std::vector<Json> read_jsonl(const std::string& path);

void write_regions(const std::string& path, const std::vector<Region>& regions);
std::vector<Region> read_regions(const std::string& path);
void write_ground_truth(const std::string& path, const std::vector<GroundTruth>& gts);
std::vector<GroundTruth> read_ground_truth(const std::string& path);
void write_predictions(const std::string& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::string& path);
void write_metrics(const std::string& path, const MetricsReport& m);
MetricsReport read_metrics(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace cdm
