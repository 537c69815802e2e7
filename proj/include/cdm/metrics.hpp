#pragma once

#include "cdm/box.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdm {

inline constexpr const char* kUnknownLabel = "unknown";
inline constexpr const char* kBackgroundLabel = "background";

struct Prediction {
    std::string image;
    Box box;
    std::string label;  // known class or "unknown"
    double confidence = 0.0;
    bool operator==(const Prediction&) const = default;
};

struct GroundTruth {
    std::string image;
    Box box;
    std::string label;  // known class or "unknown"
    bool operator==(const GroundTruth&) const = default;
};

double iou(const Box& a, const Box& b);

/// Ranking order used everywhere: confidence descending, then lower x, lower y,
/// then w, h and label so that the order is total.
bool ranks_before(const Prediction& a, const Prediction& b);

/// Greedy per-class NMS inside each image, then the cap per image by rank.
/// Output is grouped by image id (ascending) and ranked inside each image.
std::vector<Prediction> nms(const std::vector<Prediction>& preds, double iou_thresh, std::size_t cap);

/// Fraction of unknown GT matched by unknown-labeled predictions (one-to-one,
/// IoU >= thresh, maximum matching built in rank order). Absent without unknown GT.
std::optional<double> u_recall(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                               double iou_thresh = 0.5);

/// Known-class predictions (confidence >= conf_thresh) whose best-overlap GT is
/// unknown at IoU >= thresh and which overlap no GT of their own class at IoU >= thresh.
/// Overlap ties prefer the known GT.
std::size_t a_ose(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                  double iou_thresh = 0.5, double conf_thresh = 0.05);

/// Precision with unknown-overlapping detections ignored over precision with
/// them counted as false positives, minus one, at the first rank where known
/// recall reaches recall_level. Absent when that recall is never reached.
std::optional<double> wilderness_impact(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                        double recall_level = 0.8, double iou_thresh = 0.5);

struct ApReport {
    std::map<std::string, double> per_class;  // classes with at least one GT
    std::optional<double> map_prev;
    std::optional<double> map_curr;
    std::optional<double> map_both;
};

/// All-point interpolated AP per known class; group means over prev, curr and their union.
ApReport mean_ap(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                 const std::vector<std::string>& prev_classes, const std::vector<std::string>& curr_classes,
                 double iou_thresh = 0.5);

/// Evaluation summary. Absent values serialize as null.
struct MetricsReport {
    std::optional<double> u_recall;
    std::optional<double> wi;
    std::optional<std::size_t> a_ose;
    std::optional<double> map_prev;
    std::optional<double> map_curr;
    std::optional<double> map_both;
    std::optional<double> known_accuracy;  // argmax s_known on known-class regions
    std::size_t n_regions = 0;
    std::size_t n_predictions = 0;
    bool operator==(const MetricsReport&) const = default;
};

/// AP of one ranked TP/FP sequence against n_gt ground truths.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt);

}  // namespace cdm
