#pragma once

#include "cdm/catalog.hpp"
#include "cdm/io.hpp"
#include "cdm/metrics.hpp"
#include "cdm/model.hpp"
#include "cdm/rectify.hpp"
#include "cdm/train.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace cdm {

struct PipelineConfig {
    bool use_shared = true;
    bool use_bg = true;
    bool use_cgr = true;
    bool use_gmm_proposals = true;
    double score_threshold = 0.0;  // predictions below this confidence are dropped before NMS
    double nms_iou = 0.5;
    std::size_t nms_cap = 100;
    double match_iou = 0.5;
    double aose_conf = 0.05;
    double wi_recall = 0.8;
};

void validate(const PipelineConfig& config);

/// Full scoring chain for one region.
ScoredDetection score_region(const Model& model, const AdaptedConcepts& adapted, const Vector& feature,
                             const Box& box, const PipelineConfig& config);
/// Same chain from a decomposition of z.
ScoredDetection score_parts(const Model& model, const AdaptedConcepts& adapted, const Decomposition& parts,
                            const Box& box, const PipelineConfig& config);

struct Decision {
    std::string label;  // known class or "unknown"
    double confidence = 0.0;
};
/// argmax over known classes by s_known and "unknown" by s_unk; ties go to the known class.
Decision decide(const ConceptLayout& layout, const ScoredDetection& det);

/// Regions to post-NMS predictions. Regions with source "gmm" are skipped when
/// use_gmm_proposals is off.
std::vector<Prediction> predict(const Model& model, const std::vector<Region>& regions, const PipelineConfig& config);

/// Metrics over already-suppressed predictions. prev/curr class groups drive the mAP split.
MetricsReport evaluate_predictions(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                   const std::vector<std::string>& prev_classes,
                                   const std::vector<std::string>& curr_classes, const PipelineConfig& config);

/// Training samples from labeled regions. Background regions get class -1;
/// any other label outside the known classes throws FormatError.
std::vector<Sample> training_samples(const Model& model, const std::vector<Region>& regions);

MetricsReport run_eval(const Model& model, const ConceptCatalog& catalog, const std::vector<Region>& regions,
                       const std::vector<GroundTruth>& gts, const PipelineConfig& config);

struct AblationRow {
    std::string name;
    PipelineConfig config;
    MetricsReport report;
};
/// Rows in the order: disc only, + shared, + background, + rectification.
std::vector<AblationRow> run_ablation(const Model& model, const ConceptCatalog& catalog,
                                      const std::vector<Region>& regions, const std::vector<GroundTruth>& gts,
                                      const PipelineConfig& base);

}  // namespace cdm
