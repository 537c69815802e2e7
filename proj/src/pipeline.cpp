#include "cdm/pipeline.hpp"

#include "cdm/errors.hpp"

#include <algorithm>

namespace cdm {

void validate(const PipelineConfig& c) {
    if (!(c.nms_iou >= 0.0 && c.nms_iou <= 1.0)) throw PreconditionError("pipeline: nms_iou must lie in [0, 1]");
    if (!(c.match_iou > 0.0 && c.match_iou <= 1.0)) throw PreconditionError("pipeline: match_iou must lie in (0, 1]");
    if (!(c.score_threshold >= 0.0 && c.score_threshold <= 1.0))
        throw PreconditionError("pipeline: score_threshold must lie in [0, 1]");
    if (!(c.aose_conf >= 0.0 && c.aose_conf <= 1.0)) throw PreconditionError("pipeline: aose_conf must lie in [0, 1]");
    if (!(c.wi_recall > 0.0 && c.wi_recall <= 1.0)) throw PreconditionError("pipeline: wi_recall must lie in (0, 1]");
}

ScoredDetection score_parts(const Model& model, const AdaptedConcepts& adapted, const Decomposition& parts,
                            const Box& box, const PipelineConfig& config) {
    const RegionForward f = forward_parts(model, adapted, parts);
    const auto& layout = model.layout;
    ScoredDetection det;
    det.box = box;
    det.s_cls = f.s_cls;
    det.s_share = config.use_shared ? f.s_share : 0.0;
    det.s_bg = config.use_bg ? f.s_bg : 0.0;

    std::vector<std::vector<double>> c_hat(layout.n_classes());
    const RectifyConfig rc{model.config.eta, 1e-6};
    det.completeness = Vector(static_cast<Eigen::Index>(layout.n_classes()));
    for (std::size_t j = 0; j < layout.n_classes(); ++j) {
        for (int k : layout.class_concepts[j]) c_hat[j].push_back(concept_evidence(f.shared_activations(k), rc.activation_floor));
        det.completeness(static_cast<Eigen::Index>(j)) = completeness_factor(c_hat[j], rc);
    }
    if (config.use_cgr) {
        det.s_known = rectify_known(f.s_cls, c_hat, rc);
        det.s_unk = unknown_score(det.s_share, det.s_bg, det.s_known);
    } else {
        det.s_known = f.s_cls;
        det.s_unk = std::clamp(std::max(det.s_share, det.s_bg), 0.0, 1.0);
    }
    return det;
}

ScoredDetection score_region(const Model& model, const AdaptedConcepts& adapted, const Vector& feature,
                             const Box& box, const PipelineConfig& config) {
    if (static_cast<std::size_t>(feature.size()) != model.input_dim())
        throw DimensionError("score_region: feature has " + std::to_string(feature.size()) + " entries, model expects " +
                             std::to_string(model.input_dim()));
    const Vector z = concept_head_forward(model.params.head, feature);
    return score_parts(model, adapted, decompose(model.frame, z), box, config);
}

Decision decide(const ConceptLayout& layout, const ScoredDetection& det) {
    Eigen::Index best = 0;
    const double top = det.s_known.size() > 0 ? det.s_known.maxCoeff(&best) : 0.0;
    if (det.s_known.size() == 0 || det.s_unk > top) return {kUnknownLabel, std::clamp(det.s_unk, 0.0, 1.0)};
    return {layout.classes[static_cast<std::size_t>(best)], std::clamp(top, 0.0, 1.0)};
}

std::vector<Prediction> predict(const Model& model, const std::vector<Region>& regions, const PipelineConfig& config) {
    validate(config);
    const AdaptedConcepts adapted = adapt_concepts(model);
    std::vector<Prediction> raw;
    for (const auto& r : regions) {
        if (!config.use_gmm_proposals && r.source == "gmm") continue;
        const Decision d = decide(model.layout, score_region(model, adapted, r.feature, r.box, config));
        if (d.confidence < config.score_threshold) continue;
        raw.push_back({r.image, r.box, d.label, d.confidence});
    }
    return nms(raw, config.nms_iou, config.nms_cap);
}

MetricsReport evaluate_predictions(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                   const std::vector<std::string>& prev_classes,
                                   const std::vector<std::string>& curr_classes, const PipelineConfig& config) {
    MetricsReport m;
    m.n_predictions = preds.size();
    if (gts.empty()) return m;
    m.u_recall = u_recall(preds, gts, config.match_iou);
    m.wi = wilderness_impact(preds, gts, config.wi_recall, config.match_iou);
    m.a_ose = a_ose(preds, gts, config.match_iou, config.aose_conf);
    const ApReport ap = mean_ap(preds, gts, prev_classes, curr_classes, config.match_iou);
    m.map_prev = ap.map_prev;
    m.map_curr = ap.map_curr;
    m.map_both = ap.map_both;
    return m;
}

std::vector<Sample> training_samples(const Model& model, const std::vector<Region>& regions) {
    std::vector<Sample> out;
    out.reserve(regions.size());
    for (const auto& r : regions) {
        const int cls = model.layout.class_index(r.label);
        if (cls < 0 && r.label != kBackgroundLabel)
            throw FormatError("training region with label '" + r.label + "' outside the known classes");
        out.push_back({r.feature, cls});
    }
    return out;
}

MetricsReport run_eval(const Model& model, const ConceptCatalog& catalog, const std::vector<Region>& regions,
                       const std::vector<GroundTruth>& gts, const PipelineConfig& config) {
    const auto& prev = catalog.task.previous_known;
    std::vector<std::string> curr;
    for (const auto& c : catalog.task.known_classes)
        if (std::find(prev.begin(), prev.end(), c) == prev.end()) curr.push_back(c);

    MetricsReport m = evaluate_predictions(predict(model, regions, config), gts, prev, curr, config);
    m.n_regions = regions.size();

    const AdaptedConcepts adapted = adapt_concepts(model);
    std::size_t known = 0, correct = 0;
    for (const auto& r : regions) {
        if (!config.use_gmm_proposals && r.source == "gmm") continue;
        const int cls = model.layout.class_index(r.label);
        if (cls < 0) continue;
        const ScoredDetection det = score_region(model, adapted, r.feature, r.box, config);
        Eigen::Index best = 0;
        det.s_known.maxCoeff(&best);
        ++known;
        correct += best == cls ? 1 : 0;
    }
    if (known > 0) m.known_accuracy = static_cast<double>(correct) / static_cast<double>(known);
    return m;
}

std::vector<AblationRow> run_ablation(const Model& model, const ConceptCatalog& catalog,
                                      const std::vector<Region>& regions, const std::vector<GroundTruth>& gts,
                                      const PipelineConfig& base) {
    std::vector<AblationRow> rows;
    const char* names[] = {"disc only", "+ shared", "+ background", "+ rectification"};
    for (int level = 0; level < 4; ++level) {
        PipelineConfig c = base;
        c.use_shared = level >= 1;
        c.use_bg = level >= 2;
        c.use_cgr = level >= 3;
        rows.push_back({names[level], c, run_eval(model, catalog, regions, gts, c)});
    }
    return rows;
}

}  // namespace cdm
