#include "cdm/metrics.hpp"

#include "cdm/errors.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <tuple>

namespace cdm {

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
    const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

bool ranks_before(const Prediction& a, const Prediction& b) {
    return std::tie(b.confidence, a.box.x, a.box.y, a.box.w, a.box.h, a.label, a.image) <
           std::tie(a.confidence, b.box.x, b.box.y, b.box.w, b.box.h, b.label, b.image);
}

namespace {

bool is_unknown(const std::string& label) { return label == kUnknownLabel; }

bool gt_before(const GroundTruth& a, const GroundTruth& b) {
    return std::tie(a.image, a.label, a.box.x, a.box.y, a.box.w, a.box.h) <
           std::tie(b.image, b.label, b.box.x, b.box.y, b.box.w, b.box.h);
}

std::map<std::string, std::vector<Prediction>> by_image(const std::vector<Prediction>& preds) {
    std::map<std::string, std::vector<Prediction>> out;
    for (const auto& p : preds) out[p.image].push_back(p);
    for (auto& [_, v] : out) std::sort(v.begin(), v.end(), ranks_before);
    return out;
}

std::map<std::string, std::vector<GroundTruth>> by_image(const std::vector<GroundTruth>& gts) {
    std::map<std::string, std::vector<GroundTruth>> out;
    for (const auto& g : gts) out[g.image].push_back(g);
    for (auto& [_, v] : out) std::sort(v.begin(), v.end(), gt_before);
    return out;
}

std::vector<Prediction> ranked(std::vector<Prediction> preds) {
    std::sort(preds.begin(), preds.end(), ranks_before);
    return preds;
}

// VOC-style matching of ranked known-class predictions to GT of the same class.
// Returns, per prediction, the index of the GT it claimed or -1.
std::vector<int> voc_match(const std::vector<Prediction>& ranked_preds, const std::vector<GroundTruth>& gts,
                           double iou_thresh) {
    std::vector<bool> used(gts.size(), false);
    std::vector<int> out(ranked_preds.size(), -1);
    for (std::size_t i = 0; i < ranked_preds.size(); ++i) {
        const auto& p = ranked_preds[i];
        double best = -1.0;
        int best_j = -1;
        for (std::size_t j = 0; j < gts.size(); ++j) {
            if (gts[j].image != p.image || gts[j].label != p.label) continue;
            const double o = iou(p.box, gts[j].box);
            if (o > best) {
                best = o;
                best_j = static_cast<int>(j);
            }
        }
        if (best_j >= 0 && best >= iou_thresh && !used[static_cast<std::size_t>(best_j)]) {
            used[static_cast<std::size_t>(best_j)] = true;
            out[i] = best_j;
        }
    }
    return out;
}

bool overlaps_unknown(const Prediction& p, const std::vector<GroundTruth>& gts, double iou_thresh) {
    for (const auto& g : gts)
        if (g.image == p.image && is_unknown(g.label) && iou(p.box, g.box) >= iou_thresh) return true;
    return false;
}

}  // namespace

std::vector<Prediction> nms(const std::vector<Prediction>& preds, double iou_thresh, std::size_t cap) {
    std::vector<Prediction> out;
    for (auto& [image, list] : by_image(preds)) {
        std::vector<Prediction> kept;
        for (const auto& p : list) {
            bool suppressed = false;
            for (const auto& k : kept) {
                if (k.label == p.label && iou(k.box, p.box) > iou_thresh) {
                    suppressed = true;
                    break;
                }
            }
            if (!suppressed) kept.push_back(p);
        }
        if (kept.size() > cap) kept.resize(cap);
        out.insert(out.end(), kept.begin(), kept.end());
    }
    return out;
}

std::optional<double> u_recall(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                               double iou_thresh) {
    std::size_t total = 0;
    for (const auto& g : gts) total += is_unknown(g.label) ? 1 : 0;
    if (total == 0) return std::nullopt;

    const auto gt_images = by_image(gts);
    std::size_t matched = 0;
    for (const auto& [image, list] : by_image(preds)) {
        auto it = gt_images.find(image);
        if (it == gt_images.end()) continue;
        std::vector<const GroundTruth*> unk;
        for (const auto& g : it->second)
            if (is_unknown(g.label)) unk.push_back(&g);
        std::vector<std::vector<std::size_t>> adj;
        for (const auto& p : list) {
            if (!is_unknown(p.label)) continue;
            std::vector<std::size_t> edges;
            for (std::size_t j = 0; j < unk.size(); ++j)
                if (iou(p.box, unk[j]->box) >= iou_thresh) edges.push_back(j);
            adj.push_back(std::move(edges));
        }
        std::vector<int> owner(unk.size(), -1);
        std::vector<bool> seen;
        std::function<bool(std::size_t)> augment = [&](std::size_t i) {
            for (std::size_t j : adj[i]) {
                if (seen[j]) continue;
                seen[j] = true;
                if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]))) {
                    owner[j] = static_cast<int>(i);
                    return true;
                }
            }
            return false;
        };
        for (std::size_t i = 0; i < adj.size(); ++i) {
            seen.assign(unk.size(), false);
            if (augment(i)) ++matched;
        }
    }
    return static_cast<double>(matched) / static_cast<double>(total);
}

std::size_t a_ose(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts, double iou_thresh,
                  double conf_thresh) {
    const auto gt_images = by_image(gts);
    std::size_t count = 0;
    for (const auto& p : preds) {
        if (is_unknown(p.label) || p.confidence < conf_thresh) continue;
        auto it = gt_images.find(p.image);
        if (it == gt_images.end()) continue;
        double best = -1.0;
        bool best_unknown = false;
        bool own_match = false;
        for (const auto& g : it->second) {
            const double o = iou(p.box, g.box);
            const bool unk = is_unknown(g.label);
            if (!unk && g.label == p.label && o >= iou_thresh) own_match = true;
            if (o > best || (o == best && !unk)) {
                best = o;
                best_unknown = unk;
            }
        }
        if (best_unknown && best >= iou_thresh && !own_match) ++count;
    }
    return count;
}

std::optional<double> wilderness_impact(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                        double recall_level, double iou_thresh) {
    std::vector<GroundTruth> known_gt;
    for (const auto& g : gts)
        if (!is_unknown(g.label)) known_gt.push_back(g);
    std::sort(known_gt.begin(), known_gt.end(), gt_before);
    if (known_gt.empty()) return std::nullopt;

    std::vector<Prediction> known_preds;
    for (const auto& p : preds)
        if (!is_unknown(p.label)) known_preds.push_back(p);
    known_preds = ranked(std::move(known_preds));
    const auto match = voc_match(known_preds, known_gt, iou_thresh);

    std::size_t tp = 0, fp = 0, fp_open = 0;
    for (std::size_t i = 0; i < known_preds.size(); ++i) {
        if (match[i] >= 0)
            ++tp;
        else if (overlaps_unknown(known_preds[i], gts, iou_thresh))
            ++fp_open;
        else
            ++fp;
        const double recall = static_cast<double>(tp) / static_cast<double>(known_gt.size());
        if (recall >= recall_level) {
            const double p_closed = static_cast<double>(tp) / static_cast<double>(tp + fp);
            const double p_open = static_cast<double>(tp) / static_cast<double>(tp + fp + fp_open);
            return p_closed / p_open - 1.0;
        }
    }
    return std::nullopt;
}

double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
    if (n_gt == 0) throw PreconditionError("average_precision: no ground truth");
    std::vector<double> recall, precision;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
        tp += ranked_tp[i] ? 1 : 0;
        recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    }
    for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

ApReport mean_ap(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                 const std::vector<std::string>& prev_classes, const std::vector<std::string>& curr_classes,
                 double iou_thresh) {
    ApReport report;
    std::set<std::string> classes(prev_classes.begin(), prev_classes.end());
    classes.insert(curr_classes.begin(), curr_classes.end());
    for (const auto& cls : classes) {
        std::vector<GroundTruth> cls_gt;
        for (const auto& g : gts)
            if (g.label == cls) cls_gt.push_back(g);
        if (cls_gt.empty()) continue;
        std::sort(cls_gt.begin(), cls_gt.end(), gt_before);
        std::vector<Prediction> cls_preds;
        for (const auto& p : preds)
            if (p.label == cls) cls_preds.push_back(p);
        cls_preds = ranked(std::move(cls_preds));
        const auto match = voc_match(cls_preds, cls_gt, iou_thresh);
        std::vector<bool> tp(match.size());
        for (std::size_t i = 0; i < match.size(); ++i) tp[i] = match[i] >= 0;
        report.per_class[cls] = average_precision(tp, cls_gt.size());
    }
    auto group_mean = [&](const std::vector<std::string>& group) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : std::set<std::string>(group.begin(), group.end())) {
            auto it = report.per_class.find(c);
            if (it == report.per_class.end()) continue;
            sum += it->second;
            ++n;
        }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    report.map_prev = group_mean(prev_classes);
    report.map_curr = group_mean(curr_classes);
    std::vector<std::string> both(classes.begin(), classes.end());
    report.map_both = group_mean(both);
    return report;
}

}  // namespace cdm
