#include "doctest.h"

#include "bench_common.hpp"

#include "cdm/errors.hpp"
#include "cdm/rng.hpp"

#include <cmath>

using namespace cdm;

namespace {

struct Trained {
    bench::Setup setup;
    Model model;
    RunConfig cfg;
};

const Trained& trained() {
    static const Trained t = [] {
        Trained out;
        out.cfg = bench::preset(1);
        out.setup = bench::setup(out.cfg);
        out.model = train_loop(out.setup.model, out.setup.samples, out.cfg.sgd, out.cfg.loss).model;
        return out;
    }();
    return t;
}

void check_same(const ScoredDetection& a, const ScoredDetection& b) {
    CHECK(a.box == b.box);
    CHECK(a.s_known == b.s_known);
    CHECK(a.s_unk == b.s_unk);
    CHECK(a.s_cls == b.s_cls);
    CHECK(a.s_share == b.s_share);
    CHECK(a.s_bg == b.s_bg);
    CHECK(a.completeness == b.completeness);
}

PipelineConfig switches(bool shared, bool bg, bool cgr) {
    PipelineConfig c;
    c.use_shared = shared;
    c.use_bg = bg;
    c.use_cgr = cgr;
    return c;
}

}  // namespace

TEST_CASE("all channels off gives no unknown evidence") {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    for (bool cgr : {false, true}) {
        const auto cfg = switches(false, false, cgr);
        for (const auto& r : t.setup.world.eval_regions) {
            const auto det = score_region(t.model, adapted, r.feature, r.box, cfg);
            CHECK(det.s_unk == 0.0);
            CHECK(decide(t.model.layout, det).label != kUnknownLabel);
        }
    }
}

TEST_CASE("background complement feature is labeled unknown") {
    const auto& t = trained();
    const auto& bg = t.model.background;
    const auto adapted = adapt_concepts(t.model);
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        Vector w(static_cast<Eigen::Index>(bg.dim()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
        w -= bg.basis * (bg.basis.transpose() * w);
        const Vector z = bg.mean + 5.0 * w.normalized();
        const auto det = score_parts(t.model, adapted, decompose(t.model.frame, z), Box{}, PipelineConfig{});
        CHECK(det.s_bg >= 1.0 - 1e-9);
        CHECK(decide(t.model.layout, det).label == kUnknownLabel);
    }
}

TEST_CASE("trained model classifies held-out known regions") {
    const auto& t = trained();
    const auto report = run_eval(t.model, t.setup.catalog, t.setup.world.eval_regions, t.setup.world.eval_gt,
                                 t.cfg.pipeline);
    REQUIRE(report.known_accuracy.has_value());
    CHECK(*report.known_accuracy >= 0.95);
    CHECK(report.n_regions == t.setup.world.eval_regions.size());
    CHECK(report.u_recall.has_value());
    CHECK(report.map_both.has_value());
}

TEST_CASE("empty eval set reports absences") {
    const auto& t = trained();
    const auto report = run_eval(t.model, t.setup.catalog, {}, {}, PipelineConfig{});
    CHECK(report.n_regions == 0);
    CHECK(report.n_predictions == 0);
    CHECK_FALSE(report.u_recall.has_value());
    CHECK_FALSE(report.wi.has_value());
    CHECK_FALSE(report.a_ose.has_value());
    CHECK_FALSE(report.map_prev.has_value());
    CHECK_FALSE(report.map_curr.has_value());
    CHECK_FALSE(report.map_both.has_value());
    CHECK_FALSE(report.known_accuracy.has_value());
}

TEST_CASE("evaluation is deterministic") {
    const auto& t = trained();
    const auto& w = t.setup.world;
    const auto a = run_eval(t.model, t.setup.catalog, w.eval_regions, w.eval_gt, PipelineConfig{});
    const auto b = run_eval(t.model, t.setup.catalog, w.eval_regions, w.eval_gt, PipelineConfig{});
    CHECK(a == b);
    CHECK(predict(t.model, w.eval_regions, PipelineConfig{}) == predict(t.model, w.eval_regions, PipelineConfig{}));
}

TEST_CASE("scores depend on the feature only through its decomposition") {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    for (const auto& r : t.setup.world.eval_regions) {
        const Vector z = concept_head_forward(t.model.params.head, r.feature);
        Decomposition parts = decompose(t.model.frame, z);
        // rebuild z from its parts in a different order of summation
        const Vector z2 = parts.f_bg + parts.v + parts.u;
        Decomposition parts2 = decompose(t.model.frame, z2);
        const PipelineConfig cfg;
        check_same(score_region(t.model, adapted, r.feature, r.box, cfg), score_parts(t.model, adapted, parts, r.box, cfg));
        if (z2 == z) check_same(score_parts(t.model, adapted, parts, r.box, cfg), score_parts(t.model, adapted, parts2, r.box, cfg));
    }
}

TEST_CASE("turning off the background channel bounds the unknown score") {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    for (const auto& r : t.setup.world.eval_regions) {
        const auto on = score_region(t.model, adapted, r.feature, r.box, switches(true, false, true));
        CHECK(on.s_bg == 0.0);
        CHECK(on.s_unk <= std::clamp(on.s_share, 0.0, 1.0) * (1.0 - on.s_known.maxCoeff()) + 1e-15);
        const auto raw = score_region(t.model, adapted, r.feature, r.box, switches(true, false, false));
        CHECK(raw.s_unk <= std::clamp(raw.s_share, 0.0, 1.0));
        CHECK(raw.s_known == raw.s_cls);
        const auto full = score_region(t.model, adapted, r.feature, r.box, switches(true, true, false));
        CHECK(full.s_unk == std::clamp(std::max(full.s_share, full.s_bg), 0.0, 1.0));
    }
}

TEST_CASE("label ties go to the known class") {
    ConceptLayout layout;
    layout.classes = {"cat", "dog"};
    ScoredDetection det;
    det.s_known = Vector(2);
    det.s_known << 0.3, 0.6;
    det.s_unk = 0.6;
    CHECK(decide(layout, det).label == "dog");
    det.s_unk = std::nextafter(0.6, 1.0);
    CHECK(decide(layout, det).label == kUnknownLabel);
    det.s_known << 0.6, 0.6;
    det.s_unk = 0.1;
    CHECK(decide(layout, det).label == "cat");
}

TEST_CASE("ablation rows come in fixed order") {
    const auto& t = trained();
    const auto& w = t.setup.world;
    const auto rows = run_ablation(t.model, t.setup.catalog, w.eval_regions, w.eval_gt, PipelineConfig{});
    REQUIRE(rows.size() == 4);
    const char* names[] = {"disc only", "+ shared", "+ background", "+ rectification"};
    for (int i = 0; i < 4; ++i) {
        CHECK(rows[static_cast<std::size_t>(i)].name == names[i]);
        CHECK(rows[static_cast<std::size_t>(i)].config.use_shared == (i >= 1));
        CHECK(rows[static_cast<std::size_t>(i)].config.use_bg == (i >= 2));
        CHECK(rows[static_cast<std::size_t>(i)].config.use_cgr == (i >= 3));
    }
    CHECK(rows[3].report == run_eval(t.model, t.setup.catalog, w.eval_regions, w.eval_gt, PipelineConfig{}));
}

TEST_CASE("gmm proposals can be switched off") {
    const auto& t = trained();
    std::vector<Region> regions;
    for (const auto& r : t.setup.world.eval_regions)
        if (r.source == "gmm") regions.push_back(r);
    REQUIRE_FALSE(regions.empty());
    PipelineConfig cfg;
    CHECK_FALSE(predict(t.model, regions, cfg).empty());
    cfg.use_gmm_proposals = false;
    CHECK(predict(t.model, regions, cfg).empty());
}

TEST_CASE("predictions respect the cap and the score threshold") {
    const auto& t = trained();
    PipelineConfig cfg;
    cfg.nms_cap = 2;
    cfg.score_threshold = 0.3;
    std::map<std::string, std::size_t> per_image;
    for (const auto& p : predict(t.model, t.setup.world.eval_regions, cfg)) {
        CHECK(p.confidence >= 0.3);
        ++per_image[p.image];
    }
    for (const auto& [_, n] : per_image) CHECK(n <= 2);
}

TEST_CASE("pipeline errors") {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    CHECK_THROWS_AS(score_region(t.model, adapted, Vector::Zero(3), Box{}, PipelineConfig{}), DimensionError);
    PipelineConfig bad;
    bad.nms_iou = 1.5;
    CHECK_THROWS_AS(validate(bad), PreconditionError);
    std::vector<Region> regions{t.setup.world.train.front()};
    regions[0].label = "zebra";
    CHECK_THROWS_AS(training_samples(t.model, regions), FormatError);
    regions[0].label = kBackgroundLabel;
    CHECK(training_samples(t.model, regions)[0].cls == -1);
}

TEST_CASE("shared concepts fire more on objects than on background") {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    double known = 0.0, background = 0.0;
    std::size_t nk = 0, nb = 0;
    for (const auto& s : t.setup.samples) {
        const double top = forward_region(t.model, adapted, s.feature).shared_activations.maxCoeff();
        if (s.cls < 0) {
            background += top;
            ++nb;
        } else {
            known += top;
            ++nk;
        }
    }
    REQUIRE(nk > 0);
    REQUIRE(nb > 0);
    CHECK(known / static_cast<double>(nk) > background / static_cast<double>(nb));
}

// Does not hold with the hinge + cross-entropy objective: see the decisions notes.
TEST_CASE("trained class means approach an equiangular frame" * doctest::may_fail()) {
    const auto& t = trained();
    const auto adapted = adapt_concepts(t.model);
    const std::size_t k = t.model.layout.n_classes();
    std::vector<Vector> means(k, Vector::Zero(static_cast<Eigen::Index>(t.model.layout.n_disc())));
    std::vector<std::size_t> counts(k, 0);
    for (const auto& s : t.setup.samples) {
        if (s.cls < 0) continue;
        means[static_cast<std::size_t>(s.cls)] += forward_region(t.model, adapted, s.feature).disc_activations;
        ++counts[static_cast<std::size_t>(s.cls)];
    }
    Vector centre = Vector::Zero(means[0].size());
    for (std::size_t j = 0; j < k; ++j) {
        means[j] /= static_cast<double>(counts[j]);
        centre += means[j] / static_cast<double>(k);
    }
    const double target = -1.0 / static_cast<double>(k - 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            worst = std::max(worst, std::abs(cosine(means[i] - centre, means[j] - centre) - target));
    MESSAGE("worst deviation from -1/(K-1): " << worst);
    CHECK(worst <= 0.15);
}
