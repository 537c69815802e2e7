#include "doctest.h"

#include "bench_common.hpp"
#include "fixtures.hpp"

#include "cdm/errors.hpp"
#include "cdm/io.hpp"
#include "cdm/json_io.hpp"
#include "cdm/rng.hpp"

#include <cmath>
#include <limits>
#include <set>

using namespace cdm;

TEST_CASE("documented defaults") {
    const RunConfig c;
    CHECK(c.catalog.llm_count == 100);
    CHECK(c.catalog.residual_count == 50);
    CHECK(c.model.eta == 0.8);
    CHECK(c.model.margin == 0.5);
    CHECK(c.model.lambda == 0.01);
    CHECK(c.sgd.lr == 0.02);
    CHECK(c.sgd.batch_size == 16);
    CHECK(c.sgd.epochs == 50);
    CHECK(c.pipeline.nms_cap == 100);
    CHECK(c.pipeline.aose_conf == 0.05);
    CHECK(c.pipeline.wi_recall == 0.8);
    CHECK(c.loss.disc == 1.0);
    CHECK(c.loss.rec == 0.5);
    CHECK(c.loss.align == 0.1);
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("settings by dotted key") {
    RunConfig c;
    apply_setting(c, "sgd.lr", "0.5");
    apply_setting(c, "pipeline.use_cgr", "off");
    apply_setting(c, "catalog.llm_count", "12");
    apply_setting(c, "data.attribute_weight", "1.5");
    CHECK(c.sgd.lr == 0.5);
    CHECK_FALSE(c.pipeline.use_cgr);
    CHECK(c.catalog.llm_count == 12);
    CHECK(c.data.attribute_weight == 1.5);
    CHECK_THROWS_AS(apply_setting(c, "sgd.learning_rate", "1"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "sgd.lr", "fast"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "sgd.epochs", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "sgd.epochs", "2.5"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "pipeline.use_bg", "maybe"), ConfigError);
}

TEST_CASE("config text with comments and errors") {
    RunConfig c;
    apply_config_text(c, "# header\n\n  model.eta = 0.4   # inline\nseed=9\n", "t");
    CHECK(c.model.eta == 0.4);
    CHECK(c.seed == 9);
    try {
        apply_config_text(c, "seed = 1\nno equals here\n", "cfg.txt");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("cfg.txt:2") != std::string::npos);
    }
    CHECK_THROWS_AS(apply_config_text(c, "bogus.key = 1\n", "t"), ConfigError);
    CHECK_THROWS_AS(apply_config_file(c, "/nonexistent/dir/run.conf"), ConfigError);
}

TEST_CASE("validation rejects bad values") {
    auto bad = [](const std::string& key, const std::string& value) {
        RunConfig c;
        apply_setting(c, key, value);
        CHECK_THROWS_AS(validate(c), ConfigError);
    };
    bad("model.d_u", "200");
    bad("model.margin", "0");
    bad("sgd.batch_size", "0");
    bad("loss.disc", "-1");
    bad("data.noise", "-0.5");
    bad("pipeline.nms_iou", "2");
    bad("embed.dim", "0");
    bad("catalog.n_min", "0");
}

TEST_CASE("rendered config reads back to the same values") {
    RunConfig c = bench::preset(3);
    apply_setting(c, "pipeline.use_shared", "false");
    apply_setting(c, "provider.url", "http://localhost:1");
    const std::string text = render_config(c);
    RunConfig back;
    apply_config_text(back, text, "rendered");
    CHECK(config_entries(back) == config_entries(c));
    CHECK(render_config(back) == text);
    std::set<std::string> keys;
    for (const auto& [k, _] : config_entries(c)) CHECK(keys.insert(k).second);
}

TEST_CASE("record conversions round-trip") {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        Region r;
        r.image = "img" + std::to_string(t);
        r.feature = Vector(5);
        for (Eigen::Index i = 0; i < 5; ++i) r.feature(i) = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
        r.box = Box{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1), rng.uniform(0.01, 1)};
        r.label = t % 3 == 0 ? "cat" : (t % 3 == 1 ? kUnknownLabel : kBackgroundLabel);
        if (t % 3 == 0) r.concept_labels = {"furry", "small"};
        r.source = t % 2 ? "gmm" : "learned";
        CHECK(region_from_json(region_to_json(r)) == r);
        CHECK(region_from_json(Json::parse(region_to_json(r).dump())) == r);

        const GroundTruth g{r.image, r.box, "dog"};
        CHECK(ground_truth_from_json(Json::parse(ground_truth_to_json(g).dump())) == g);
        const Prediction p{r.image, r.box, kUnknownLabel, rng.uniform()};
        CHECK(prediction_from_json(Json::parse(prediction_to_json(p).dump())) == p);
    }
}

TEST_CASE("malformed records raise format errors") {
    Region r{"i", Vector::Ones(2), Box{}, "cat", {}, "learned"};
    Json j = region_to_json(r);
    j.erase("schema_version");
    CHECK_THROWS_AS(region_from_json(j), FormatError);
    j = region_to_json(r);
    j["schema_version"] = kSchemaVersion + 1;
    CHECK_THROWS_AS(region_from_json(j), FormatError);
    j = region_to_json(r);
    j["label"] = "";
    CHECK_THROWS_AS(region_from_json(j), FormatError);
    j = region_to_json(r);
    j["feature"] = "oops";
    CHECK_THROWS_AS(region_from_json(j), FormatError);
    r.label = kUnknownLabel;
    r.concept_labels = {"furry"};
    CHECK_THROWS_AS(region_from_json(region_to_json(r)), FormatError);
    Json p = prediction_to_json({"i", Box{}, "cat", 0.5});
    p["confidence"] = 1.5;
    CHECK_THROWS_AS(prediction_from_json(p), FormatError);
    Json b = box_to_json(Box{});
    b["w"] = 0.0;
    CHECK_THROWS_AS(box_from_json(b), FormatError);
}

TEST_CASE("metrics reports keep absences as null") {
    MetricsReport m;
    m.u_recall = 0.25;
    m.a_ose = 3;
    m.n_regions = 7;
    const Json j = metrics_to_json(m);
    CHECK(j.at("wi").is_null());
    CHECK(j.at("map_curr").is_null());
    CHECK(j.at("a_ose") == 3);
    CHECK(metrics_from_json(j) == m);
}

TEST_CASE("files round-trip byte for byte") {
    fixture::TempDir dir("cdm_io_files");
    const auto cfg = bench::preset(2, "data.train_images = 4\ndata.eval_images = 2\nsgd.epochs = 1\n");
    auto s = bench::setup(cfg);
    const Model model = train_loop(s.model, s.samples, cfg.sgd, cfg.loss).model;
    const auto preds = predict(model, s.world.eval_regions, cfg.pipeline);
    const auto report = run_eval(model, s.catalog, s.world.eval_regions, s.world.eval_gt, cfg.pipeline);
    REQUIRE_FALSE(preds.empty());

    auto twice = [&](const std::string& name, auto write, auto read) {
        const auto a = dir.file(name + ".a");
        write(a);
        const auto loaded = read(a);
        return std::pair{a, loaded};
    };
    {
        auto [a, loaded] = twice("regions", [&](const std::string& p) { write_regions(p, s.world.eval_regions); },
                                 [](const std::string& p) { return read_regions(p); });
        CHECK(loaded == s.world.eval_regions);
        write_regions(dir.file("regions.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("regions.b")));
    }
    {
        auto [a, loaded] = twice("gt", [&](const std::string& p) { write_ground_truth(p, s.world.eval_gt); },
                                 [](const std::string& p) { return read_ground_truth(p); });
        CHECK(loaded == s.world.eval_gt);
        write_ground_truth(dir.file("gt.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("gt.b")));
    }
    {
        auto [a, loaded] = twice("preds", [&](const std::string& p) { write_predictions(p, preds); },
                                 [](const std::string& p) { return read_predictions(p); });
        CHECK(loaded == preds);
        write_predictions(dir.file("preds.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("preds.b")));
    }
    {
        auto [a, loaded] = twice("metrics", [&](const std::string& p) { write_metrics(p, report); },
                                 [](const std::string& p) { return read_metrics(p); });
        CHECK(loaded == report);
        write_metrics(dir.file("metrics.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("metrics.b")));
    }
    {
        auto [a, loaded] = twice("ckpt", [&](const std::string& p) { save_checkpoint(p, model); },
                                 [](const std::string& p) { return load_checkpoint(p); });
        CHECK(loaded.params.flatten() == model.params.flatten());
        CHECK(loaded.layout == model.layout);
        save_checkpoint(dir.file("ckpt.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("ckpt.b")));
        CHECK(predict(loaded, s.world.eval_regions, cfg.pipeline) == preds);
    }
    {
        auto [a, loaded] = twice("catalog", [&](const std::string& p) { save_catalog(p, s.catalog); },
                                 [](const std::string& p) { return load_catalog(p); });
        save_catalog(dir.file("catalog.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("catalog.b")));
    }
    {
        auto [a, loaded] = twice("table", [&](const std::string& p) { save_table(p, s.table); },
                                 [](const std::string& p) { return load_table(p); });
        save_table(dir.file("table.b"), loaded);
        CHECK(fixture::read_bytes(a) == fixture::read_bytes(dir.file("table.b")));
    }
}

TEST_CASE("reading missing or broken files fails cleanly") {
    fixture::TempDir dir("cdm_io_broken");
    CHECK_THROWS_AS(read_regions(dir.file("missing.jsonl")), FormatError);
    write_text_file(dir.file("bad.jsonl"), "{\"schema_version\": 1,\n");
    CHECK_THROWS_AS(read_regions(dir.file("bad.jsonl")), FormatError);
    write_text_file(dir.file("bad.json"), "[1, 2");
    CHECK_THROWS_AS(read_metrics(dir.file("bad.json")), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir.file("bad.json")), FormatError);
}

TEST_CASE("identical seeds give identical artifacts") {
    const auto cfg = bench::preset(4, "data.train_images = 6\ndata.eval_images = 3\nsgd.epochs = 2\n");
    auto one = bench::setup(cfg);
    auto two = bench::setup(cfg);
    CHECK(catalog_to_json(one.catalog).dump() == catalog_to_json(two.catalog).dump());
    const Model a = train_loop(one.model, one.samples, cfg.sgd, cfg.loss).model;
    const Model b = train_loop(two.model, two.samples, cfg.sgd, cfg.loss).model;
    CHECK(model_to_json(a).dump() == model_to_json(b).dump());
    CHECK(run_eval(a, one.catalog, one.world.eval_regions, one.world.eval_gt, cfg.pipeline) ==
          run_eval(b, two.catalog, two.world.eval_regions, two.world.eval_gt, cfg.pipeline));
}
