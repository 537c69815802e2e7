// cdm: command-line front end for dataset generation, concept catalogs,
// training, scoring and evaluation.
#include "CLI11.hpp"

#include "cdm/catalog.hpp"
#include "cdm/config.hpp"
#include "cdm/embed.hpp"
#include "cdm/errors.hpp"
#include "cdm/io.hpp"
#include "cdm/model.hpp"
#include "cdm/pipeline.hpp"
#include "cdm/provider.hpp"
#include "cdm/synthetic.hpp"
#include "cdm/train.hpp"

#include <charconv>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cdm;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
};

// Tracks the stage being run and the files written so far, so a failure can
// name the stage and clean up.
struct Run {
    std::string command;
    std::string stage = "setup";
    std::vector<std::string> inputs;
    std::vector<std::string> written;

    void input(const std::string& path) {
        if (!fs::exists(path)) throw Error("missing input file " + path);
        inputs.push_back(path);
    }
    std::string output(const std::string& name, const std::string& dir) {
        const std::string path = (fs::path(dir) / name).string();
        for (const auto& in : inputs)
            if (fs::exists(path) && fs::equivalent(in, path)) throw Error("refusing to overwrite input file " + path);
        written.push_back(path);
        return path;
    }
};

RunConfig load_run_config(const Common& common, Run& run) {
    run.stage = "config";
    RunConfig cfg;
    if (!common.config_path.empty()) {
        run.input(common.config_path);
        apply_config_file(cfg, common.config_path);
    }
    for (const auto& kv : common.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (common.seed) cfg.seed = *common.seed;
    cfg.data.seed = cfg.seed;
    cfg.sgd.seed = cfg.seed;
    validate(cfg);
    fs::create_directories(common.out);
    return cfg;
}

int guarded(Run& run, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        for (const auto& p : run.written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        std::cerr << "cdm " << run.command << ": " << run.stage << " failed: " << e.what() << "\n";
        return 1;
    }
}

std::string num(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
std::string opt(const std::optional<T>& v) {
    if (!v) return "NA";
    if constexpr (std::is_same_v<T, double>)
        return num(*v);
    else
        return std::to_string(*v);
}

Json loss_json(const LossBreakdown& l) {
    return Json{{"disc", l.disc}, {"ce", l.ce},         {"sc", l.sc},      {"rec", l.rec},
                {"sparse", l.sparse}, {"align", l.align}, {"total", l.total}};
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string data_file(const std::string& explicit_path, const std::string& data_dir, const char* name) {
    if (!explicit_path.empty()) return explicit_path;
    if (data_dir.empty()) throw Error(std::string("need --data or an explicit path for ") + name);
    return (fs::path(data_dir) / name).string();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "# schema_version: " + std::to_string(kSchemaVersion) + "\n";
    out += "row,use_shared,use_bg,use_cgr,u_recall,wi,a_ose,map_prev,map_curr,map_both,known_accuracy\n";
    for (const auto& r : rows) {
        const auto& m = r.report;
        out += r.name + "," + (r.config.use_shared ? "1" : "0") + "," + (r.config.use_bg ? "1" : "0") + "," +
               (r.config.use_cgr ? "1" : "0") + "," + opt(m.u_recall) + "," + opt(m.wi) + "," + opt(m.a_ose) + "," +
               opt(m.map_prev) + "," + opt(m.map_curr) + "," + opt(m.map_both) + "," + opt(m.known_accuracy) + "\n";
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept decomposition open-world detection toolkit"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key = value configuration file");
        sub->add_option("--set", common.overrides, "override one configuration key (key=value)");
        sub->add_option("--seed", common.seed, "global seed");
        sub->add_option("--out", common.out, "output directory");
    };

    std::string data_dir, provider_file, classes_text, extend_path, new_classes_text;
    std::string catalog_path, embeddings_path, checkpoint_path, regions_path, gt_path, history_path;
    std::vector<std::string> metrics_paths;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic open-world dataset");
    add_common(gen);

    auto* concepts = app.add_subcommand("build-concepts", "build or extend the concept catalog");
    add_common(concepts);
    concepts->add_option("--data", data_dir, "dataset directory (known classes, provider records)");
    concepts->add_option("--provider", provider_file, "canned provider records (defaults to <data>/provider.json)");
    concepts->add_option("--classes", classes_text, "comma-separated known classes");
    concepts->add_option("--extend", extend_path, "existing catalog to extend");
    concepts->add_option("--new-classes", new_classes_text, "comma-separated classes added by --extend");

    auto* train = app.add_subcommand("train", "train the concept decomposition model");
    add_common(train);
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--catalog", catalog_path, "catalog file")->required();
    train->add_option("--embeddings", embeddings_path, "embedding table")->required();

    auto* score = app.add_subcommand("score", "write post-NMS predictions for a region file");
    add_common(score);
    score->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    score->add_option("--data", data_dir, "dataset directory");
    score->add_option("--regions", regions_path, "region file (defaults to <data>/eval_regions.jsonl)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    eval->add_option("--catalog", catalog_path, "catalog file")->required();
    eval->add_option("--data", data_dir, "dataset directory");
    eval->add_option("--regions", regions_path, "region file (defaults to <data>/eval_regions.jsonl)");
    eval->add_option("--gt", gt_path, "ground truth file (defaults to <data>/eval_gt.jsonl)");

    auto* ablate = app.add_subcommand("ablate", "evaluate the switch matrix off, shared, bg, cgr");
    add_common(ablate);
    ablate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    ablate->add_option("--catalog", catalog_path, "catalog file")->required();
    ablate->add_option("--data", data_dir, "dataset directory");
    ablate->add_option("--regions", regions_path, "region file (defaults to <data>/eval_regions.jsonl)");
    ablate->add_option("--gt", gt_path, "ground truth file (defaults to <data>/eval_gt.jsonl)");

    auto* report = app.add_subcommand("report", "summarize loss history and metrics reports");
    add_common(report);
    report->add_option("--history", history_path, "loss history from train");
    report->add_option("--metrics", metrics_paths, "one or more metrics reports");

    CLI11_PARSE(app, argc, argv);

    Run run;
    run.command = app.get_subcommands().front()->get_name();

    if (*gen) {
        return guarded(run, [&] {
            const RunConfig cfg = load_run_config(common, run);
            run.stage = "generate";
            const SyntheticDataset world = gen_synthetic(cfg.data, cfg.catalog);
            run.stage = "write dataset";
            for (const char* name : {"world.json", "train.jsonl", "eval_regions.jsonl", "eval_gt.jsonl", "provider.json"})
                run.output(name, common.out);
            save_dataset(common.out, world);
            std::cout << "wrote " << world.train.size() << " training regions, " << world.eval_regions.size()
                      << " eval regions to " << common.out << "\n";
        });
    }

    if (*concepts) {
        return guarded(run, [&] {
            const RunConfig cfg = load_run_config(common, run);
            run.stage = "provider";
            std::unique_ptr<ConceptProvider> provider;
            if (!cfg.provider_url.empty()) {
                provider = std::make_unique<RemoteProvider>(cfg.provider_url, cfg.provider_path,
                                                            provider_cache_path(common.out));
            } else {
                const std::string path = data_file(provider_file, data_dir, "provider.json");
                run.input(path);
                provider = std::make_unique<FileProvider>(FileProvider::load(path));
            }
            run.stage = "catalog";
            ConceptCatalog catalog;
            if (!extend_path.empty()) {
                run.input(extend_path);
                catalog = extend_for_task(load_catalog(extend_path), split_list(new_classes_text), *provider,
                                          cfg.catalog.n_min);
            } else {
                std::vector<std::string> classes = split_list(classes_text);
                if (classes.empty()) {
                    const std::string world_path = data_file("", data_dir, "world.json");
                    run.input(world_path);
                    SyntheticDataset world;
                    world_from_json(read_json_file(world_path), world);
                    classes = world.known_classes;
                }
                catalog = build_catalog(classes, *provider, cfg.catalog);
            }
            run.stage = "embeddings";
            const EmbeddingTable table = embed_catalog(catalog, cfg.embed_dim, cfg.embed_seed);
            run.stage = "write catalog";
            save_catalog(run.output("catalog.json", common.out), catalog);
            save_table(run.output("embeddings.json", common.out), table);
            std::cout << "catalog: task " << catalog.task.task_index << ", " << catalog.discriminative.size()
                      << " pairs, " << catalog.llm_count() << " llm-derived + " << catalog.residual_count
                      << " residual concepts" << (catalog.shortfall ? " (shortfall)" : "") << "\n";
        });
    }

    if (*train) {
        return guarded(run, [&] {
            const RunConfig cfg = load_run_config(common, run);
            run.stage = "load inputs";
            const std::string train_path = data_file("", data_dir, "train.jsonl");
            run.input(train_path);
            run.input(catalog_path);
            run.input(embeddings_path);
            const auto regions = read_regions(train_path);
            if (regions.empty()) throw Error("training file is empty");
            const ConceptCatalog catalog = load_catalog(catalog_path);
            const EmbeddingTable table = load_table(embeddings_path);
            run.stage = "init model";
            Model model = init_model(catalog, table, static_cast<std::size_t>(regions.front().feature.size()),
                                     cfg.model, cfg.seed);
            const auto samples = training_samples(model, regions);
            run.stage = "train";
            const TrainResult result = train_loop(std::move(model), samples, cfg.sgd, cfg.loss);
            run.stage = "write checkpoint";
            Json entries = Json::array();
            for (std::size_t e = 0; e < result.history.size(); ++e) {
                Json row = loss_json(result.history[e]);
                row["epoch"] = e;
                entries.push_back(row);
            }
            const Json extra{{"sgd", {{"lr", cfg.sgd.lr}, {"batch_size", cfg.sgd.batch_size},
                                      {"epochs", cfg.sgd.epochs}, {"seed", cfg.sgd.seed}}},
                             {"loss_weights", {{"disc", cfg.loss.disc}, {"ce", cfg.loss.ce}, {"sc", cfg.loss.sc},
                                               {"rec", cfg.loss.rec}, {"sparse", cfg.loss.sparse},
                                               {"align", cfg.loss.align}}},
                             {"diverged", result.diverged}};
            save_checkpoint(run.output("checkpoint.json", common.out), result.model, extra);
            write_json_file(run.output("history.json", common.out),
                            Json{{"schema_version", kSchemaVersion}, {"diverged", result.diverged}, {"entries", entries}});
            std::cout << "loss " << num(result.history.front().total) << " -> " << num(result.history.back().total)
                      << (result.diverged ? " (diverged, kept last finite parameters)" : "") << "\n";
            if (result.diverged) {
                run.stage = "train";
                throw Error("training diverged");
            }
        });
    }

    if (*score) {
        return guarded(run, [&] {
            const RunConfig cfg = load_run_config(common, run);
            run.stage = "load inputs";
            const std::string path = data_file(regions_path, data_dir, "eval_regions.jsonl");
            run.input(path);
            run.input(checkpoint_path);
            const Model model = load_checkpoint(checkpoint_path);
            const auto regions = read_regions(path);
            run.stage = "score";
            const auto preds = predict(model, regions, cfg.pipeline);
            run.stage = "write predictions";
            write_predictions(run.output("predictions.jsonl", common.out), preds);
            std::cout << preds.size() << " predictions\n";
        });
    }

    if (*eval || *ablate) {
        return guarded(run, [&] {
            const RunConfig cfg = load_run_config(common, run);
            run.stage = "load inputs";
            const std::string rpath = data_file(regions_path, data_dir, "eval_regions.jsonl");
            const std::string gpath = data_file(gt_path, data_dir, "eval_gt.jsonl");
            for (const auto& p : {rpath, gpath, checkpoint_path, catalog_path}) run.input(p);
            const Model model = load_checkpoint(checkpoint_path);
            const ConceptCatalog catalog = load_catalog(catalog_path);
            const auto regions = read_regions(rpath);
            const auto gts = read_ground_truth(gpath);
            if (*eval) {
                run.stage = "evaluate";
                const MetricsReport m = run_eval(model, catalog, regions, gts, cfg.pipeline);
                run.stage = "write report";
                write_metrics(run.output("metrics.json", common.out), m);
                std::cout << metrics_to_json(m).dump(2) << "\n";
            } else {
                run.stage = "ablate";
                const auto rows = run_ablation(model, catalog, regions, gts, cfg.pipeline);
                run.stage = "write table";
                const std::string csv = ablation_csv(rows);
                write_text_file(run.output("ablation.csv", common.out), csv);
                std::cout << csv;
            }
        });
    }

    if (*report) {
        return guarded(run, [&] {
            load_run_config(common, run);
            run.stage = "load inputs";
            if (history_path.empty() && metrics_paths.empty()) throw Error("need --history and/or --metrics");
            std::string text, csv = "# schema_version: " + std::to_string(kSchemaVersion) + "\n";
            if (!history_path.empty()) {
                run.input(history_path);
                const Json h = read_json_file(history_path);
                check_schema(h, "history file");
                csv += "kind,epoch,disc,ce,sc,rec,sparse,align,total\n";
                text += "loss history (" + history_path + ")\n";
                text += "epoch        total         disc           ce           sc          rec       sparse        align\n";
                for (const auto& e : h.at("entries")) {
                    const auto ep = std::to_string(e.at("epoch").get<std::size_t>());
                    csv += "loss," + ep;
                    for (const char* k : {"disc", "ce", "sc", "rec", "sparse", "align", "total"})
                        csv += "," + num(e.at(k).get<double>());
                    csv += "\n";
                    char line[160];
                    std::snprintf(line, sizeof line, "%5s %12.6f %12.6f %12.6f %12.6f %12.6f %12.6f %12.6f\n", ep.c_str(),
                                  e.at("total").get<double>(), e.at("disc").get<double>(), e.at("ce").get<double>(),
                                  e.at("sc").get<double>(), e.at("rec").get<double>(), e.at("sparse").get<double>(),
                                  e.at("align").get<double>());
                    text += line;
                }
            }
            if (!metrics_paths.empty()) {
                csv += "kind,source,u_recall,wi,a_ose,map_prev,map_curr,map_both,known_accuracy\n";
                text += "metrics\n";
                for (const auto& p : metrics_paths) {
                    run.input(p);
                    const MetricsReport m = read_metrics(p);
                    const std::string row = opt(m.u_recall) + "," + opt(m.wi) + "," + opt(m.a_ose) + "," +
                                            opt(m.map_prev) + "," + opt(m.map_curr) + "," + opt(m.map_both) + "," +
                                            opt(m.known_accuracy);
                    csv += "metrics," + p + "," + row + "\n";
                    text += "  " + p + ": u_recall=" + opt(m.u_recall) + " wi=" + opt(m.wi) + " a_ose=" + opt(m.a_ose) +
                            " map_both=" + opt(m.map_both) + " known_accuracy=" + opt(m.known_accuracy) + "\n";
                }
            }
            run.stage = "write report";
            write_text_file(run.output("report.csv", common.out), csv);
            write_text_file(run.output("report.txt", common.out), text);
            std::cout << text;
        });
    }
    return 0;
}
