#include "cdm/synthetic.hpp"

#include "cdm/errors.hpp"
#include "cdm/metrics.hpp"
#include "cdm/model.hpp"
#include "cdm/numeric.hpp"
#include "cdm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

namespace cdm {

void validate(const SyntheticConfig& c) {
    if (c.n_known < 2) throw PreconditionError("synthetic: n_known must be >= 2");
    if (!(c.noise >= 0.0) || !std::isfinite(c.noise)) throw PreconditionError("synthetic: noise must be >= 0");
    if (!(c.context >= 0.0) || !std::isfinite(c.context)) throw PreconditionError("synthetic: context must be >= 0");
    if (!(c.confusion >= 0.0 && c.confusion <= 1.0)) throw PreconditionError("synthetic: confusion must lie in [0, 1]");
    if (!(c.attribute_weight > 0.0) || !std::isfinite(c.attribute_weight))
        throw PreconditionError("synthetic: attribute_weight must be > 0");
    if (c.novel_attributes >= c.n_attributes) throw PreconditionError("synthetic: novel_attributes must be < n_attributes");
    const std::size_t pool = c.n_attributes - c.novel_attributes;
    if (c.attrs_per_class == 0 || c.attrs_per_class > pool)
        throw PreconditionError("synthetic: attrs_per_class must lie in [1, n_attributes - novel_attributes]");
    if (c.unknown_known_attrs > c.attrs_per_class)
        throw PreconditionError("synthetic: unknown_known_attrs must be <= attrs_per_class");
    double combos = 1.0;
    for (std::size_t i = 0; i < c.attrs_per_class; ++i)
        combos = combos * static_cast<double>(pool - i) / static_cast<double>(i + 1);
    if (combos < static_cast<double>(c.n_known))
        throw PreconditionError("synthetic: too few attribute combinations for distinct known classes");
    const std::size_t needed = c.n_known - 1 + c.n_unknown + c.n_attributes + c.bg_rank;
    if (c.feature_dim < needed)
        throw PreconditionError("synthetic: feature_dim must be >= " + std::to_string(needed));
    if (c.bg_rank == 0) throw PreconditionError("synthetic: bg_rank must be >= 1");
    if (c.min_objects == 0 || c.max_objects < c.min_objects)
        throw PreconditionError("synthetic: need 1 <= min_objects <= max_objects");
    if (c.train_images == 0) throw PreconditionError("synthetic: train_images must be >= 1");
    if (!(c.unknown_miss_rate >= 0.0 && c.unknown_miss_rate <= 1.0))
        throw PreconditionError("synthetic: unknown_miss_rate must lie in [0, 1]");
    if (c.gmm_components == 0) throw PreconditionError("synthetic: gmm_components must be >= 1");
}

namespace {

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%02zu", prefix, i);
    return buf;
}

std::vector<int> sample_subset(Rng& rng, std::vector<int> pool, std::size_t n) {
    rng.shuffle(pool);
    pool.resize(std::min(n, pool.size()));
    std::sort(pool.begin(), pool.end());
    return pool;
}

Box jitter(Rng& rng, const Box& b) {
    for (int attempt = 0; attempt < 20; ++attempt) {
        Box j{b.x + 0.05 * b.w * rng.normal(), b.y + 0.05 * b.h * rng.normal(), b.w * std::exp(0.05 * rng.normal()),
              b.h * std::exp(0.05 * rng.normal())};
        j = clamp_to_image(j);
        if (iou(j, b) >= 0.6) return j;
    }
    return b;
}

GmmBoxPrior make_true_prior() {
    GmmBoxPrior p;
    const double means[3][4] = {{0.3, 0.35, 0.18, 0.2}, {0.7, 0.6, 0.25, 0.3}, {0.5, 0.5, 0.4, 0.35}};
    const double spread[3][4] = {{0.08, 0.08, 0.03, 0.03}, {0.08, 0.08, 0.04, 0.04}, {0.06, 0.06, 0.05, 0.05}};
    for (int k = 0; k < 3; ++k) {
        Vec4 m;
        Mat4 cov = Mat4::Zero();
        for (int i = 0; i < 4; ++i) {
            m(i) = means[k][i];
            cov(i, i) = spread[k][i] * spread[k][i];
        }
        p.weights.push_back(1.0 / 3.0);
        p.means.push_back(m);
        p.covariances.push_back(cov);
    }
    return p;
}

// Feature-space layout shared by every region of the world.
struct Geometry {
    Matrix r_u;  // disc directions
    Matrix r_v;  // attribute prototypes (one column each)
    Matrix r_b;  // background subspace
    std::vector<Vector> class_signal;  // unit object signal per class (known, then unknown)
};

Geometry make_geometry(const SyntheticConfig& c, const SyntheticDataset& w, const Rng& root) {
    const auto nu = static_cast<Eigen::Index>(c.n_known - 1 + c.n_unknown);
    const auto nv = static_cast<Eigen::Index>(c.n_attributes);
    const auto nb = static_cast<Eigen::Index>(c.bg_rank);
    const Matrix frame = orthonormal_columns(root.split("frame").seed(), c.feature_dim,
                                             static_cast<std::size_t>(nu + nv + nb));
    Geometry g;
    g.r_u = frame.leftCols(nu);
    g.r_v = frame.middleCols(nu, nv);
    g.r_b = frame.rightCols(nb);

    const auto etf = etf_targets(c.n_known, c.n_known - 1);
    std::vector<Vector> dirs;
    for (std::size_t k = 0; k < c.n_known; ++k) {
        Vector d = Vector::Zero(nu);
        d.head(static_cast<Eigen::Index>(c.n_known - 1)) = etf[k];
        dirs.push_back(d);
    }
    for (std::size_t u = 0; u < c.n_unknown; ++u) {
        Vector d = c.confusion * dirs[static_cast<std::size_t>(w.look_alike[u])];
        d(static_cast<Eigen::Index>(c.n_known - 1 + u)) += std::sqrt(1.0 - c.confusion * c.confusion);
        dirs.push_back(d.normalized());
    }
    for (std::size_t cls = 0; cls < dirs.size(); ++cls) {
        Vector attrs = Vector::Zero(nv);
        for (int a : w.class_attributes[cls]) attrs(a) = 1.0;
        if (attrs.norm() > 0.0) attrs.normalize();
        const Vector signal = g.r_u * dirs[cls] + c.attribute_weight * (g.r_v * attrs);
        g.class_signal.push_back(signal.normalized());
    }
    return g;
}

Vector gaussian(Rng& rng, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

Vector background_feature(const SyntheticConfig& c, const Geometry& g, Rng& rng) {
    const auto nb = g.r_b.cols();
    return g.r_b * gaussian(rng, nb) / std::sqrt(static_cast<double>(nb)) +
           c.noise * gaussian(rng, static_cast<Eigen::Index>(c.feature_dim));
}

Vector object_feature(const SyntheticConfig& c, const Geometry& g, std::size_t cls, Rng& rng) {
    const auto nb = g.r_b.cols();
    return g.class_signal[cls] + c.context * (g.r_b * gaussian(rng, nb)) / std::sqrt(static_cast<double>(nb)) +
           c.noise * gaussian(rng, static_cast<Eigen::Index>(c.feature_dim));
}

struct Object {
    Box box;
    std::size_t cls;  // into known ++ unknown
};

std::vector<Box> sample_objects(const SyntheticConfig& c, const GmmBoxPrior& prior, Rng& rng) {
    const std::size_t n = c.min_objects + rng.below(c.max_objects - c.min_objects + 1);
    std::vector<Box> boxes;
    for (int attempt = 0; attempt < 200 && boxes.size() < n; ++attempt) {
        const Box b = gmm_sample(prior, 1, rng.next_u64()).front();
        if (b.w < 0.05 || b.h < 0.05) continue;
        bool clear = true;
        for (const auto& o : boxes) clear = clear && iou(o, b) < 0.3;
        if (clear) boxes.push_back(b);
    }
    return boxes;
}

std::vector<Box> background_boxes(const std::vector<Object>& objects, std::size_t n, Rng& rng) {
    std::vector<Box> out;
    for (int attempt = 0; attempt < 100 && out.size() < n; ++attempt) {
        const Box b = clamp_to_image({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.3),
                                      rng.uniform(0.05, 0.3)});
        bool clear = true;
        for (const auto& o : objects) clear = clear && iou(o.box, b) < 0.3;
        if (clear) out.push_back(b);
    }
    return out;
}

std::vector<std::string> attribute_texts(const SyntheticDataset& w, std::size_t cls) {
    std::vector<std::string> out;
    for (int a : w.class_attributes[cls]) out.push_back(w.attributes[static_cast<std::size_t>(a)]);
    return out;
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticConfig& c, const CatalogOptions& catalog) {
    validate(c);
    SyntheticDataset w;
    w.config = c;
    const Rng root(c.seed);
    for (std::size_t i = 0; i < c.n_known; ++i) w.known_classes.push_back(numbered("class", i));
    for (std::size_t i = 0; i < c.n_unknown; ++i) w.unknown_classes.push_back(numbered("novel", i));
    for (std::size_t i = 0; i < c.n_attributes; ++i) w.attributes.push_back(numbered("attr", i));

    Rng arng = root.split("attributes");
    const std::size_t pool_size = c.n_attributes - c.novel_attributes;
    std::vector<int> pool(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) pool[i] = static_cast<int>(i);
    std::set<std::vector<int>> rows;
    while (w.class_attributes.size() < c.n_known) {
        auto row = sample_subset(arng, pool, c.attrs_per_class);
        if (rows.insert(row).second) w.class_attributes.push_back(row);
    }
    for (std::size_t u = 0; u < c.n_unknown; ++u) {
        const std::size_t parent = u % c.n_known;
        w.look_alike.push_back(static_cast<int>(parent));
        const auto& prow = w.class_attributes[parent];
        std::vector<int> row = sample_subset(arng, prow, c.unknown_known_attrs);
        if (c.novel_attributes > 0 && row.size() < c.attrs_per_class)
            row.push_back(static_cast<int>(pool_size + u % c.novel_attributes));
        std::vector<int> others;
        for (int a : pool)
            if (std::find(prow.begin(), prow.end(), a) == prow.end()) others.push_back(a);
        const auto extra = sample_subset(arng, others, c.attrs_per_class - row.size());
        row.insert(row.end(), extra.begin(), extra.end());
        std::sort(row.begin(), row.end());
        w.class_attributes.push_back(row);
    }

    const Geometry geo = make_geometry(c, w, root);
    w.true_box_prior = make_true_prior();

    Rng trng = root.split("train");
    std::vector<Box> train_boxes;
    for (std::size_t i = 0; i < c.train_images; ++i) {
        const std::string image = numbered("train", i);
        std::vector<Object> objects;
        for (const auto& b : sample_objects(c, w.true_box_prior, trng))
            objects.push_back({b, trng.below(c.n_known)});
        for (const auto& o : objects) {
            train_boxes.push_back(o.box);
            const auto texts = attribute_texts(w, o.cls);
            w.train.push_back({image, object_feature(c, geo, o.cls, trng), o.box, w.known_classes[o.cls], texts, "learned"});
            w.train.push_back(
                {image, object_feature(c, geo, o.cls, trng), jitter(trng, o.box), w.known_classes[o.cls], texts, "learned"});
        }
        for (const auto& b : background_boxes(objects, c.bg_proposals, trng))
            w.train.push_back({image, background_feature(c, geo, trng), b, kBackgroundLabel, {}, "learned"});
    }

    const GmmFit fit = gmm_fit_em(train_boxes, std::min(c.gmm_components, train_boxes.size()), 200, 1e-8,
                                  root.split("gmm").seed());
    w.fitted_box_prior = fit.prior;

    Rng erng = root.split("eval");
    const std::size_t n_classes = c.n_known + c.n_unknown;
    for (std::size_t i = 0; i < c.eval_images; ++i) {
        const std::string image = numbered("eval", i);
        std::vector<Object> objects;
        for (const auto& b : sample_objects(c, w.true_box_prior, erng)) objects.push_back({b, erng.below(n_classes)});
        auto label_of = [&](std::size_t cls) {
            return cls < c.n_known ? w.known_classes[cls] : std::string(kUnknownLabel);
        };
        auto texts_of = [&](std::size_t cls) {
            return cls < c.n_known ? attribute_texts(w, cls) : std::vector<std::string>{};
        };
        for (const auto& o : objects) {
            w.eval_gt.push_back({image, o.box, label_of(o.cls)});
            const bool missed = o.cls >= c.n_known && erng.uniform() < c.unknown_miss_rate;
            if (missed) continue;
            const std::size_t n_props = 1 + erng.below(2);
            for (std::size_t k = 0; k < n_props; ++k)
                w.eval_regions.push_back({image, object_feature(c, geo, o.cls, erng), jitter(erng, o.box),
                                          label_of(o.cls), texts_of(o.cls), "learned"});
        }
        for (const auto& b : background_boxes(objects, c.bg_proposals, erng))
            w.eval_regions.push_back({image, background_feature(c, geo, erng), b, kBackgroundLabel, {}, "learned"});
        if (c.gmm_samples > 0) {
            for (const auto& b : gmm_sample(w.fitted_box_prior, c.gmm_samples, erng.next_u64())) {
                double best = 0.0;
                const Object* hit = nullptr;
                for (const auto& o : objects) {
                    const double v = iou(o.box, b);
                    if (v > best) {
                        best = v;
                        hit = &o;
                    }
                }
                if (hit && best >= 0.5)
                    w.eval_regions.push_back({image, object_feature(c, geo, hit->cls, erng), b, label_of(hit->cls),
                                              texts_of(hit->cls), "gmm"});
                else
                    w.eval_regions.push_back({image, background_feature(c, geo, erng), b, kBackgroundLabel, {}, "gmm"});
            }
        }
    }
    w.provider_records = record_provider(w, catalog);
    return w;
}

namespace {

// Answers provider queries straight from the attribute matrix and records them.
class MatrixProvider : public ConceptProvider {
public:
    explicit MatrixProvider(const SyntheticDataset& w) : w_(w) {}

    Json query(const Json& request) override {
        const std::string kind = request.at("kind").get<std::string>();
        const Json& payload = request.at("payload");
        Json response;
        if (kind == "discriminative") {
            const auto a = row(payload.at("a").get<std::string>());
            const auto b = row(payload.at("b").get<std::string>());
            int pick = -1;
            std::string positive;
            for (std::size_t i = 0; i < w_.attributes.size() && pick < 0; ++i) {
                if (a.count(static_cast<int>(i)) != b.count(static_cast<int>(i))) {
                    pick = static_cast<int>(i);
                    positive = a.count(pick) ? payload.at("a").get<std::string>() : payload.at("b").get<std::string>();
                }
            }
            if (pick < 0) throw ProviderError("synthetic provider: classes have identical attributes");
            response = Json{{"attributes", {w_.attributes[static_cast<std::size_t>(pick)]}}, {"positive", positive}};
        } else if (kind == "shared") {
            const auto a = row(payload.at("a").get<std::string>());
            const auto b = row(payload.at("b").get<std::string>());
            const auto n_min = payload.at("n_min").get<std::size_t>();
            std::vector<std::string> out;
            for (int i : a)
                if (b.count(i)) out.push_back(w_.attributes[static_cast<std::size_t>(i)]);
            std::set<int> either(a.begin(), a.end());
            either.insert(b.begin(), b.end());
            for (int i : either) {
                if (out.size() >= n_min) break;
                const auto& t = w_.attributes[static_cast<std::size_t>(i)];
                if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
            }
            response = Json{{"attributes", out}};
        } else if (kind == "invert") {
            const auto attr = payload.at("attribute").get<std::string>();
            const auto it = std::find(w_.attributes.begin(), w_.attributes.end(), attr);
            if (it == w_.attributes.end()) throw ProviderError("synthetic provider: unknown attribute " + attr);
            const int idx = static_cast<int>(it - w_.attributes.begin());
            std::vector<std::string> out;
            for (std::size_t cls = 0; cls < w_.class_attributes.size(); ++cls) {
                const auto& r = w_.class_attributes[cls];
                if (std::find(r.begin(), r.end(), idx) != r.end()) out.push_back(name(cls));
            }
            response = Json{{"attributes", out}};
        } else {
            throw ProviderError("synthetic provider: unsupported kind " + kind);
        }
        records.insert(canonical_request(request), response);
        return response;
    }

    ResponseCache records;

private:
    std::string name(std::size_t cls) const {
        return cls < w_.known_classes.size() ? w_.known_classes[cls] : w_.unknown_classes[cls - w_.known_classes.size()];
    }
    std::set<int> row(const std::string& cls) const {
        for (std::size_t i = 0; i < w_.class_attributes.size(); ++i)
            if (name(i) == cls) return {w_.class_attributes[i].begin(), w_.class_attributes[i].end()};
        throw ProviderError("synthetic provider: unknown class " + cls);
    }

    const SyntheticDataset& w_;
};

}  // namespace

ResponseCache record_provider(const SyntheticDataset& world, const CatalogOptions& options) {
    MatrixProvider provider(world);
    build_catalog(world.known_classes, provider, options);
    return provider.records;
}

Json world_to_json(const SyntheticDataset& w) {
    const auto& c = w.config;
    Json config{{"n_known", c.n_known},
                {"n_unknown", c.n_unknown},
                {"n_attributes", c.n_attributes},
                {"attrs_per_class", c.attrs_per_class},
                {"novel_attributes", c.novel_attributes},
                {"unknown_known_attrs", c.unknown_known_attrs},
                {"feature_dim", c.feature_dim},
                {"noise", c.noise},
                {"context", c.context},
                {"confusion", c.confusion},
                {"attribute_weight", c.attribute_weight},
                {"bg_rank", c.bg_rank},
                {"min_objects", c.min_objects},
                {"max_objects", c.max_objects},
                {"train_images", c.train_images},
                {"eval_images", c.eval_images},
                {"unknown_miss_rate", c.unknown_miss_rate},
                {"bg_proposals", c.bg_proposals},
                {"gmm_components", c.gmm_components},
                {"gmm_samples", c.gmm_samples},
                {"seed", c.seed}};
    auto prior_json = [](const GmmBoxPrior& p) {
        Json comps = Json::array();
        for (std::size_t k = 0; k < p.components(); ++k) {
            std::vector<double> cov(p.covariances[k].data(), p.covariances[k].data() + 16);
            comps.push_back({{"weight", p.weights[k]},
                             {"mean", std::vector<double>(p.means[k].data(), p.means[k].data() + 4)},
                             {"covariance", cov}});
        }
        return comps;
    };
    return Json{{"schema_version", kSchemaVersion},
                {"config", config},
                {"known_classes", w.known_classes},
                {"unknown_classes", w.unknown_classes},
                {"attributes", w.attributes},
                {"class_attributes", w.class_attributes},
                {"look_alike", w.look_alike},
                {"true_box_prior", prior_json(w.true_box_prior)},
                {"fitted_box_prior", prior_json(w.fitted_box_prior)}};
}

void world_from_json(const Json& doc, SyntheticDataset& w) {
    check_schema(doc, "world file");
    try {
        const auto& c = doc.at("config");
        auto& o = w.config;
        o.n_known = c.at("n_known").get<std::size_t>();
        o.n_unknown = c.at("n_unknown").get<std::size_t>();
        o.n_attributes = c.at("n_attributes").get<std::size_t>();
        o.attrs_per_class = c.at("attrs_per_class").get<std::size_t>();
        o.novel_attributes = c.at("novel_attributes").get<std::size_t>();
        o.unknown_known_attrs = c.at("unknown_known_attrs").get<std::size_t>();
        o.feature_dim = c.at("feature_dim").get<std::size_t>();
        o.noise = c.at("noise").get<double>();
        o.context = c.at("context").get<double>();
        o.confusion = c.at("confusion").get<double>();
        o.attribute_weight = c.at("attribute_weight").get<double>();
        o.bg_rank = c.at("bg_rank").get<std::size_t>();
        o.min_objects = c.at("min_objects").get<std::size_t>();
        o.max_objects = c.at("max_objects").get<std::size_t>();
        o.train_images = c.at("train_images").get<std::size_t>();
        o.eval_images = c.at("eval_images").get<std::size_t>();
        o.unknown_miss_rate = c.at("unknown_miss_rate").get<double>();
        o.bg_proposals = c.at("bg_proposals").get<std::size_t>();
        o.gmm_components = c.at("gmm_components").get<std::size_t>();
        o.gmm_samples = c.at("gmm_samples").get<std::size_t>();
        o.seed = c.at("seed").get<std::uint64_t>();
        w.known_classes = doc.at("known_classes").get<std::vector<std::string>>();
        w.unknown_classes = doc.at("unknown_classes").get<std::vector<std::string>>();
        w.attributes = doc.at("attributes").get<std::vector<std::string>>();
        w.class_attributes = doc.at("class_attributes").get<std::vector<std::vector<int>>>();
        w.look_alike = doc.at("look_alike").get<std::vector<int>>();
        auto prior_from = [](const Json& j) {
            GmmBoxPrior p;
            for (const auto& comp : j) {
                p.weights.push_back(comp.at("weight").get<double>());
                const auto m = comp.at("mean").get<std::vector<double>>();
                const auto cov = comp.at("covariance").get<std::vector<double>>();
                if (m.size() != 4 || cov.size() != 16) throw FormatError("world file: malformed box prior");
                p.means.push_back(Eigen::Map<const Vec4>(m.data()));
                p.covariances.push_back(Eigen::Map<const Mat4>(cov.data()));
            }
            return p;
        };
        w.true_box_prior = prior_from(doc.at("true_box_prior"));
        w.fitted_box_prior = prior_from(doc.at("fitted_box_prior"));
    } catch (const Json::exception& e) {
        throw FormatError(std::string("world file: ") + e.what());
    }
}

std::vector<std::string> save_dataset(const std::string& dir, const SyntheticDataset& w) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::vector<std::string> paths = {(fs::path(dir) / "world.json").string(),
                                            (fs::path(dir) / "train.jsonl").string(),
                                            (fs::path(dir) / "eval_regions.jsonl").string(),
                                            (fs::path(dir) / "eval_gt.jsonl").string(),
                                            (fs::path(dir) / "provider.json").string()};
    write_json_file(paths[0], world_to_json(w));
    write_regions(paths[1], w.train);
    write_regions(paths[2], w.eval_regions);
    write_ground_truth(paths[3], w.eval_gt);
    w.provider_records.save(paths[4]);
    return paths;
}

SyntheticDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    SyntheticDataset w;
    world_from_json(read_json_file((fs::path(dir) / "world.json").string()), w);
    w.train = read_regions((fs::path(dir) / "train.jsonl").string());
    w.eval_regions = read_regions((fs::path(dir) / "eval_regions.jsonl").string());
    w.eval_gt = read_ground_truth((fs::path(dir) / "eval_gt.jsonl").string());
    w.provider_records = ResponseCache::load((fs::path(dir) / "provider.json").string());
    return w;
}

EmbeddingTable embed_catalog(const ConceptCatalog& catalog, std::size_t d_e, std::uint64_t seed) {
    const ConceptLayout layout = layout_from_catalog(catalog);
    EmbeddingTable table(d_e);
    auto add = [&](const std::string& text) {
        if (!table.contains(text)) table.add(synthetic_embed(text, d_e, seed));
    };
    for (const auto& t : layout.disc_texts) add(t);
    for (const auto& t : layout.shared_texts) add(t);
    return table;
}

}  // namespace cdm
