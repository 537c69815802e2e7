#include "cdm/model.hpp"

#include "cdm/disc.hpp"
#include "cdm/errors.hpp"
#include "cdm/rng.hpp"
#include "cdm/shared.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace cdm {

int ConceptLayout::class_index(const std::string& cls) const {
    auto it = std::find(classes.begin(), classes.end(), cls);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

Vector ConceptLayout::concept_labels(int cls) const {
    Vector y = Vector::Zero(static_cast<Eigen::Index>(n_llm()));
    for (int idx : class_concepts.at(static_cast<std::size_t>(cls))) y(idx) = 1.0;
    return y;
}

std::string negative_concept_text(const std::string& attribute) { return "not " + attribute; }

ConceptLayout layout_from_catalog(const ConceptCatalog& catalog) {
    ConceptLayout l;
    l.classes = catalog.task.known_classes;
    for (const auto& p : catalog.discriminative) {
        ConceptLayout::Pair idx{l.class_index(p.class_a), l.class_index(p.class_b), l.class_index(p.positive_class)};
        if (idx.class_a < 0 || idx.class_b < 0 || idx.positive < 0)
            throw FormatError("catalog pair references a class outside the known set");
        l.pairs.push_back(idx);
        l.disc_texts.push_back(p.attribute);
        l.disc_texts.push_back(negative_concept_text(p.attribute));
    }
    l.class_concepts.assign(l.classes.size(), {});
    for (const auto* c : catalog.llm_concepts()) {
        const int k = static_cast<int>(l.shared_texts.size());
        l.shared_texts.push_back(c->attribute);
        l.shared_ids.push_back(c->id);
        for (const auto& cls : c->possessing_classes)
            l.class_concepts[static_cast<std::size_t>(l.class_index(cls))].push_back(k);
    }
    l.residual_count = catalog.shared.size() - catalog.llm_count();
    return l;
}

// ---- ModelParams ----------------------------------------------------------

std::size_t ModelParams::size() const {
    std::size_t n = 0;
    for_each_block([&](const char*, const auto& b) { n += static_cast<std::size_t>(b.size()); });
    return n;
}

double& ModelParams::at(std::size_t flat_index) {
    double* hit = nullptr;
    std::size_t offset = 0;
    for_each_block([&](const char*, auto& b) {
        const auto n = static_cast<std::size_t>(b.size());
        if (!hit && flat_index < offset + n) hit = b.data() + (flat_index - offset);
        offset += n;
    });
    if (!hit) throw LookupError("flat parameter index out of range");
    return *hit;
}

double ModelParams::at(std::size_t flat_index) const { return const_cast<ModelParams*>(this)->at(flat_index); }

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for_each_block([&](const char*, const auto& b) { out.insert(out.end(), b.data(), b.data() + b.size()); });
    return out;
}

void ModelParams::assign(const std::vector<double>& flat) {
    if (flat.size() != size()) throw DimensionError("parameter vector length does not match the model");
    std::size_t offset = 0;
    for_each_block([&](const char*, auto& b) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                  flat.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(b.size())), b.data());
        offset += static_cast<std::size_t>(b.size());
    });
}

std::string ModelParams::block_of(std::size_t flat_index) const {
    std::string name;
    std::size_t offset = 0;
    for_each_block([&](const char* n, const auto& b) {
        const auto sz = static_cast<std::size_t>(b.size());
        if (name.empty() && flat_index < offset + sz) name = n;
        offset += sz;
    });
    if (name.empty()) throw LookupError("flat parameter index out of range");
    return name;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.for_each_block([](const char*, auto& b) { b.setZero(); });
    return z;
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
    std::vector<double*> mine;
    for_each_block([&](const char*, auto& b) { mine.push_back(b.data()); });
    std::size_t i = 0;
    other.for_each_block([&](const char*, const auto& b) {
        double* dst = mine[i++];
        for (Eigen::Index k = 0; k < b.size(); ++k) dst[k] += scale * b.data()[k];
    });
}

bool ModelParams::all_finite() const {
    bool ok = true;
    for_each_block([&](const char*, const auto& b) { ok = ok && b.allFinite(); });
    return ok;
}

// ---- Model ----------------------------------------------------------------

void Model::refresh_dict_known() { dict_known = shared_adapter_images(*this); }

namespace {

Matrix embedding_matrix(const EmbeddingTable& table, const std::vector<std::string>& texts) {
    Matrix m(static_cast<Eigen::Index>(table.dim()), static_cast<Eigen::Index>(texts.size()));
    for (std::size_t i = 0; i < texts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = table.lookup(texts[i]).vector;
    return m;
}

Matrix random_matrix(Rng rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = stddev * rng.normal();
    return m;
}

}  // namespace

Matrix shared_adapter_images(const Model& model) { return model.params.shared_adapter.apply(model.shared_embeddings); }

Model init_model(const ConceptCatalog& catalog, const EmbeddingTable& embeddings, std::size_t d_in,
                 const ModelConfig& config, std::uint64_t seed) {
    if (catalog.task.known_classes.size() < 2) throw PreconditionError("init_model: need at least 2 known classes");
    if (catalog.discriminative.empty()) throw PreconditionError("init_model: catalog has no discriminative pairs");
    if (!(config.margin > 0.0)) throw PreconditionError("init_model: margin must be positive");
    if (config.lambda < 0.0) throw PreconditionError("init_model: lambda must be >= 0");

    Model m;
    m.config = config;
    m.init_seed = seed;
    m.layout = layout_from_catalog(catalog);
    m.frame = build_frame(config.frame_seed, config.d, config.d_u, config.d_v);
    m.disc_embeddings = embedding_matrix(embeddings, m.layout.disc_texts);
    m.shared_embeddings = embedding_matrix(embeddings, m.layout.shared_texts);

    const Rng root(seed);
    const auto d_e = embeddings.dim();
    const auto k_u = static_cast<Eigen::Index>(m.layout.n_disc());
    const auto k = static_cast<Eigen::Index>(m.layout.n_llm());
    const auto r = static_cast<Eigen::Index>(m.layout.residual_count);
    const auto dv = static_cast<Eigen::Index>(config.d_v);

    m.params.head = ConceptHeadParams::init(root.split("head").seed(), d_in, config.hidden, config.d);
    m.params.disc_adapter = Adapter::init(root.split("disc.adapter").seed(), d_e, config.d_u);
    m.params.classifier = random_matrix(root.split("disc.classifier"), k_u, static_cast<Eigen::Index>(m.layout.n_classes()),
                                        1.0 / std::sqrt(static_cast<double>(k_u)));
    m.params.shared_adapter = Adapter::init(root.split("shared.adapter").seed(), d_e, config.d_v);
    m.params.encoder = random_matrix(root.split("shared.encoder"), k + r, dv, 1.0 / std::sqrt(static_cast<double>(dv)));
    m.params.dict_residual = random_matrix(root.split("shared.dict_residual"), dv, r, 1.0 / std::sqrt(static_cast<double>(dv)));

    m.refresh_dict_known();
    m.background.mean = Vector::Zero(static_cast<Eigen::Index>(config.d));
    m.background.basis = Matrix::Zero(static_cast<Eigen::Index>(config.d), 1);
    m.background.basis(0, 0) = 1.0;
    m.background.variance_threshold = config.bg_variance_threshold;
    m.background.degenerate = true;
    return m;
}

AdaptedConcepts adapt_concepts(const Model& model) {
    return {model.params.disc_adapter.apply(model.disc_embeddings),
            model.params.shared_adapter.apply(model.shared_embeddings)};
}

RegionForward forward_parts(const Model& model, const AdaptedConcepts& adapted, const Decomposition& parts) {
    RegionForward f;
    f.z = parts.u + parts.v + parts.f_bg;
    f.parts = parts;
    f.disc_activations = disc_activations(parts.coords_u, adapted.disc);
    f.s_cls = classify(model.params.classifier, f.disc_activations);
    f.shared_activations = shared_activations(parts.coords_v, adapted.shared, model.params.dict_residual);
    f.s_share = f.shared_activations.size() > 0 ? unknown_share_score(f.shared_activations) : 0.0;
    const auto bg = bg_score(model.background, f.z);
    f.s_bg = bg.score;
    f.bg_residual = bg.residual;
    return f;
}

RegionForward forward_region(const Model& model, const AdaptedConcepts& adapted, const Vector& feature) {
    const Vector z = concept_head_forward(model.params.head, feature);
    RegionForward f = forward_parts(model, adapted, decompose(model.frame, z));
    f.z = z;
    return f;
}

// ---- persistence ----------------------------------------------------------

namespace {

Json matrix_json(const Matrix& m) {
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const Json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("matrix payload has wrong length");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const Json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace

Json model_to_json(const Model& model) {
    const auto& c = model.config;
    Json config{{"d", c.d},           {"d_u", c.d_u},       {"d_v", c.d_v},
                {"hidden", c.hidden}, {"frame_seed", c.frame_seed}, {"margin", c.margin},
                {"lambda", c.lambda}, {"eta", c.eta},       {"bg_variance_threshold", c.bg_variance_threshold},
                {"bg_max_k", c.bg_max_k}};
    Json pairs = Json::array();
    for (const auto& p : model.layout.pairs) pairs.push_back({p.class_a, p.class_b, p.positive});
    Json layout{{"classes", model.layout.classes},         {"pairs", pairs},
                {"disc_texts", model.layout.disc_texts},   {"shared_texts", model.layout.shared_texts},
                {"shared_ids", model.layout.shared_ids},   {"class_concepts", model.layout.class_concepts},
                {"residual_count", model.layout.residual_count}};
    Json params = Json::object();
    model.params.for_each_block([&](const char* name, const auto& b) { params[name] = matrix_json(b); });
    const auto& bg = model.background;
    Json background{{"mean", vector_json(bg.mean)},
                    {"basis", matrix_json(bg.basis)},
                    {"variance_threshold", bg.variance_threshold},
                    {"total_variance", bg.total_variance},
                    {"degenerate", bg.degenerate}};
    return Json{{"schema_version", kSchemaVersion},
                {"init_seed", model.init_seed},
                {"config", config},
                {"layout", layout},
                {"params", params},
                {"disc_embeddings", matrix_json(model.disc_embeddings)},
                {"shared_embeddings", matrix_json(model.shared_embeddings)},
                {"dict_known", matrix_json(model.dict_known)},
                {"background", background}};
}

Model model_from_json(const Json& doc) {
    check_schema(doc, "checkpoint");
    Model m;
    try {
        const auto& c = doc.at("config");
        m.config.d = c.at("d").get<std::size_t>();
        m.config.d_u = c.at("d_u").get<std::size_t>();
        m.config.d_v = c.at("d_v").get<std::size_t>();
        m.config.hidden = c.at("hidden").get<std::size_t>();
        m.config.frame_seed = c.at("frame_seed").get<std::uint64_t>();
        m.config.margin = c.at("margin").get<double>();
        m.config.lambda = c.at("lambda").get<double>();
        m.config.eta = c.at("eta").get<double>();
        m.config.bg_variance_threshold = c.at("bg_variance_threshold").get<double>();
        m.config.bg_max_k = c.at("bg_max_k").get<std::size_t>();
        m.init_seed = doc.at("init_seed").get<std::uint64_t>();

        const auto& l = doc.at("layout");
        m.layout.classes = l.at("classes").get<std::vector<std::string>>();
        for (const auto& p : l.at("pairs")) m.layout.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()});
        m.layout.disc_texts = l.at("disc_texts").get<std::vector<std::string>>();
        m.layout.shared_texts = l.at("shared_texts").get<std::vector<std::string>>();
        m.layout.shared_ids = l.at("shared_ids").get<std::vector<int>>();
        m.layout.class_concepts = l.at("class_concepts").get<std::vector<std::vector<int>>>();
        m.layout.residual_count = l.at("residual_count").get<std::size_t>();

        const auto& p = doc.at("params");
        m.params.for_each_block([&](const char* name, auto& b) {
            const Matrix raw = matrix_from(p.at(name));
            if constexpr (std::is_same_v<std::decay_t<decltype(b)>, Vector>) {
                if (raw.cols() != 1) throw FormatError(std::string("checkpoint block ") + name + " must be a vector");
                b = raw.col(0);
            } else {
                b = raw;
            }
        });
        m.disc_embeddings = matrix_from(doc.at("disc_embeddings"));
        m.shared_embeddings = matrix_from(doc.at("shared_embeddings"));
        m.dict_known = matrix_from(doc.at("dict_known"));
        const auto& bg = doc.at("background");
        m.background.mean = vector_from(bg.at("mean"));
        m.background.basis = matrix_from(bg.at("basis"));
        m.background.variance_threshold = bg.at("variance_threshold").get<double>();
        m.background.total_variance = bg.at("total_variance").get<double>();
        m.background.degenerate = bg.at("degenerate").get<bool>();
    } catch (const Json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    m.frame = build_frame(m.config.frame_seed, m.config.d, m.config.d_u, m.config.d_v);
    if (m.params.head.output_dim() != m.config.d || m.params.classifier.rows() != static_cast<Eigen::Index>(m.layout.n_disc()) ||
        m.params.classifier.cols() != static_cast<Eigen::Index>(m.layout.n_classes()) ||
        m.dict_known.cols() != static_cast<Eigen::Index>(m.layout.n_llm()))
        throw FormatError("checkpoint: parameter shapes disagree with the concept layout");
    return m;
}

void save_checkpoint(const std::string& path, const Model& model, const Json& extra) {
    Json doc = model_to_json(model);
    if (!extra.empty()) doc["extra"] = extra;
    write_json_file(path, doc);
}

Model load_checkpoint(const std::string& path) { return model_from_json(read_json_file(path)); }

}  // namespace cdm
