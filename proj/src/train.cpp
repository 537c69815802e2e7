#include "cdm/train.hpp"

#include "cdm/disc.hpp"
#include "cdm/errors.hpp"
#include "cdm/rng.hpp"
#include "cdm/shared.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdm {

namespace {

// Quantities whose sign switches a piecewise branch of the loss. `windowed`
// holds hinge arguments, SAE codes and the energy gap; `crossing` holds ReLU
// pre-activations and BCE clamp margins.
struct Kinks {
    std::vector<double> windowed;
    std::vector<double> crossing;
};

struct ItemState {
    HeadTrace trace;
    Decomposition parts;
    Vector alpha;
    Vector dalpha;
    Vector dcu;
    Vector dcv;
};

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void append(std::vector<double>& out, const Vector& v) { out.insert(out.end(), v.data(), v.data() + v.size()); }

LossBreakdown evaluate(const Model& m, const std::vector<Sample>& batch, const LossWeights& w, ModelParams* g,
                       Kinks* kinks) {
    if (batch.empty()) throw PreconditionError("loss: batch is empty");
    const auto& layout = m.layout;
    const auto& p = m.params;
    const AdaptedConcepts adapted = adapt_concepts(m);
    const auto k_llm = static_cast<Eigen::Index>(layout.n_llm());
    const auto k_res = p.dict_residual.cols();
    const auto d_u = static_cast<Eigen::Index>(m.frame.dim_u());
    const auto d_v = static_cast<Eigen::Index>(m.frame.dim_v());
    Matrix dict(d_v, k_llm + k_res);
    dict << m.dict_known, p.dict_residual;

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double lambda = m.config.lambda;
    Matrix d_eu = Matrix::Zero(d_u, adapted.disc.cols());
    Matrix d_ev = Matrix::Zero(d_v, adapted.shared.cols());
    std::vector<ItemState> items(batch.size());
    std::vector<std::size_t> known;
    std::vector<Vector> known_alphas;
    LossBreakdown sum;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = batch[i];
        if (static_cast<std::size_t>(s.feature.size()) != m.input_dim())
            throw DimensionError("loss: feature dimension does not match the concept head");
        ItemState& st = items[i];
        st.trace = concept_head_trace(p.head, s.feature);
        st.parts = decompose(m.frame, st.trace.z);
        if (kinks) {
            append(kinks->crossing, st.trace.pre1);
            append(kinks->crossing, st.trace.pre2);
        }
        if (s.cls < 0) continue;
        if (static_cast<std::size_t>(s.cls) >= layout.n_classes()) throw LookupError("loss: class index out of range");
        st.dcu = Vector::Zero(d_u);
        st.dcv = Vector::Zero(d_v);
        const Vector& cu = st.parts.coords_u;
        const Vector& cv = st.parts.coords_v;

        const Vector a_u = disc_activations(cu, adapted.disc);
        Vector da_u = Vector::Zero(a_u.size());
        for (std::size_t q = 0; q < layout.pairs.size(); ++q) {
            const auto& pair = layout.pairs[q];
            if (pair.class_a != s.cls && pair.class_b != s.cls) continue;
            const auto own = static_cast<Eigen::Index>(2 * q + (pair.positive == s.cls ? 0 : 1));
            const auto other = own ^ 1;
            const double arg = m.config.margin - (a_u(own) - a_u(other));
            if (kinks) kinks->windowed.push_back(arg);
            if (arg > 0.0) {
                sum.disc += arg;
                da_u(own) -= w.disc * inv_b;
                da_u(other) += w.disc * inv_b;
            }
        }

        const Vector logits = p.classifier.transpose() * a_u;
        const double top = logits.maxCoeff();
        const double lse = top + std::log((logits.array() - top).exp().sum());
        sum.ce += lse - logits(s.cls);
        if (g && w.ce != 0.0) {
            Vector dlogits = (logits.array() - lse).exp().matrix();
            dlogits(s.cls) -= 1.0;
            dlogits *= w.ce * inv_b;
            g->classifier.noalias() += a_u * dlogits.transpose();
            da_u.noalias() += p.classifier * dlogits;
        }
        if (g) {
            for (Eigen::Index k = 0; k < a_u.size(); ++k) {
                if (da_u(k) == 0.0) continue;
                Vector ge = Vector::Zero(d_u);
                cosine_backward(cu, adapted.disc.col(k), da_u(k), st.dcu, ge);
                d_eu.col(k) += ge;
            }
        }

        if (k_llm > 0) {
            Vector a_v(k_llm);
            for (Eigen::Index k = 0; k < k_llm; ++k) a_v(k) = cosine_or_zero(cv, adapted.shared.col(k));
            const Vector y = layout.concept_labels(s.cls);
            sum.sc += shared_bce_loss(a_v, y);
            if (kinks) {
                for (Eigen::Index k = 0; k < k_llm; ++k) {
                    const double raw = 0.5 * (a_v(k) + 1.0);
                    kinks->crossing.push_back(raw - kBceEpsilon);
                    kinks->crossing.push_back(1.0 - kBceEpsilon - raw);
                }
            }
            if (g && w.sc != 0.0) {
                const Vector da_v = shared_bce_grad(a_v, y) * (w.sc * inv_b);
                for (Eigen::Index k = 0; k < k_llm; ++k) {
                    if (da_v(k) == 0.0) continue;
                    Vector ge = Vector::Zero(d_v);
                    cosine_backward(cv, adapted.shared.col(k), da_v(k), st.dcv, ge);
                    d_ev.col(k) += ge;
                }
            }
        }

        const SaeOutput sae = sae_forward(p.encoder, dict, cv, lambda);
        sum.rec += sae.rec_loss;
        sum.sparse += sae.sparse_loss;
        if (kinks) append(kinks->windowed, sae.alpha);
        st.alpha = sae.alpha;
        if (g) {
            const Vector r = cv - sae.reconstruction;
            const double wr = w.rec * inv_b;
            st.dcv += (2.0 * wr) * r;
            st.dalpha = (-2.0 * wr) * (dict.transpose() * r);
            const double ws = w.sparse * inv_b * lambda;
            if (ws != 0.0) st.dalpha += ws * sae.alpha.unaryExpr([](double x) { return sign_of(x); });
            if (k_res > 0 && wr != 0.0)
                g->dict_residual.noalias() -= (2.0 * wr) * r * sae.alpha.tail(k_res).transpose();
        }
        known.push_back(i);
        known_alphas.push_back(sae.alpha);
    }

    const AlignTerms at = align_terms(m.dict_known, p.dict_residual, known_alphas);
    sum.align = at.value();
    if (kinks && !known_alphas.empty()) kinks->windowed.push_back(at.energy_known - at.energy_residual);
    if (g && w.align != 0.0) {
        if (k_llm > 0 && k_res > 0)
            g->dict_residual.noalias() += (2.0 * w.align) * (m.dict_known * (m.dict_known.transpose() * p.dict_residual));
        const double gap = sign_of(at.energy_known - at.energy_residual);
        if (gap != 0.0) {
            const double n = static_cast<double>(known.size());
            for (std::size_t i : known) {
                ItemState& st = items[i];
                if (k_llm > 0)
                    st.dalpha.head(k_llm) += (w.align * gap * 2.0 / (n * static_cast<double>(k_llm))) * st.alpha.head(k_llm);
                if (k_res > 0)
                    st.dalpha.tail(k_res) -= (w.align * gap * 2.0 / (n * static_cast<double>(k_res))) * st.alpha.tail(k_res);
            }
        }
    }

    if (g) {
        for (std::size_t i : known) {
            ItemState& st = items[i];
            const Vector& cv = st.parts.coords_v;
            g->encoder.noalias() += st.dalpha * cv.transpose();
            st.dcv.noalias() += p.encoder.transpose() * st.dalpha;
            const Vector dz = m.frame.q_u * st.dcu + m.frame.q_v * st.dcv;
            concept_head_backward(p.head, st.trace, batch[i].feature, dz, g->head);
        }
        g->disc_adapter.weight.noalias() += d_eu * m.disc_embeddings.transpose();
        g->disc_adapter.bias += d_eu.rowwise().sum();
        g->shared_adapter.weight.noalias() += d_ev * m.shared_embeddings.transpose();
        g->shared_adapter.bias += d_ev.rowwise().sum();
    }

    LossBreakdown out;
    out.disc = sum.disc * inv_b;
    out.ce = sum.ce * inv_b;
    out.sc = sum.sc * inv_b;
    out.rec = sum.rec * inv_b;
    out.sparse = sum.sparse * inv_b;
    out.align = sum.align;
    out.total = w.disc * out.disc + w.ce * out.ce + w.sc * out.sc + w.rec * out.rec + w.sparse * out.sparse +
                w.align * out.align;
    return out;
}

}  // namespace

LossBreakdown total_loss(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights) {
    return evaluate(model, batch, weights, nullptr, nullptr);
}

LossAndGrad loss_and_grad(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights) {
    LossAndGrad out{{}, model.params.zeros_like()};
    out.loss = evaluate(model, batch, weights, &out.grad, nullptr);
    return out;
}

std::vector<double> grad(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights) {
    return loss_and_grad(model, batch, weights).grad.flatten();
}

FdReport fd_check(const Model& model, const std::vector<Sample>& batch, const LossWeights& weights,
                  const FdOptions& options) {
    if (!(options.h > 0.0)) throw PreconditionError("fd_check: h must be positive");
    const std::vector<double> analytic = grad(model, batch, weights);
    Kinks base;
    evaluate(model, batch, weights, nullptr, &base);

    std::vector<std::size_t> indices;
    Rng rng(options.seed);
    std::size_t offset = 0;
    model.params.for_each_block([&](const char* name, const auto& block) {
        std::vector<std::size_t> local(static_cast<std::size_t>(block.size()));
        std::iota(local.begin(), local.end(), offset);
        Rng stream = rng.split(name);
        stream.shuffle(local);
        local.resize(std::min(local.size(), options.per_block));
        std::sort(local.begin(), local.end());
        indices.insert(indices.end(), local.begin(), local.end());
        offset += static_cast<std::size_t>(block.size());
    });

    FdReport report;
    Model probe = model;
    for (std::size_t idx : indices) {
        const double original = probe.params.at(idx);
        Kinks plus, minus;
        probe.params.at(idx) = original + options.h;
        const double f_plus = evaluate(probe, batch, weights, nullptr, &plus).total;
        probe.params.at(idx) = original - options.h;
        const double f_minus = evaluate(probe, batch, weights, nullptr, &minus).total;
        probe.params.at(idx) = original;

        bool kink = false;
        for (std::size_t j = 0; j < base.windowed.size() && !kink; ++j) {
            const bool moved = plus.windowed[j] != base.windowed[j] || minus.windowed[j] != base.windowed[j];
            kink = (std::abs(base.windowed[j]) < options.kink_window && moved) ||
                   sign_of(plus.windowed[j]) != sign_of(minus.windowed[j]);
        }
        for (std::size_t j = 0; j < base.crossing.size() && !kink; ++j)
            kink = sign_of(plus.crossing[j]) != sign_of(minus.crossing[j]);
        if (kink) {
            ++report.excluded;
            continue;
        }

        const double numeric = (f_plus - f_minus) / (2.0 * options.h);
        const double a = analytic[idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
        const double rel = std::abs(a - numeric) / denom;
        ++report.checked;
        if (rel >= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = idx;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    if (report.checked > 0) report.worst_block = model.params.block_of(report.worst_index);
    return report;
}

void refit_background(Model& model, const std::vector<Sample>& data) {
    std::vector<Vector> zs;
    for (const auto& s : data)
        if (s.cls < 0) zs.push_back(concept_head_forward(model.params.head, s.feature));
    if (zs.size() < 2) return;
    model.background = fit_background(zs, model.config.bg_variance_threshold, model.config.bg_max_k);
}

TrainResult train_loop(Model model, const std::vector<Sample>& data, const SgdConfig& sgd,
                       const LossWeights& weights) {
    if (data.empty()) throw PreconditionError("train: dataset is empty");
    if (!(sgd.lr >= 0.0) || !std::isfinite(sgd.lr)) throw PreconditionError("train: lr must be finite and >= 0");
    if (sgd.batch_size == 0) throw PreconditionError("train: batch_size must be >= 1");

    TrainResult result;
    model.refresh_dict_known();
    refit_background(model, data);
    result.history.push_back(total_loss(model, data, weights));
    if (!std::isfinite(result.history.back().total)) throw PreconditionError("train: initial loss is not finite");

    const Rng root(sgd.seed);
    std::vector<std::size_t> order(data.size());
    std::vector<Sample> batch;
    for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = root.split(static_cast<std::uint64_t>(epoch));
        rng.shuffle(order);
        const Model epoch_start = model;
        for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
            batch.clear();
            for (std::size_t j = start; j < std::min(order.size(), start + sgd.batch_size); ++j)
                batch.push_back(data[order[j]]);
            LossAndGrad lg = loss_and_grad(model, batch, weights);
            ModelParams next = model.params;
            next.add_scaled(lg.grad, -sgd.lr);
            if (!std::isfinite(lg.loss.total) || !next.all_finite()) {
                result.diverged = true;
                result.model = std::move(model);
                return result;
            }
            model.params = std::move(next);
        }
        model.refresh_dict_known();
        refit_background(model, data);
        const LossBreakdown l = total_loss(model, data, weights);
        if (!std::isfinite(l.total)) {
            result.diverged = true;
            result.model = epoch_start;
            return result;
        }
        result.history.push_back(l);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace cdm
