#include "doctest.h"
#include "bench_common.hpp"

#include "cdm/errors.hpp"
#include "cdm/shared.hpp"
#include "cdm/train.hpp"

#include <cmath>

using namespace cdm;

namespace {

const bench::Setup& small() {
    static const bench::Setup s = bench::setup(bench::preset(3));
    return s;
}

std::vector<Sample> batch_of(const std::vector<Sample>& all, std::size_t offset, std::size_t n) {
    return {all.begin() + static_cast<long>(offset), all.begin() + static_cast<long>(offset + n)};
}

LossWeights only(double LossWeights::*term) {
    LossWeights w = LossWeights::zeros();
    w.*term = 1.0;
    return w;
}

double term_of(const LossBreakdown& l, double LossWeights::*term) {
    if (term == &LossWeights::disc) return l.disc;
    if (term == &LossWeights::ce) return l.ce;
    if (term == &LossWeights::sc) return l.sc;
    if (term == &LossWeights::rec) return l.rec;
    if (term == &LossWeights::sparse) return l.sparse;
    return l.align;
}

const std::vector<double LossWeights::*> kTerms{&LossWeights::disc, &LossWeights::ce,     &LossWeights::sc,
                                                &LossWeights::rec,  &LossWeights::sparse, &LossWeights::align};

}  // namespace

TEST_CASE("zero weights give zero loss and gradient") {
    const auto& s = small();
    const auto batch = batch_of(s.samples, 0, 8);
    CHECK(total_loss(s.model, batch, LossWeights::zeros()).total == 0.0);
    for (double g : grad(s.model, batch, LossWeights::zeros())) CHECK(g == 0.0);
}

TEST_CASE("each weight isolates its term") {
    const auto& s = small();
    const auto batch = batch_of(s.samples, 0, 8);
    const LossBreakdown all = total_loss(s.model, batch, LossWeights{});
    for (auto term : kTerms) {
        const LossBreakdown l = total_loss(s.model, batch, only(term));
        CHECK(l.total == term_of(all, term));
    }
    const LossWeights w;
    CHECK(all.total == doctest::Approx(w.disc * all.disc + w.ce * all.ce + w.sc * all.sc + w.rec * all.rec +
                                       w.sparse * all.sparse + w.align * all.align)
                           .epsilon(1e-14));
}

TEST_CASE("seeded batch reproduces the frozen loss") {
    const Json g = read_json_file(bench::data_path("loss_golden.json"));
    const auto s = bench::setup(bench::preset(g["seed"]));
    const LossBreakdown l = total_loss(s.model, batch_of(s.samples, 0, g["batch"]), LossWeights{});
    CHECK(l.disc == g["disc"].get<double>());
    CHECK(l.ce == g["ce"].get<double>());
    CHECK(l.sc == g["sc"].get<double>());
    CHECK(l.rec == g["rec"].get<double>());
    CHECK(l.sparse == g["sparse"].get<double>());
    CHECK(l.align == g["align"].get<double>());
    CHECK(l.total == g["total"].get<double>());
}

TEST_CASE("reconstruction gradient equals the closed form") {
    const auto& s = small();
    const auto batch = batch_of(s.samples, 0, 8);
    const Model& m = s.model;
    const AdaptedConcepts adapted = adapt_concepts(m);
    const Eigen::Index k = m.dict_known.cols();
    Matrix dict(m.dict_known.rows(), k + m.params.dict_residual.cols());
    dict << m.dict_known, m.params.dict_residual;
    Matrix g_enc = Matrix::Zero(m.params.encoder.rows(), m.params.encoder.cols());
    Matrix g_res = Matrix::Zero(m.params.dict_residual.rows(), m.params.dict_residual.cols());
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& item : batch) {
        if (item.cls < 0) continue;
        const Vector cv = forward_region(m, adapted, item.feature).parts.coords_v;
        const Vector alpha = m.params.encoder * cv;
        const Vector r = cv - dict * alpha;
        g_enc += -2.0 * inv_b * dict.transpose() * r * cv.transpose();
        g_res += -2.0 * inv_b * r * alpha.tail(g_res.cols()).transpose();
    }
    const LossAndGrad lg = loss_and_grad(m, batch, only(&LossWeights::rec));
    CHECK((lg.grad.encoder - g_enc).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, g_enc.cwiseAbs().maxCoeff()));
    CHECK((lg.grad.dict_residual - g_res).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, g_res.cwiseAbs().maxCoeff()));
    CHECK(lg.grad.disc_adapter.weight.isZero(0.0));
    CHECK(lg.grad.classifier.isZero(0.0));
}

TEST_CASE("finite differences agree with the analytic gradient") {
    const auto& s = small();
    SUBCASE("reconstruction only") {
        FdOptions o;
        o.per_block = 40;
        const FdReport r = fd_check(s.model, batch_of(s.samples, 0, 8), only(&LossWeights::rec), o);
        CHECK(r.checked > 200);
        CHECK(r.max_rel_error < 1e-6);
    }
    SUBCASE("each term alone") {
        for (auto term : kTerms) {
            const FdReport r = fd_check(s.model, batch_of(s.samples, 8, 8), only(term), {});
            CAPTURE(r.worst_block);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
    SUBCASE("full loss on five seeded batches") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            FdOptions o;
            o.seed = seed;
            const FdReport r = fd_check(s.model, batch_of(s.samples, 8 * seed, 8), LossWeights{}, o);
            CAPTURE(seed);
            CAPTURE(r.worst_block);
            CHECK(r.checked >= 200);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
    SUBCASE("a coarse step is less accurate") {
        FdOptions fine, coarse;
        coarse.h = 1e-2;
        const auto batch = batch_of(s.samples, 16, 8);
        CHECK(fd_check(s.model, batch, LossWeights{}, coarse).max_rel_error >
              fd_check(s.model, batch, LossWeights{}, fine).max_rel_error);
    }
}

TEST_CASE("finite differences after some training") {
    auto cfg = bench::preset(4);
    cfg.sgd.epochs = 3;
    const auto s = bench::setup(cfg);
    const TrainResult t = train_loop(s.model, s.samples, cfg.sgd, cfg.loss);
    const FdReport r = fd_check(t.model, batch_of(s.samples, 0, 8), LossWeights{}, {});
    CAPTURE(r.worst_block);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto& s = small();
    SgdConfig sgd;
    sgd.lr = 0.0;
    sgd.epochs = 2;
    const TrainResult t = train_loop(s.model, s.samples, sgd, LossWeights{});
    CHECK(t.model.params.flatten() == s.model.params.flatten());
    CHECK(t.history.size() == 3);
    CHECK(t.history[1].total == t.history[0].total);
}

TEST_CASE("training is bit-reproducible") {
    const auto& s = small();
    SgdConfig sgd;
    sgd.epochs = 1;
    sgd.seed = 9;
    const TrainResult a = train_loop(s.model, s.samples, sgd, LossWeights{});
    const TrainResult b = train_loop(s.model, s.samples, sgd, LossWeights{});
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].total == b.history[i].total);
    CHECK(a.model.params.flatten() == b.model.params.flatten());
    sgd.seed = 10;
    CHECK(train_loop(s.model, s.samples, sgd, LossWeights{}).model.params.flatten() != a.model.params.flatten());
}

TEST_CASE("frame and known dictionary stay frozen") {
    const auto& s = small();
    Model m = s.model;
    m.refresh_dict_known();
    const Matrix dict_before = m.dict_known;
    const SubspaceFrame frame_before = m.frame;
    for (std::size_t step = 0; step < 5; ++step) {
        const LossAndGrad lg = loss_and_grad(m, batch_of(s.samples, 16 * step, 16), LossWeights{});
        m.params.add_scaled(lg.grad, -0.02);
    }
    CHECK(m.dict_known == dict_before);
    CHECK(m.frame.q_u == frame_before.q_u);
    CHECK(m.frame.q_v == frame_before.q_v);
    CHECK(shared_adapter_images(m) != dict_before);

    SgdConfig sgd;
    sgd.epochs = 2;
    const TrainResult t = train_loop(s.model, s.samples, sgd, LossWeights{});
    CHECK(t.model.dict_known == shared_adapter_images(t.model));
    CHECK(t.model.frame.q_u == s.model.frame.q_u);
    CHECK(t.model.frame.q_v == s.model.frame.q_v);
}

TEST_CASE("background refit uses background samples only") {
    const auto& s = small();
    Model m = s.model;
    refit_background(m, s.samples);
    std::vector<Sample> bg;
    for (const auto& x : s.samples)
        if (x.cls < 0) bg.push_back(x);
    Model n = s.model;
    refit_background(n, bg);
    CHECK(m.background.mean == n.background.mean);
    Model keep = s.model;
    refit_background(keep, batch_of(s.samples, 0, 1));
    CHECK(keep.background.mean == s.model.background.mean);
}

TEST_CASE("divergence returns the last finite parameters") {
    const auto& s = small();
    SgdConfig sgd;
    sgd.lr = 1e12;
    sgd.epochs = 3;
    const TrainResult t = train_loop(s.model, s.samples, sgd, LossWeights{});
    CHECK(t.diverged);
    CHECK(t.model.params.all_finite());
    CHECK_THROWS_AS(train_loop(s.model, {}, sgd, LossWeights{}), PreconditionError);
}

TEST_CASE("fifty epochs halve the loss on the benchmark") {
    auto cfg = bench::preset(1);
    cfg.sgd.epochs = 50;
    const auto s = bench::setup(cfg);
    const TrainResult t = train_loop(s.model, s.samples, cfg.sgd, cfg.loss);
    CHECK_FALSE(t.diverged);
    CHECK(t.history.back().total < 0.5 * t.history.front().total);
}
