#include <doctest.h>

#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"
#include "crfnoise/variational.hpp"
#include "test_util.hpp"

using namespace crfnoise;

namespace {

struct Setup {
    EnergyParams params;
    BiasPair bias;
    AuxModel aux;
    LabelVector y;
};

Setup random_setup(Rng& rng, int H, int H_aux) {
    Dims d{3, 2, H};
    Setup s;
    s.params = testutil::random_params(d, Mode::multilabel, rng);
    s.bias = testutil::random_bias(d, rng);
    AuxRbm rbm = AuxRbm::zeros(3, 2, H_aux);
    rbm.a = testutil::random_vec(2, rng);
    rbm.c = testutil::random_vec(H_aux, rng);
    rbm.W = testutil::random_mat(2, 3, rng);
    rbm.Wp = testutil::random_mat(H_aux, 3, rng);
    s.aux.rbm = rbm;
    s.y = testutil::random_label(3, Mode::multilabel, rng);
    return s;
}

}  // namespace

TEST_CASE("alpha schedule endpoints and monotonicity") {
    AlphaSchedule sch{8.0, 1.0, 10, AlphaSchedule::Shape::linear};
    sch.check();
    CHECK(sch.at(0) == doctest::Approx(8.0));
    CHECK(sch.at(10) == doctest::Approx(1.0));
    CHECK(sch.at(25) == doctest::Approx(1.0));
    for (int t = 0; t < 15; ++t) CHECK(sch.at(t) >= sch.at(t + 1));

    AlphaSchedule expo{40.0, 5.0, 11, AlphaSchedule::Shape::exponential};
    expo.check();
    CHECK(expo.at(0) == doctest::Approx(40.0));
    CHECK(expo.at(11) == doctest::Approx(5.0));
    for (int t = 0; t < 15; ++t) CHECK(expo.at(t) >= expo.at(t + 1));

    AlphaSchedule bad{1.0, 2.0, 5, AlphaSchedule::Shape::linear};
    CHECK_THROWS(bad.check());
}

TEST_CASE("q at alpha 0 is the model posterior") {
    Rng rng = Rng::from_key(307);
    for (int t = 0; t < 20; ++t) {
        Setup s = random_setup(rng, 2, 2);
        FactorialPosterior q = q_noisy(s.params, s.bias, s.aux, s.y, 0.0);
        FactorialPosterior model = cond_clean_hidden(s.params, s.bias, s.y);
        CHECK((q.p_clean - model.p_clean).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((q.p_hidden - model.p_hidden).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("q at huge alpha matches the aux conditional") {
    Rng rng = Rng::from_key(311);
    for (int t = 0; t < 20; ++t) {
        Setup s = random_setup(rng, 2, 2);
        FactorialPosterior q = q_noisy(s.params, s.bias, s.aux, s.y, 1e6);
        FactorialPosterior a = aux_cond(*s.aux.rbm, s.y);
        CHECK((q.p_clean - a.p_clean).cwiseAbs().maxCoeff() < 1e-4);
        CHECK((q.p_hidden - a.p_hidden).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("blended logit reference value") {
    // model logit 2, aux logit 0, alpha 1 -> sigma(1)
    Dims d{1, 1, 0};
    EnergyParams p = EnergyParams::zeros(d);
    BiasPair bias{Vec::Constant(1, 2.0), Vec::Zero(1)};
    AuxModel aux;
    aux.rbm = AuxRbm::zeros(1, 1, 0);
    auto y = LabelVector::zeros(1, Mode::multilabel);
    FactorialPosterior q = q_noisy(p, bias, aux, y, 1.0);
    CHECK(q.p_clean[0] == doctest::Approx(0.731059).epsilon(1e-6));
}

TEST_CASE("hidden units blend only when dimensions agree") {
    Rng rng = Rng::from_key(313);
    Setup mismatch = random_setup(rng, 2, 5);
    FactorialPosterior q = q_noisy(mismatch.params, mismatch.bias, mismatch.aux, mismatch.y, 3.0);
    FactorialPosterior model = cond_clean_hidden(mismatch.params, mismatch.bias, mismatch.y);
    CHECK((q.p_hidden - model.p_hidden).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((q.p_clean - model.p_clean).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("q_clean blends hidden logits") {
    // c = 1, c_aux = -1, alpha 1 -> sigma(0) = 0.5
    Dims d{1, 1, 1};
    EnergyParams p = EnergyParams::zeros(d);
    p.c = Vec::Constant(1, 1.0);
    AuxModel aux;
    AuxRbm rbm = AuxRbm::zeros(1, 1, 1);
    rbm.c = Vec::Constant(1, -1.0);
    aux.rbm = rbm;
    auto y = LabelVector::zeros(1, Mode::multilabel);
    Vec qh = q_clean(p, aux, y, 1.0);
    CHECK(qh[0] == doctest::Approx(0.5));
    CHECK(q_clean(p, aux, y, 0.0)[0] == doctest::Approx(sigmoid(1.0)));
}

TEST_CASE("monotone logit interpolation") {
    Rng rng = Rng::from_key(317);
    for (int t = 0; t < 40; ++t) {
        Setup s = random_setup(rng, 2, 2);
        FactorialPosterior model = cond_clean_hidden(s.params, s.bias, s.y);
        FactorialPosterior a = aux_cond(*s.aux.rbm, s.y);
        double alpha = rng.uniform() * 20.0;
        FactorialPosterior q = q_noisy(s.params, s.bias, s.aux, s.y, alpha);
        for (int i = 0; i < 2; ++i) {
            double lo = std::min(model.p_clean[i], a.p_clean[i]);
            double hi = std::max(model.p_clean[i], a.p_clean[i]);
            CHECK(q.p_clean[i] >= lo - 1e-12);
            CHECK(q.p_clean[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("kl objective: zero at identity and minimized by q") {
    Rng rng = Rng::from_key(331);
    Setup s = random_setup(rng, 2, 2);
    FactorialPosterior model = cond_clean_hidden(s.params, s.bias, s.y);
    CHECK(kl_objective(model, model, model, 3.0) == doctest::Approx(0.0));

    for (int t = 0; t < 50; ++t) {
        Setup r = random_setup(rng, 2, 2);
        double alpha = rng.uniform() * 5.0;
        FactorialPosterior m = cond_clean_hidden(r.params, r.bias, r.y);
        FactorialPosterior a = aux_cond(*r.aux.rbm, r.y);
        FactorialPosterior q = q_noisy(r.params, r.bias, r.aux, r.y, alpha);
        double best = kl_objective(q, m, a, alpha);

        // random competitors never beat q
        for (int k = 0; k < 20; ++k) {
            FactorialPosterior cand = q;
            for (int i = 0; i < cand.p_clean.size(); ++i) cand.p_clean[i] = rng.uniform();
            for (int i = 0; i < cand.p_hidden.size(); ++i) cand.p_hidden[i] = rng.uniform();
            CHECK(kl_objective(cand, m, a, alpha) >= best - 1e-10);
        }
        // local perturbations do not decrease it either
        for (int i = 0; i < q.p_clean.size(); ++i) {
            for (double dp : {-0.01, 0.01}) {
                FactorialPosterior cand = q;
                cand.p_clean[i] = std::clamp(cand.p_clean[i] + dp, 1e-9, 1.0 - 1e-9);
                CHECK(kl_objective(cand, m, a, alpha) >= best - 1e-10);
            }
        }
    }
}

TEST_CASE("kl objective at alpha 0 reduces to the model KL") {
    Rng rng = Rng::from_key(337);
    Setup s = random_setup(rng, 2, 2);
    FactorialPosterior m = cond_clean_hidden(s.params, s.bias, s.y);
    FactorialPosterior a = aux_cond(*s.aux.rbm, s.y);
    FactorialPosterior q = q_noisy(s.params, s.bias, s.aux, s.y, 2.0);
    double v0 = kl_objective(q, m, a, 0.0);
    double manual = 0.0;
    for (int i = 0; i < 2; ++i) manual += bernoulli_kl(q.p_clean[i], m.p_clean[i]);
    for (int i = 0; i < 2; ++i) manual += bernoulli_kl(q.p_hidden[i], m.p_hidden[i]);
    CHECK(v0 == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("negative alpha rejected") {
    Rng rng = Rng::from_key(347);
    Setup s = random_setup(rng, 2, 2);
    CHECK_THROWS(q_noisy(s.params, s.bias, s.aux, s.y, -1.0));
}
