#include <doctest.h>

#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"
#include "crfnoise/rng.hpp"
#include "test_util.hpp"

using namespace crfnoise;

TEST_CASE("rng streams are keyed, not ordered") {
    Rng a = Rng::from_key(7, 1, 2, 3);
    Rng b = Rng::from_key(7, 1, 2, 3);
    Rng c = Rng::from_key(7, 1, 2, 4);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() == b.next_u64());
    Rng a2 = Rng::from_key(7, 1, 2, 3);
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("rng uniform has sane first moments") {
    Rng rng = Rng::from_key(11);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) sum += rng.uniform();
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("stable sigmoid reference values") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(3.0) == doctest::Approx(0.952574).epsilon(1e-6));
    CHECK(sigmoid(-1.0) == doctest::Approx(0.268941).epsilon(1e-6));
    CHECK(sigmoid(1.0) == doctest::Approx(0.731059).epsilon(1e-6));
    // No overflow at extreme logits.
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) == 0.0);
}

TEST_CASE("softmax normalizes and log_sum_exp is shift stable") {
    Vec v(3);
    v << 1000.0, 1001.0, 999.0;
    Vec p = softmax(v);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[1] > p[0]);
    CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + log_sum_exp(Vec(v.array() - 1000.0))));
}

TEST_CASE("bernoulli_kl basics") {
    CHECK(bernoulli_kl(0.3, 0.3) == doctest::Approx(0.0));
    CHECK(bernoulli_kl(0.3, 0.7) > 0.0);
    CHECK(std::isfinite(bernoulli_kl(0.5, 0.0)));
    CHECK(std::isfinite(bernoulli_kl(1.0, 0.5)));
}

TEST_CASE("label vector invariants") {
    CHECK_THROWS(LabelVector(Vec::Constant(2, 0.5), Mode::multilabel));
    CHECK_THROWS(LabelVector(Vec::Ones(3), Mode::multiclass));
    LabelVector oh = LabelVector::one_hot(4, 2);
    CHECK(oh.argmax() == 2);
}

TEST_CASE("energy of zero parameters is zero") {
    Dims d{2, 2, 2};
    EnergyParams p = EnergyParams::zeros(d);
    BiasPair bias{Vec::Zero(2), Vec::Zero(2)};
    Rng rng = Rng::from_key(3);
    for (int t = 0; t < 8; ++t) {
        auto y = testutil::random_label(2, Mode::multilabel, rng);
        auto yh = testutil::random_label(2, Mode::multilabel, rng);
        auto h = testutil::random_label(2, Mode::multilabel, rng);
        CHECK(energy(p, bias, y, yh, h) == 0.0);
    }
}

TEST_CASE("energy hand examples") {
    // C=2, N=1, H=1
    Dims d{1, 2, 1};
    EnergyParams p = EnergyParams::zeros(d);
    p.W << 2.0, 0.0;
    BiasPair bias;
    bias.a = Vec(2);
    bias.a << 1.0, -1.0;
    bias.b = Vec::Constant(1, 0.5);
    auto y = LabelVector(Vec::Ones(1), Mode::multilabel);
    Vec yhb(2);
    yhb << 1.0, 0.0;
    auto yh = LabelVector(yhb, Mode::multilabel);
    auto h = LabelVector::zeros(1, Mode::multilabel);
    CHECK(energy(p, bias, y, yh, h) == doctest::Approx(-3.5));

    Dims d1{1, 1, 1};
    EnergyParams p1 = EnergyParams::zeros(d1);
    p1.c = Vec::Ones(1);
    p1.W = Mat::Ones(1, 1);
    p1.Wp = Mat::Ones(1, 1);
    BiasPair b1{Vec::Ones(1), Vec::Ones(1)};
    auto one = LabelVector(Vec::Ones(1), Mode::multilabel);
    CHECK(energy(p1, b1, one, one, one) == doctest::Approx(-5.0));
}

TEST_CASE("energy is linear in each parameter block") {
    Rng rng = Rng::from_key(17);
    Dims d{3, 2, 2};
    BiasPair bias = testutil::random_bias(d, rng);
    auto y = testutil::random_label(3, Mode::multilabel, rng);
    auto yh = testutil::random_label(2, Mode::multilabel, rng);
    auto h = testutil::random_label(2, Mode::multilabel, rng);
    EnergyParams p = testutil::random_params(d, Mode::multilabel, rng);
    EnergyParams p2 = p;
    p2.W *= 2.0;
    EnergyParams p0 = p;
    p0.W.setZero();
    double e2 = energy(p2, bias, y, yh, h);
    double e1 = energy(p, bias, y, yh, h);
    double e0 = energy(p0, bias, y, yh, h);
    CHECK(e2 - e1 == doctest::Approx(e1 - e0).epsilon(1e-12));
}

TEST_CASE("conditional logits and reference probabilities") {
    Dims d{1, 2, 1};
    EnergyParams p = EnergyParams::zeros(d);
    p.W << 1.0, 0.0;  // W(0,:) y = 1 for y=[1]
    BiasPair bias;
    bias.a = Vec(2);
    bias.a << 2.0, 0.0;
    bias.b = Vec::Zero(1);
    auto y = LabelVector(Vec::Ones(1), Mode::multilabel);
    FactorialPosterior q = cond_clean_hidden(p, bias, y);
    CHECK(q.p_clean[0] == doctest::Approx(0.952574).epsilon(1e-6));
    CHECK(q.p_clean[1] == 0.5);
    CHECK(q.p_hidden[0] == 0.5);

    BiasPair bneg{Vec::Zero(2), Vec::Constant(1, -1.0)};
    auto yh = LabelVector::zeros(2, Mode::multilabel);
    auto h = LabelVector::zeros(1, Mode::multilabel);
    Vec pn = cond_noisy(p, bneg, yh, h);
    CHECK(pn[0] == doctest::Approx(0.268941).epsilon(1e-6));
}

TEST_CASE("multiclass clean conditional is a softmax") {
    Dims d{2, 2, 0};
    EnergyParams p = EnergyParams::zeros(d, Mode::multiclass);
    BiasPair bias{Vec::Zero(2), Vec::Zero(2)};
    auto y = LabelVector::one_hot(2, 0);
    FactorialPosterior q = cond_clean_hidden(p, bias, y);
    CHECK(q.p_clean[0] == doctest::Approx(0.5));
    CHECK(q.p_clean.sum() == doctest::Approx(1.0));
}

TEST_CASE("hidden conditional ignores bias.a and x") {
    Rng rng = Rng::from_key(23);
    Dims d{3, 2, 2};
    EnergyParams p = testutil::random_params(d, Mode::multilabel, rng);
    auto y = testutil::random_label(3, Mode::multilabel, rng);
    BiasPair b1 = testutil::random_bias(d, rng);
    BiasPair b2 = testutil::random_bias(d, rng);
    b2.b = b1.b;
    FactorialPosterior q1 = cond_clean_hidden(p, b1, y);
    FactorialPosterior q2 = cond_clean_hidden(p, b2, y);
    CHECK((q1.p_hidden - q2.p_hidden).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q1.p_clean - q2.p_clean).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("unnormalized_log_joint is minus energy") {
    Rng rng = Rng::from_key(29);
    Dims d{2, 2, 1};
    EnergyParams p = testutil::random_params(d, Mode::multilabel, rng);
    BiasPair bias = testutil::random_bias(d, rng);
    auto y = testutil::random_label(2, Mode::multilabel, rng);
    auto yh = testutil::random_label(2, Mode::multilabel, rng);
    auto h = testutil::random_label(1, Mode::multilabel, rng);
    CHECK(unnormalized_log_joint(p, bias, y, yh, h) == -energy(p, bias, y, yh, h));
}
