#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "crfnoise/dataset.hpp"
#include "test_util.hpp"

using namespace crfnoise;

TEST_CASE("default pair-flip partners follow the 10-class convention") {
    auto p = NoiseSpec::default_partners(10);
    CHECK(p[3] == 5);   // cat -> dog
    CHECK(p[5] == 3);   // dog -> cat
    CHECK(p[1] == 9);   // automobile -> truck
    CHECK(p[7] == 4);   // horse -> deer
}

TEST_CASE("noise spec transition matrices are row stochastic") {
    NoiseSpec spec;
    spec.kind = NoiseSpec::Kind::pair_flip;
    spec.rate = 0.3;
    Mat T = spec.transition_matrix(10);
    for (int r = 0; r < 10; ++r) CHECK(T.row(r).sum() == doctest::Approx(1.0));
    CHECK(T(3, 5) == doctest::Approx(0.3));
    CHECK(T(3, 3) == doctest::Approx(0.7));

    NoiseSpec unif;
    unif.kind = NoiseSpec::Kind::uniform;
    unif.rate = 0.4;
    Mat U = unif.transition_matrix(5);
    CHECK(U(0, 0) == doctest::Approx(0.6));
    CHECK(U(0, 1) == doctest::Approx(0.1));
}

TEST_CASE("inject_noise boundary rates") {
    std::vector<LabelVector> clean;
    for (int i = 0; i < 50; ++i) clean.push_back(LabelVector::one_hot(2, i % 2));

    NoiseSpec none;
    none.kind = NoiseSpec::Kind::pair_flip;
    none.rate = 0.0;
    auto same = inject_noise(clean, none, 2, 1);
    for (size_t i = 0; i < clean.size(); ++i)
        CHECK((same[i].bits - clean[i].bits).cwiseAbs().maxCoeff() == 0.0);

    NoiseSpec full;
    full.kind = NoiseSpec::Kind::pair_flip;
    full.rate = 1.0;
    auto swapped = inject_noise(clean, full, 2, 1);
    for (size_t i = 0; i < clean.size(); ++i)
        CHECK(swapped[i].argmax() == 1 - clean[i].argmax());
}

TEST_CASE("inject_noise empirical flip frequency") {
    std::vector<LabelVector> clean;
    for (int i = 0; i < 100000; ++i) clean.push_back(LabelVector::one_hot(10, i % 10));
    NoiseSpec spec;
    spec.kind = NoiseSpec::Kind::pair_flip;
    spec.rate = 0.3;
    // full derangement so every class can flip
    spec.partner = {1, 0, 3, 2, 5, 4, 7, 6, 9, 8};
    auto noisy = inject_noise(clean, spec, 10, 42);
    int flips = 0;
    for (size_t i = 0; i < clean.size(); ++i)
        if (noisy[i].argmax() != clean[i].argmax()) ++flips;
    CHECK(flips / 100000.0 == doctest::Approx(0.30).epsilon(0.02));
}

TEST_CASE("noise injection never touches features") {
    SynthConfig cfg;
    cfg.mode = Mode::multiclass;
    cfg.classes = 3;
    cfg.noisy_labels = 3;
    cfg.train_size = 100;
    cfg.val_size = 10;
    cfg.test_size = 10;
    cfg.noise.kind = NoiseSpec::Kind::uniform;
    cfg.noise.rate = 0.5;
    cfg.seed = 7;
    LabeledDataset noisy = make_synthetic(cfg);
    cfg.noise.rate = 0.0;
    LabeledDataset quiet = make_synthetic(cfg);
    CHECK((noisy.features - quiet.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synthetic multiclass dataset structure") {
    SynthConfig cfg;
    cfg.mode = Mode::multiclass;
    cfg.classes = 4;
    cfg.noisy_labels = 4;
    cfg.input_dim = 8;
    cfg.train_size = 200;
    cfg.val_size = 40;
    cfg.test_size = 60;
    cfg.clean_fraction = 0.2;
    cfg.noise.kind = NoiseSpec::Kind::pair_flip;
    cfg.noise.rate = 0.3;
    cfg.seed = 3;
    LabeledDataset ds = make_synthetic(cfg);
    ds.validate();
    CHECK(ds.size() == 300);
    CHECK(ds.split_indices(Split::clean_train).size() == 40);  // exactly 0.2 x 200
    CHECK(ds.split_indices(Split::noisy_train).size() == 160);
    CHECK(ds.split_indices(Split::val).size() == 40);
    CHECK(ds.split_indices(Split::test).size() == 60);

    // all instances carry hidden clean labels; the training accessor is
    // restricted to the clean split
    auto dn = ds.split_indices(Split::noisy_train);
    CHECK(ds.has_clean(static_cast<size_t>(dn[0])));
    CHECK_THROWS(ds.clean_for_training(static_cast<size_t>(dn[0])));
    auto dc = ds.split_indices(Split::clean_train);
    CHECK_NOTHROW(ds.clean_for_training(static_cast<size_t>(dc[0])));
}

TEST_CASE("high separation makes the multiclass problem nearly separable") {
    SynthConfig cfg;
    cfg.mode = Mode::multiclass;
    cfg.classes = 3;
    cfg.noisy_labels = 3;
    cfg.input_dim = 6;
    cfg.separation = 50.0;
    cfg.train_size = 50;
    cfg.val_size = 5;
    cfg.test_size = 100;
    cfg.seed = 9;
    LabeledDataset ds = make_synthetic(cfg);
    // nearest-class-mean classification on the test split is perfect
    std::vector<Vec> means(3, Vec::Zero(6));
    std::vector<int> counts(3, 0);
    for (int64_t i : ds.split_indices(Split::noisy_train)) {
        int k = ds.eval_hidden_clean(static_cast<size_t>(i)).argmax();
        means[k] += ds.x(static_cast<size_t>(i));
        counts[k]++;
    }
    for (int k = 0; k < 3; ++k) means[k] /= std::max(1, counts[k]);
    int correct = 0, total = 0;
    for (int64_t i : ds.split_indices(Split::test)) {
        Vec x = ds.x(static_cast<size_t>(i));
        int best = 0;
        double bd = 1e300;
        for (int k = 0; k < 3; ++k) {
            double d2 = (x - means[k]).squaredNorm();
            if (d2 < bd) bd = d2, best = k;
        }
        correct += best == ds.eval_hidden_clean(static_cast<size_t>(i)).argmax();
        ++total;
    }
    CHECK(correct == total);
}

TEST_CASE("multilabel tagger produces overlapping tags") {
    SynthConfig cfg;
    cfg.mode = Mode::multilabel;
    cfg.classes = 5;
    cfg.noisy_labels = 20;
    cfg.input_dim = 10;
    cfg.train_size = 400;
    cfg.val_size = 40;
    cfg.test_size = 40;
    cfg.seed = 13;
    LabeledDataset ds = make_synthetic(cfg);
    ds.validate();
    CHECK(ds.n_noisy == 20);
    CHECK(ds.n_clean == 5);
    // tag co-occurrence has off-diagonal mass
    Mat cooc = Mat::Zero(20, 20);
    for (size_t i = 0; i < ds.size(); ++i)
        cooc += ds.y(i).bits * ds.y(i).bits.transpose();
    CHECK(cooc.sum() - cooc.diagonal().sum() > 0.0);
}

TEST_CASE("dataset file round trip") {
    SynthConfig cfg;
    cfg.mode = Mode::multiclass;
    cfg.classes = 3;
    cfg.noisy_labels = 3;
    cfg.train_size = 60;
    cfg.val_size = 10;
    cfg.test_size = 10;
    cfg.noise.kind = NoiseSpec::Kind::uniform;
    cfg.noise.rate = 0.2;
    cfg.seed = 5;
    LabeledDataset ds = make_synthetic(cfg);
    std::string path = "/tmp/crfnoise_test_ds.crfc";
    save_dataset(ds, path);
    LabeledDataset back = load_dataset(path);
    back.validate();
    CHECK(back.size() == ds.size());
    CHECK(back.mode == ds.mode);
    // features stored as f32; match at float precision
    CHECK((back.features.cast<float>() - ds.features.cast<float>()).cwiseAbs().maxCoeff() ==
          0.0f);
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK((back.y(i).bits - ds.y(i).bits).cwiseAbs().maxCoeff() == 0.0);
        CHECK(back.split(i) == ds.split(i));
        CHECK((back.eval_hidden_clean(i).bits - ds.eval_hidden_clean(i).bits)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    std::remove(path.c_str());
}

TEST_CASE("invalid noise spec combinations are rejected") {
    NoiseSpec tagger;
    tagger.kind = NoiseSpec::Kind::multilabel_tagger;
    CHECK_THROWS(tagger.check(Mode::multiclass, 3));
    NoiseSpec flip;
    flip.kind = NoiseSpec::Kind::pair_flip;
    flip.rate = 0.2;
    CHECK_THROWS(flip.check(Mode::multilabel, 3));
    flip.rate = 1.5;
    CHECK_THROWS(flip.check(Mode::multiclass, 3));
}
