#include "crfnoise/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "crfnoise/container.hpp"
#include "crfnoise/rng.hpp"

namespace crfnoise {

std::string NoiseSpec::kind_name(Kind k) {
    switch (k) {
        case Kind::none: return "none";
        case Kind::uniform: return "uniform";
        case Kind::pair_flip: return "pair_flip";
        case Kind::transition_matrix: return "transition_matrix";
        case Kind::multilabel_tagger: return "multilabel_tagger";
    }
    return "none";
}

NoiseSpec::Kind NoiseSpec::kind_from_name(const std::string& s) {
    if (s == "none") return Kind::none;
    if (s == "uniform") return Kind::uniform;
    if (s == "pair_flip") return Kind::pair_flip;
    if (s == "transition_matrix") return Kind::transition_matrix;
    if (s == "multilabel_tagger") return Kind::multilabel_tagger;
    throw std::invalid_argument("unknown noise kind: " + s);
}

std::vector<int> NoiseSpec::default_partners(int C) {
    std::vector<int> p(C);
    for (int i = 0; i < C; ++i) p[i] = i;
    if (C == 10) {
        // CIFAR-10 class order convention: cat<->dog, automobile->truck,
        // horse->deer; the remaining classes keep their label.
        p[3] = 5;
        p[5] = 3;
        p[1] = 9;
        p[7] = 4;
    } else {
        for (int i = 0; i + 1 < C; i += 2) {
            p[i] = i + 1;
            p[i + 1] = i;
        }
    }
    return p;
}

Mat NoiseSpec::transition_matrix(int C) const {
    Mat out = Mat::Identity(C, C);
    switch (kind) {
        case Kind::none:
            break;
        case Kind::uniform:
            for (int i = 0; i < C; ++i) {
                for (int j = 0; j < C; ++j)
                    out(i, j) = i == j ? 1.0 - rate : rate / (C - 1);
            }
            break;
        case Kind::pair_flip: {
            std::vector<int> p = partner.empty() ? default_partners(C) : partner;
            for (int i = 0; i < C; ++i) {
                if (p[i] == i) continue;
                out(i, i) = 1.0 - rate;
                out(i, p[i]) = rate;
            }
            break;
        }
        case Kind::transition_matrix:
            if (!T) throw std::invalid_argument("transition_matrix noise needs T");
            out = *T;
            break;
        case Kind::multilabel_tagger:
            throw std::invalid_argument("multilabel_tagger has no transition matrix");
    }
    return out;
}

void NoiseSpec::check(Mode mode, int C) const {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("NoiseSpec: rate outside [0,1]");
    bool multilabel_kind = kind == Kind::multilabel_tagger;
    if (mode == Mode::multilabel && !multilabel_kind && kind != Kind::none)
        throw std::invalid_argument("NoiseSpec: multiclass noise kind on multilabel data");
    if (mode == Mode::multiclass && multilabel_kind)
        throw std::invalid_argument("NoiseSpec: multilabel_tagger on multiclass data");
    if (kind == Kind::transition_matrix) {
        if (!T) throw std::invalid_argument("NoiseSpec: transition_matrix requires T");
        if (T->rows() != C || T->cols() != C) throw DimError("NoiseSpec: T dims");
        for (int i = 0; i < C; ++i)
            if (std::abs(T->row(i).sum() - 1.0) > 1e-9)
                throw std::invalid_argument("NoiseSpec: T rows must sum to 1");
    }
    if (!partner.empty() && static_cast<int>(partner.size()) != C)
        throw DimError("NoiseSpec: partner map length");
}

std::vector<int64_t> LabeledDataset::split_indices(Split s) const {
    std::vector<int64_t> out;
    for (size_t i = 0; i < splits.size(); ++i)
        if (split(i) == s) out.push_back(static_cast<int64_t>(i));
    return out;
}

const LabelVector& LabeledDataset::clean_for_training(size_t i) const {
    if (split(i) != Split::clean_train)
        throw std::logic_error("clean label requested outside the clean training split");
    return clean_labels[i];
}

const LabelVector& LabeledDataset::eval_hidden_clean(size_t i) const {
    if (!has_clean(i)) throw std::runtime_error("no hidden clean label for instance");
    return clean_labels[i];
}

void LabeledDataset::validate() const {
    size_t n = noisy_labels.size();
    if (static_cast<size_t>(features.rows()) != n || splits.size() != n)
        throw DimError("LabeledDataset: row counts disagree");
    if (features.cols() != input_dim) throw DimError("LabeledDataset: input_dim");
    for (size_t i = 0; i < n; ++i) {
        if (noisy_labels[i].length() != n_noisy) throw DimError("LabeledDataset: noisy length");
        if (has_clean(i) && clean_labels[i].length() != n_clean)
            throw DimError("LabeledDataset: clean length");
        if (split(i) == Split::clean_train && !has_clean(i))
            throw std::invalid_argument("clean_train instance without clean label");
        if (splits[i] > 3) throw std::invalid_argument("LabeledDataset: bad split tag");
    }
}

std::vector<LabelVector> inject_noise(const std::vector<LabelVector>& clean_labels,
                                      const NoiseSpec& spec, int n_noisy, uint64_t seed) {
    std::vector<LabelVector> out;
    out.reserve(clean_labels.size());
    if (spec.kind == NoiseSpec::Kind::multilabel_tagger) {
        int C = clean_labels.empty() ? 0 : clean_labels.front().length();
        int pool = std::max(1, n_noisy / std::max(1, C));
        for (size_t idx = 0; idx < clean_labels.size(); ++idx) {
            Rng rng = Rng::from_key(seed, 0x746167ULL, idx);
            Vec tags = Vec::Zero(n_noisy);
            const LabelVector& cl = clean_labels[idx];
            for (int c = 0; c < cl.length(); ++c) {
                if (cl.bits[c] != 1.0) continue;
                int lo = c * pool;
                int count = spec.tags_per_label_min +
                            static_cast<int>(rng.index(
                                spec.tags_per_label_max - spec.tags_per_label_min + 1));
                count = std::min(count, pool);
                // without replacement from the class pool
                std::vector<int> slots(pool);
                for (int t = 0; t < pool; ++t) slots[t] = lo + t;
                for (int t = 0; t < count; ++t) {
                    int j = t + static_cast<int>(rng.index(pool - t));
                    std::swap(slots[t], slots[j]);
                    if (slots[t] < n_noisy) tags[slots[t]] = 1.0;
                }
            }
            for (int t = 0; t < n_noisy; ++t)
                if (rng.bernoulli(spec.background_rate)) tags[t] = 1.0;
            out.emplace_back(std::move(tags), Mode::multilabel);
        }
        return out;
    }

    int C = clean_labels.empty() ? 0 : clean_labels.front().length();
    if (spec.kind != NoiseSpec::Kind::none && n_noisy != C)
        throw std::invalid_argument("multiclass noise requires N == C");
    Mat T = spec.kind == NoiseSpec::Kind::none ? Mat::Identity(C, C) : spec.transition_matrix(C);
    for (size_t idx = 0; idx < clean_labels.size(); ++idx) {
        Rng rng = Rng::from_key(seed, 0x6e6f697aULL, idx);
        int clean = clean_labels[idx].argmax();
        double u = rng.uniform();
        double acc = 0.0;
        int pick = C - 1;
        for (int j = 0; j < C; ++j) {
            acc += T(clean, j);
            if (u < acc) {
                pick = j;
                break;
            }
        }
        out.push_back(LabelVector::one_hot(C, pick));
    }
    return out;
}

namespace {

void synth_multiclass(const SynthConfig& cfg, LabeledDataset& ds, size_t total) {
    int C = cfg.classes;
    Rng gen = Rng::from_key(cfg.seed, 0x6d65616eULL);
    Mat means(C, cfg.input_dim);
    for (int c = 0; c < C; ++c) {
        Vec dir(cfg.input_dim);
        for (int j = 0; j < cfg.input_dim; ++j) dir[j] = gen.normal();
        means.row(c) = cfg.separation * dir.transpose() / dir.norm();
    }
    for (size_t i = 0; i < total; ++i) {
        Rng rng = Rng::from_key(cfg.seed, 0x696e7374ULL, i);
        int c = static_cast<int>(rng.index(C));
        for (int j = 0; j < cfg.input_dim; ++j)
            ds.features(static_cast<long>(i), j) = means(c, j) + rng.normal();
        ds.clean_labels.push_back(LabelVector::one_hot(C, c));
    }
}

void synth_multilabel(const SynthConfig& cfg, LabeledDataset& ds, size_t total) {
    int C = cfg.classes;
    int themes = std::max(1, C / 3);
    Rng gen = Rng::from_key(cfg.seed, 0x656d62ULL);
    Mat emb(C, cfg.input_dim);
    for (int c = 0; c < C; ++c)
        for (int j = 0; j < cfg.input_dim; ++j) emb(c, j) = gen.normal();
    for (size_t i = 0; i < total; ++i) {
        Rng rng = Rng::from_key(cfg.seed, 0x696e7374ULL, i);
        int theme = static_cast<int>(rng.index(themes));
        Vec cl = Vec::Zero(C);
        for (int c = theme * 3; c < std::min(C, theme * 3 + 3); ++c)
            if (rng.bernoulli(0.7)) cl[c] = 1.0;
        for (int c = 0; c < C; ++c)
            if (cl[c] == 0.0 && rng.bernoulli(0.05)) cl[c] = 1.0;
        if (cl.sum() == 0.0) cl[theme * 3] = 1.0;
        Vec x = Vec::Zero(cfg.input_dim);
        for (int c = 0; c < C; ++c)
            if (cl[c] == 1.0) x += cfg.separation * 0.5 * emb.row(c).transpose();
        for (int j = 0; j < cfg.input_dim; ++j) x[j] += rng.normal();
        ds.features.row(static_cast<long>(i)) = x.transpose();
        ds.clean_labels.emplace_back(std::move(cl), Mode::multilabel);
    }
}

}  // namespace

LabeledDataset make_synthetic(const SynthConfig& cfg) {
    if (cfg.classes <= 0 || cfg.input_dim <= 0 || cfg.train_size <= 0)
        throw std::invalid_argument("make_synthetic: degenerate config");
    if (cfg.mode == Mode::multiclass && cfg.noisy_labels != cfg.classes)
        throw std::invalid_argument("make_synthetic: multiclass requires N == C");
    cfg.noise.check(cfg.mode, cfg.classes);

    LabeledDataset ds;
    ds.mode = cfg.mode;
    ds.input_dim = cfg.input_dim;
    ds.n_noisy = cfg.noisy_labels;
    ds.n_clean = cfg.classes;
    size_t total = static_cast<size_t>(cfg.train_size + cfg.val_size + cfg.test_size);
    ds.features.resize(static_cast<long>(total), cfg.input_dim);
    ds.clean_labels.reserve(total);

    if (cfg.mode == Mode::multiclass)
        synth_multiclass(cfg, ds, total);
    else
        synth_multilabel(cfg, ds, total);

    // Noisy labels for every instance; the clean/noisy relation is i.i.d.
    NoiseSpec spec = cfg.noise;
    if (cfg.mode == Mode::multilabel && spec.kind == NoiseSpec::Kind::none)
        spec.kind = NoiseSpec::Kind::multilabel_tagger;
    ds.noisy_labels = inject_noise(ds.clean_labels, spec, cfg.noisy_labels, cfg.seed ^ 0x1);

    // Split: shuffled train block partitioned into clean/noisy train.
    ds.splits.assign(total, static_cast<uint8_t>(Split::noisy_train));
    std::vector<size_t> train_order(cfg.train_size);
    for (size_t i = 0; i < train_order.size(); ++i) train_order[i] = i;
    Rng split_rng = Rng::from_key(cfg.seed, 0x73706c69ULL);
    for (size_t i = train_order.size(); i > 1; --i)
        std::swap(train_order[i - 1], train_order[split_rng.index(i)]);
    auto n_clean_train = static_cast<size_t>(std::llround(cfg.clean_fraction * cfg.train_size));
    for (size_t i = 0; i < n_clean_train; ++i)
        ds.splits[train_order[i]] = static_cast<uint8_t>(Split::clean_train);
    for (int i = 0; i < cfg.val_size; ++i)
        ds.splits[cfg.train_size + i] = static_cast<uint8_t>(Split::val);
    for (int i = 0; i < cfg.test_size; ++i)
        ds.splits[cfg.train_size + cfg.val_size + i] = static_cast<uint8_t>(Split::test);

    ds.provenance = {{"generator", "synthetic"},
                     {"mode", mode_name(cfg.mode)},
                     {"noise_kind", NoiseSpec::kind_name(spec.kind)},
                     {"noise_rate", spec.rate},
                     {"separation", cfg.separation},
                     {"clean_fraction", cfg.clean_fraction},
                     {"seed", cfg.seed}};
    ds.validate();
    return ds;
}

namespace {

std::vector<uint8_t> pack_labels(const std::vector<LabelVector>& labels, int width) {
    uint64_t nbits = static_cast<uint64_t>(labels.size()) * width;
    std::vector<uint8_t> packed((nbits + 7) / 8, 0);
    uint64_t pos = 0;
    for (const auto& l : labels) {
        for (int j = 0; j < width; ++j, ++pos)
            if (l.bits[j] == 1.0) packed[pos / 8] |= static_cast<uint8_t>(1u << (pos % 8));
    }
    return packed;
}

std::vector<LabelVector> unpack_labels(const std::vector<uint8_t>& packed, size_t count, int width,
                                       Mode mode) {
    std::vector<LabelVector> out;
    out.reserve(count);
    uint64_t pos = 0;
    for (size_t i = 0; i < count; ++i) {
        Vec bits(width);
        for (int j = 0; j < width; ++j, ++pos)
            bits[j] = (packed[pos / 8] >> (pos % 8)) & 1 ? 1.0 : 0.0;
        out.emplace_back(std::move(bits), mode);
    }
    return out;
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    container::Writer w("dataset");
    auto& meta = w.meta();
    meta["mode"] = mode_name(ds.mode);
    meta["input_dim"] = ds.input_dim;
    meta["n_noisy"] = ds.n_noisy;
    meta["n_clean"] = ds.n_clean;
    meta["instances"] = ds.size();
    meta["provenance"] = ds.provenance;
    for (int s = 0; s < 4; ++s)
        meta["split_counts"].push_back(ds.split_indices(static_cast<Split>(s)).size());

    std::vector<float> feats(ds.size() * ds.input_dim);
    for (size_t i = 0; i < ds.size(); ++i)
        for (int j = 0; j < ds.input_dim; ++j)
            feats[i * ds.input_dim + j] = static_cast<float>(ds.features(static_cast<long>(i), j));
    w.add_f32("features", feats);
    w.add_bits("noisy_labels", pack_labels(ds.noisy_labels, ds.n_noisy),
               ds.size() * static_cast<uint64_t>(ds.n_noisy));
    bool all_clean = true;
    for (size_t i = 0; i < ds.size(); ++i) all_clean = all_clean && ds.has_clean(i);
    meta["has_clean_labels"] = all_clean;
    if (all_clean)
        w.add_bits("clean_labels", pack_labels(ds.clean_labels, ds.n_clean),
                   ds.size() * static_cast<uint64_t>(ds.n_clean));
    w.add_u8("splits", ds.splits);
    w.write(path);
}

LabeledDataset load_dataset(const std::string& path) {
    container::Reader r(path);
    if (r.kind() != "dataset") throw std::runtime_error("not a dataset file: " + path);
    LabeledDataset ds;
    ds.mode = mode_from_name(r.meta().at("mode").get<std::string>());
    ds.input_dim = r.meta().at("input_dim").get<int>();
    ds.n_noisy = r.meta().at("n_noisy").get<int>();
    ds.n_clean = r.meta().at("n_clean").get<int>();
    ds.provenance = r.meta().value("provenance", nlohmann::json::object());
    auto count = r.meta().at("instances").get<size_t>();

    auto feats = r.read_f32("features");
    if (feats.size() != count * static_cast<size_t>(ds.input_dim))
        throw std::runtime_error("dataset feature block size mismatch");
    ds.features.resize(static_cast<long>(count), ds.input_dim);
    for (size_t i = 0; i < count; ++i)
        for (int j = 0; j < ds.input_dim; ++j)
            ds.features(static_cast<long>(i), j) = feats[i * ds.input_dim + j];

    ds.noisy_labels = unpack_labels(r.read_bits("noisy_labels"), count, ds.n_noisy, ds.mode);
    if (r.meta().value("has_clean_labels", false))
        ds.clean_labels = unpack_labels(r.read_bits("clean_labels"), count, ds.n_clean, ds.mode);
    ds.splits = r.read_u8("splits");
    ds.validate();
    return ds;
}

}  // namespace crfnoise
