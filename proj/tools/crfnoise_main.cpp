// crfnoise: synthesize noisy-labeled datasets, train the aux model, train the
// robust classifier, evaluate it, and propose label corrections.
//
// Exit codes: 0 success, 2 config error, 3 data/IO error, 4 numeric failure.

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "crfnoise/aux_model.hpp"
#include "crfnoise/container.hpp"
#include "crfnoise/dataset.hpp"
#include "crfnoise/metrics.hpp"
#include "crfnoise/trainer.hpp"
#include "crfnoise/variational.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crfnoise;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key \"" + key + "\"");
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    require_keys(j, "config",
                 {"mode", "seed", "out", "dataset", "aux_model", "checkpoint", "synth", "aux",
                  "train", "eval", "clean"});
    return j;
}

NoiseSpec parse_noise(const json& j, const std::string& where) {
    require_keys(j, where,
                 {"kind", "rate", "T", "partner", "tags_per_label_min", "tags_per_label_max",
                  "background_rate"});
    NoiseSpec spec;
    spec.kind = NoiseSpec::kind_from_name(j.value("kind", "none"));
    spec.rate = j.value("rate", 0.0);
    if (j.contains("T")) {
        auto rows = j.at("T").get<std::vector<std::vector<double>>>();
        Mat T(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != static_cast<size_t>(T.cols()))
                throw ConfigError(where + ".T: ragged matrix");
            for (size_t c = 0; c < rows[r].size(); ++c) T(r, c) = rows[r][c];
        }
        spec.T = std::move(T);
    }
    if (j.contains("partner")) spec.partner = j.at("partner").get<std::vector<int>>();
    spec.tags_per_label_min = j.value("tags_per_label_min", spec.tags_per_label_min);
    spec.tags_per_label_max = j.value("tags_per_label_max", spec.tags_per_label_max);
    spec.background_rate = j.value("background_rate", spec.background_rate);
    return spec;
}

SynthConfig parse_synth(const json& cfg) {
    if (!cfg.contains("synth")) throw ConfigError("synth command needs a \"synth\" section");
    const json& j = cfg.at("synth");
    require_keys(j, "synth",
                 {"classes", "noisy_labels", "input_dim", "separation", "train_size", "val_size",
                  "test_size", "clean_fraction", "noise"});
    SynthConfig s;
    s.mode = mode_from_name(cfg.value("mode", "multiclass"));
    s.classes = j.value("classes", s.classes);
    s.noisy_labels = j.value("noisy_labels", s.mode == Mode::multiclass ? s.classes : 4 * s.classes);
    s.input_dim = j.value("input_dim", s.input_dim);
    s.separation = j.value("separation", s.separation);
    s.train_size = j.value("train_size", s.train_size);
    s.val_size = j.value("val_size", s.val_size);
    s.test_size = j.value("test_size", s.test_size);
    s.clean_fraction = j.value("clean_fraction", s.clean_fraction);
    if (j.contains("noise")) s.noise = parse_noise(j.at("noise"), "synth.noise");
    s.seed = cfg.value("seed", uint64_t{0});
    return s;
}

TrainConfig parse_train(const json& cfg) {
    TrainConfig t;
    if (cfg.contains("train")) {
        const json& j = cfg.at("train");
        require_keys(j, "train",
                     {"epochs", "minibatch_size", "clean_fraction", "learning_rate", "use_adam",
                      "adam_eps", "clip_norm", "alpha_start", "alpha_end", "alpha_epochs",
                      "alpha_shape", "variant", "sweeps_per_update", "chains_per_instance",
                      "hidden_units", "net_kind", "net_hidden", "predict_chains",
                      "predict_sweeps", "predict_burnin", "eval_noisy_subset"});
        t.epochs = j.value("epochs", t.epochs);
        t.minibatch_size = j.value("minibatch_size", t.minibatch_size);
        t.clean_fraction = j.value("clean_fraction", t.clean_fraction);
        t.learning_rate = j.value("learning_rate", t.learning_rate);
        t.use_adam = j.value("use_adam", t.use_adam);
        t.adam_eps = j.value("adam_eps", t.adam_eps);
        t.clip_norm = j.value("clip_norm", t.clip_norm);
        t.alpha.start = j.value("alpha_start", t.alpha.start);
        t.alpha.end = j.value("alpha_end", t.alpha.end);
        t.alpha.anneal_epochs = j.value("alpha_epochs", t.alpha.anneal_epochs);
        if (j.value("alpha_shape", "linear") == std::string("exponential"))
            t.alpha.shape = AlphaSchedule::Shape::exponential;
        t.variant = variant_from_name(j.value("variant", variant_name(t.variant)));
        t.gibbs.sweeps_per_update = j.value("sweeps_per_update", t.gibbs.sweeps_per_update);
        t.chains_per_instance = j.value("chains_per_instance", t.chains_per_instance);
        t.hidden_units = j.value("hidden_units", t.hidden_units);
        t.net_kind = j.value("net_kind", "linear") == std::string("mlp1")
                         ? FeatureNet::Kind::mlp1
                         : FeatureNet::Kind::linear;
        t.net_hidden = j.value("net_hidden", t.net_hidden);
        t.predict_chains = j.value("predict_chains", t.predict_chains);
        t.predict_sweeps = j.value("predict_sweeps", t.predict_sweeps);
        t.predict_burnin = j.value("predict_burnin", t.predict_burnin);
        t.eval_noisy_subset = j.value("eval_noisy_subset", t.eval_noisy_subset);
    }
    t.seed = cfg.value("seed", uint64_t{0});
    return t;
}

// CLI overrides merged after the config file.
struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<std::string> out, variant;
    std::optional<double> alpha_start, alpha_end;
    std::optional<int> alpha_epochs;
};

struct LockFile {
    fs::path path;
    explicit LockFile(const fs::path& dir) : path(dir / ".crfnoise.lock") {
        int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw DataError("output directory is locked (remove " + path.string() +
                            " if no other run is active)");
        ::close(fd);
    }
    ~LockFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

std::string out_dir(const json& cfg, const Overrides& ov) {
    std::string out = ov.out.value_or(cfg.value("out", ""));
    if (out.empty()) throw ConfigError("no output directory (set \"out\" or pass --out)");
    fs::create_directories(out);
    return out;
}

std::string dataset_path(const json& cfg, const std::string& out) {
    return cfg.value("dataset", out + "/dataset.crfc");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << text;
}

json eval_report(TrainState& state, const LabeledDataset& data, const AuxModel* aux,
                 const TrainConfig& config, double alpha) {
    MetricReport rep;
    auto test_ids = data.split_indices(Split::test);
    std::vector<LabelVector> test_clean;
    for (int64_t i : test_ids) test_clean.push_back(data.eval_hidden_clean(static_cast<size_t>(i)));
    auto test_scores = predict_clean_scores(state, data, test_ids, config);
    if (data.mode == Mode::multiclass) {
        rep.prediction_accuracy = accuracy(test_scores, test_clean);
    } else {
        rep.map = mean_average_precision(test_scores, test_clean, &rep.per_class);
        rep.prediction_accuracy = rep.map;
    }

    auto dn = data.split_indices(Split::noisy_train);
    if (config.eval_noisy_subset > 0 && dn.size() > static_cast<size_t>(config.eval_noisy_subset))
        dn.resize(config.eval_noisy_subset);
    if (!dn.empty() && data.has_clean(static_cast<size_t>(dn.front()))) {
        std::vector<LabelVector> dn_clean;
        for (int64_t i : dn) dn_clean.push_back(data.eval_hidden_clean(static_cast<size_t>(i)));
        bool variational = aux != nullptr && state.variant != Variant::clean_only_ce &&
                           state.variant != Variant::noisy_only_ce;
        auto scores = variational ? recovery_scores(state, data, dn, *aux, alpha)
                                  : predict_clean_scores(state, data, dn, config);
        rep.recovery_accuracy = recovery_accuracy(scores, dn_clean, data.mode);
    }
    return rep.to_json();
}

int cmd_synth(const json& cfg, const Overrides& ov) {
    SynthConfig sc = parse_synth(cfg);
    if (ov.seed) sc.seed = *ov.seed;
    std::string out = out_dir(cfg, ov);
    LockFile lock(out);
    LabeledDataset ds = make_synthetic(sc);
    std::string path = dataset_path(cfg, out);
    save_dataset(ds, path);
    std::cerr << "synth: " << ds.size() << " instances"
              << " (noisy_train " << ds.split_indices(Split::noisy_train).size()
              << ", clean_train " << ds.split_indices(Split::clean_train).size() << ", val "
              << ds.split_indices(Split::val).size() << ", test "
              << ds.split_indices(Split::test).size() << ")\n";
    std::cout << path << "\n";
    return 0;
}

int cmd_train_aux(const json& cfg, const Overrides& ov) {
    std::string out = out_dir(cfg, ov);
    LockFile lock(out);
    LabeledDataset ds = load_dataset(dataset_path(cfg, out));

    json aj = cfg.value("aux", json::object());
    require_keys(aj, "aux",
                 {"kind", "T", "hidden_units", "epochs", "chains", "sweeps_per_update",
                  "minibatch_size", "learning_rate"});
    std::string kind = aj.value("kind", ds.mode == Mode::multiclass ? "transition" : "rbm");

    AuxModel aux;
    if (kind == "transition") {
        if (ds.mode != Mode::multiclass)
            throw ConfigError("transition aux model requires a multiclass dataset");
        Mat T;
        if (aj.contains("T")) {
            NoiseSpec spec = parse_noise(json{{"kind", "transition_matrix"}, {"T", aj.at("T")}},
                                         "aux");
            T = *spec.T;
        } else {
            // Count clean -> noisy transitions on the clean split.
            auto ids = ds.split_indices(Split::clean_train);
            if (ids.empty()) throw DataError("train-aux: dataset has no clean split");
            T = Mat::Constant(ds.n_clean, ds.n_clean, 1e-3);
            for (int64_t i : ids) {
                auto idx = static_cast<size_t>(i);
                T(ds.clean_for_training(idx).argmax(), ds.y(idx).argmax()) += 1.0;
            }
            for (int r = 0; r < T.rows(); ++r) T.row(r) /= T.row(r).sum();
        }
        aux.transition = fit_aux_transition(T);
    } else if (kind == "rbm") {
        auto ids = ds.split_indices(Split::clean_train);
        if (ids.empty()) throw DataError("train-aux: dataset has no clean split");
        std::vector<std::pair<LabelVector, LabelVector>> pairs;
        for (int64_t i : ids) {
            auto idx = static_cast<size_t>(i);
            pairs.emplace_back(ds.y(idx), ds.clean_for_training(idx));
        }
        AuxRbmTrainConfig rc;
        rc.hidden_units = aj.value("hidden_units", rc.hidden_units);
        rc.epochs = aj.value("epochs", rc.epochs);
        rc.chains = aj.value("chains", rc.chains);
        rc.sweeps_per_update = aj.value("sweeps_per_update", rc.sweeps_per_update);
        rc.minibatch_size = aj.value("minibatch_size", rc.minibatch_size);
        rc.learning_rate = aj.value("learning_rate", rc.learning_rate);
        rc.seed = ov.seed.value_or(cfg.value("seed", uint64_t{0}));
        aux.rbm = train_aux_rbm(pairs, rc, ds.mode);
    } else {
        throw ConfigError("aux.kind must be \"rbm\" or \"transition\"");
    }

    std::string path = cfg.value("aux_model", out + "/aux.crfc");
    save_aux_model(aux, path);
    std::cerr << "train-aux: wrote " << kind << " model to " << path << "\n";
    std::cout << path << "\n";
    return 0;
}

TrainConfig merged_train_config(const json& cfg, const Overrides& ov) {
    TrainConfig tc = parse_train(cfg);
    if (ov.seed) tc.seed = *ov.seed;
    if (ov.variant) tc.variant = variant_from_name(*ov.variant);
    if (ov.alpha_start) tc.alpha.start = *ov.alpha_start;
    if (ov.alpha_end) tc.alpha.end = *ov.alpha_end;
    if (ov.alpha_epochs) tc.alpha.anneal_epochs = *ov.alpha_epochs;
    tc.check();
    return tc;
}

AuxModel load_aux_for(const json& cfg, const std::string& out) {
    std::string path = cfg.value("aux_model", out + "/aux.crfc");
    return load_aux_model(path);
}

int cmd_train(const json& cfg, const Overrides& ov) {
    std::string out = out_dir(cfg, ov);
    LockFile lock(out);
    LabeledDataset ds = load_dataset(dataset_path(cfg, out));
    TrainConfig tc = merged_train_config(cfg, ov);

    AuxModel aux;
    bool needs_aux =
        tc.variant != Variant::clean_only_ce && tc.variant != Variant::noisy_only_ce;
    if (needs_aux) aux = load_aux_for(cfg, out);

    std::string ckpt = cfg.value("checkpoint", out + "/checkpoint.crfc");
    TrainState resumed;
    TrainState* resume = nullptr;
    if (fs::exists(ckpt)) {
        resumed = load_checkpoint(ckpt, ds, tc);
        resume = &resumed;
        std::cerr << "train: resuming from " << ckpt << " at epoch " << resumed.epoch << "\n";
    }
    TrainState state = train(ds, aux, tc, ckpt, resume);

    std::string log = "epoch,alpha,bound,val,recovery\n";
    for (const auto& line : state.metrics_log) log += line + "\n";
    write_text(out + "/metrics.csv", log);

    json rep = eval_report(state, ds, needs_aux ? &aux : nullptr, tc,
                           tc.alpha.at(std::max(0, tc.epochs - 1)));
    write_text(out + "/report.json", rep.dump(2) + "\n");
    std::cout << rep.dump() << "\n";
    return 0;
}

int cmd_eval(const json& cfg, const Overrides& ov) {
    std::string out = out_dir(cfg, ov);
    LabeledDataset ds = load_dataset(dataset_path(cfg, out));
    TrainConfig tc = merged_train_config(cfg, ov);
    std::string ckpt = cfg.value("checkpoint", out + "/checkpoint.crfc");
    TrainState state = load_checkpoint(ckpt, ds, tc);

    AuxModel aux;
    bool needs_aux =
        tc.variant != Variant::clean_only_ce && tc.variant != Variant::noisy_only_ce;
    if (needs_aux) aux = load_aux_for(cfg, out);

    json rep = eval_report(state, ds, needs_aux ? &aux : nullptr, tc,
                           tc.alpha.at(std::max(0, state.epoch - 1)));
    write_text(out + "/report.json", rep.dump(2) + "\n");
    std::cout << rep.dump() << "\n";
    return 0;
}

int cmd_clean(const json& cfg, const Overrides& ov) {
    std::string out = out_dir(cfg, ov);
    LockFile lock(out);
    LabeledDataset ds = load_dataset(dataset_path(cfg, out));
    TrainConfig tc = merged_train_config(cfg, ov);
    std::string ckpt = cfg.value("checkpoint", out + "/checkpoint.crfc");
    TrainState state = load_checkpoint(ckpt, ds, tc);
    AuxModel aux = load_aux_for(cfg, out);
    double alpha = tc.alpha.at(std::max(0, state.epoch - 1));

    json cj = cfg.value("clean", json::object());
    require_keys(cj, "clean", {"threshold", "top"});
    double threshold = cj.value("threshold", 0.5);
    int top = cj.value("top", 100);

    auto dn = ds.split_indices(Split::noisy_train);
    auto scores = recovery_scores(state, ds, dn, aux, alpha);

    Mat posterior(dn.size(), ds.n_clean);
    Mat proposed(dn.size(), ds.n_clean);
    struct Change {
        double confidence;
        int64_t index;
        std::string from, to;
    };
    std::vector<Change> changes;
    for (size_t i = 0; i < dn.size(); ++i) {
        posterior.row(static_cast<long>(i)) = scores[i].transpose();
        auto idx = static_cast<size_t>(dn[i]);
        Vec prop(ds.n_clean);
        if (ds.mode == Mode::multiclass) {
            int k;
            scores[i].maxCoeff(&k);
            prop = Vec::Unit(ds.n_clean, k);
        } else {
            for (int c = 0; c < ds.n_clean; ++c) prop[c] = scores[i][c] >= threshold ? 1.0 : 0.0;
        }
        proposed.row(static_cast<long>(i)) = prop.transpose();

        // A change is any disagreement between q's proposal and the observed
        // noisy label mapped onto the clean space (identity map when N == C).
        if (ds.n_noisy == ds.n_clean) {
            const Vec& obs = ds.y(idx).bits;
            if ((prop - obs).cwiseAbs().maxCoeff() > 0.5) {
                double conf = ds.mode == Mode::multiclass
                                  ? scores[i].maxCoeff()
                                  : (scores[i] - obs).cwiseAbs().maxCoeff();
                changes.push_back({conf, dn[i], "", ""});
            }
        }
    }
    container::Writer w("cleaned_labels");
    w.meta()["mode"] = mode_name(ds.mode);
    w.meta()["threshold"] = threshold;
    w.meta()["instances"] = dn.size();
    std::vector<uint64_t> ids(dn.begin(), dn.end());
    w.add_u64("indices", ids);
    w.add_mat("posterior", posterior);
    w.add_mat("proposed", proposed);
    w.write(out + "/cleaned.crfc");

    std::stable_sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.index < b.index;
    });
    std::string csv = "index,confidence\n";
    for (size_t i = 0; i < changes.size() && i < static_cast<size_t>(top); ++i)
        csv += std::to_string(changes[i].index) + "," + std::to_string(changes[i].confidence) +
               "\n";
    write_text(out + "/changes.csv", csv);
    std::cerr << "clean: " << changes.size() << " proposed label changes out of " << dn.size()
              << " noisy instances\n";
    std::cout << out + "/cleaned.crfc" << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noisy-label robust classifier training"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    uint64_t seed_arg = 0;
    std::string out_arg, variant_arg;
    double as = 0, ae = 0;
    int aep = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed_arg)->each([&](const std::string&) { ov.seed = seed_arg; });
        sub->add_option("--out", out_arg)->each([&](const std::string&) { ov.out = out_arg; });
        sub->add_option("--variant", variant_arg)->each([&](const std::string&) {
            ov.variant = variant_arg;
        });
        sub->add_option("--alpha-start", as)->each([&](const std::string&) {
            ov.alpha_start = as;
        });
        sub->add_option("--alpha-end", ae)->each([&](const std::string&) { ov.alpha_end = ae; });
        sub->add_option("--alpha-epochs", aep)->each([&](const std::string&) {
            ov.alpha_epochs = aep;
        });
    };
    for (const char* name : {"synth", "train-aux", "train", "eval", "clean"})
        add_common(app.add_subcommand(name));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        json cfg = load_config(config_path);
        std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "synth") return cmd_synth(cfg, ov);
        if (sub == "train-aux") return cmd_train_aux(cfg, ov);
        if (sub == "train") return cmd_train(cfg, ov);
        if (sub == "eval") return cmd_eval(cfg, ov);
        return cmd_clean(cfg, ov);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
