#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "octpredict/byol.hpp"
#include "octpredict/dataset.hpp"
#include "octpredict/gradcheck_suite.hpp"
#include "octpredict/metrics.hpp"
#include "octpredict/models.hpp"
#include "octpredict/report.hpp"
#include "octpredict/synthetic.hpp"
#include "octpredict/tabular.hpp"
#include "octpredict/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oct;

namespace {

struct Options {
    std::string config_path;
    std::string preset;
    std::string dataset;
    std::string weights;
    std::string in_path;
    std::string out = "out";
    std::uint64_t seed = 0;
    int runs = 10;
    int jobs = 1;
    int input_size = 224;
    json config;  // parsed --config document, possibly empty
};

void add_common_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--preset", o.preset, "model preset name");
    cmd->add_option("--dataset", o.dataset, "dataset directory (manifest.csv inside)");
    cmd->add_option("--weights", o.weights, "weight file or run prefix input");
    cmd->add_option("--in", o.in_path, "input file or directory for evaluate/report");
    cmd->add_option("--seed", o.seed, "base seed");
    cmd->add_option("--runs", o.runs, "number of replicate runs");
    cmd->add_option("--jobs", o.jobs, "parallel run limit");
    cmd->add_option("--size", o.input_size, "model input size in pixels");
    cmd->add_option("--out", o.out, "output directory");
}

void load_config(Options& o) {
    if (o.config_path.empty()) {
        o.config = json::object();
        return;
    }
    std::ifstream in(o.config_path);
    if (!in) throw std::runtime_error("cannot open config " + o.config_path);
    o.config = json::parse(in);
    // config supplies defaults; explicit flags already hold their values and
    // are only overwritten when still at the documented default
    if (o.preset.empty() && o.config.contains("preset")) o.preset = o.config["preset"].get<std::string>();
    if (o.dataset.empty() && o.config.contains("dataset")) o.dataset = o.config["dataset"].get<std::string>();
    if (o.weights.empty() && o.config.contains("weights")) o.weights = o.config["weights"].get<std::string>();
    if (o.config.contains("base_seed") && o.seed == 0) o.seed = o.config["base_seed"].get<std::uint64_t>();
    if (o.config.contains("n_runs") && o.runs == 10) o.runs = o.config["n_runs"].get<int>();
    if (o.config.contains("input_size") && o.input_size == 224) o.input_size = o.config["input_size"].get<int>();
    if (o.config.contains("out") && o.out == "out") o.out = o.config["out"].get<std::string>();
}

void atomic_write(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

void ensure_out_dir(const Options& o) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + o.out + ": " + ec.message());
}

// Every command leaves a copy of its fully resolved settings next to its
// outputs so any artifact can be regenerated.
void write_resolved(const Options& o, const std::string& command, json extra = json::object()) {
    json j;
    j["command"] = command;
    j["preset"] = o.preset;
    j["dataset"] = o.dataset;
    j["weights"] = o.weights;
    j["seed"] = o.seed;
    j["runs"] = o.runs;
    j["input_size"] = o.input_size;
    j["out"] = o.out;
    for (auto& [k, v] : extra.items()) j[k] = v;
    atomic_write((fs::path(o.out) / (command + ".config.json")).string(), j.dump(2) + "\n");
}

struct Preset {
    ArchitectureSpec spec;
    bool freeze = false;
    bool needs_weights = false;
};

Preset resolve_preset(const std::string& name, int input_size) {
    Preset p;
    p.spec.input_size = input_size;
    if (name == "cbr-tiny") p.spec.arch = Arch::CbrTiny;
    else if (name == "cbr-small") p.spec.arch = Arch::CbrSmall;
    else if (name == "cbr-wide") p.spec.arch = Arch::CbrWide;
    else if (name == "cbr-tall") p.spec.arch = Arch::CbrTall;
    else if (name == "rn-rand") p.spec.arch = Arch::ResNet50;
    else if (name == "rn-in" || name == "rn-by") {
        p.spec.arch = Arch::ResNet50;
        p.needs_weights = true;
    } else if (name == "rn-in-frozen" || name == "rn-by-frozen") {
        p.spec.arch = Arch::ResNet50;
        p.needs_weights = true;
        p.freeze = true;
    } else {
        throw std::runtime_error("unknown preset '" + name +
                                 "' (expected cbr-tiny|cbr-small|cbr-wide|cbr-tall|rn-rand|rn-in|rn-in-frozen|rn-by|rn-by-frozen)");
    }
    return p;
}

TrainConfig train_config_from(const Options& o) {
    TrainConfig c;
    if (o.config.contains("train")) {
        const json& t = o.config["train"];
        if (t.contains("batch_size")) c.batch_size = t["batch_size"].get<int>();
        if (t.contains("lr")) c.lr = t["lr"].get<double>();
        if (t.contains("max_steps")) c.max_steps = t["max_steps"].get<int>();
        if (t.contains("eval_every")) c.eval_every = t["eval_every"].get<int>();
    }
    c.aug = c.aug.scaled_to(o.input_size);
    return c;
}

BYOLConfig byol_config_from(const Options& o) {
    BYOLConfig c;
    if (o.config.contains("byol")) {
        const json& b = o.config["byol"];
        if (b.contains("epochs")) c.epochs = b["epochs"].get<int>();
        if (b.contains("batch_size")) c.batch_size = b["batch_size"].get<int>();
        if (b.contains("accumulation")) c.accumulation = b["accumulation"].get<int>();
        if (b.contains("tau")) c.tau = b["tau"].get<double>();
        if (b.contains("projector_dim")) c.projector_dim = b["projector_dim"].get<int>();
        if (b.contains("predictor_hidden")) c.predictor_hidden = b["predictor_hidden"].get<int>();
        if (b.contains("lr")) c.lr = b["lr"].get<double>();
    }
    c.aug = c.aug.scaled_to(o.input_size);
    return c;
}

CVConfig cv_config_from(const Options& o) {
    CVConfig c = CVConfig::defaults(o.seed);
    if (o.config.contains("cv")) {
        const json& v = o.config["cv"];
        if (v.contains("folds")) c.folds = v["folds"].get<int>();
        if (v.contains("c_grid")) c.c_grid = v["c_grid"].get<std::vector<double>>();
    }
    return c;
}

const std::vector<std::string> kClinicalNames = {"age", "mh_duration", "elevated_edge", "pseudophakic",
                                                 "baseline_va"};

std::vector<double> clinical_row(const PatientRecord& r) {
    return {r.clinical.age, r.clinical.mh_duration, r.clinical.elevated_edge ? 1.0 : 0.0,
            r.clinical.pseudophakic ? 1.0 : 0.0, static_cast<double>(r.clinical.baseline_va)};
}

struct RegressionData {
    std::vector<const PatientRecord*> fit_recs;   // train + val, the regression set
    std::vector<const PatientRecord*> test_recs;
    std::vector<std::vector<double>> fit_x;
    std::vector<int> fit_y;
    std::vector<std::vector<double>> test_x;
    std::vector<int> test_y;
};

RegressionData regression_data(const DatasetManifest& manifest) {
    RegressionData d;
    for (const auto& r : manifest.records) {
        if (r.split == Split::Test) {
            d.test_recs.push_back(&r);
            d.test_x.push_back(clinical_row(r));
            d.test_y.push_back(derive_label(r) ? 1 : 0);
        } else {
            d.fit_recs.push_back(&r);
            d.fit_x.push_back(clinical_row(r));
            d.fit_y.push_back(derive_label(r) ? 1 : 0);
        }
    }
    if (d.fit_x.empty()) throw std::runtime_error("dataset has no train/val records");
    return d;
}

json metrics_json(const MetricSet& m) {
    return {{"f1", m.f1}, {"auroc", m.auroc}, {"recall", m.recall}, {"specificity", m.specificity}};
}

// Fits on the regression set, evaluates on the test split, writes the model,
// its importances, and the metrics. Shared by train-regression and fuse.
void fit_and_emit(const Options& o, const std::vector<std::vector<double>>& fit_raw,
                  const std::vector<std::vector<double>>& test_raw, const std::vector<int>& fit_y,
                  const std::vector<int>& test_y, const std::vector<std::string>& names,
                  const std::string& stem) {
    WhiteningParams wp = fit_whitening(fit_raw);
    RegressionModel model = fit_logistic_cv(apply_whitening(fit_raw, wp), fit_y, cv_config_from(o), names, wp);
    atomic_write((fs::path(o.out) / (stem + ".json")).string(), model.to_json() + "\n");

    const std::vector<double> importance = feature_importance(model);
    atomic_write((fs::path(o.out) / (stem + "_importance.svg")).string(),
                 render_importance_svg(names, importance));

    json result;
    result["c"] = model.c;
    result["importance"] = importance;
    if (!test_raw.empty()) {
        const auto test_w = apply_whitening(test_raw, wp);
        std::vector<double> scores;
        for (const auto& row : test_w) scores.push_back(predict_proba(model, row));
        try {
            result["test_metrics"] = metrics_json(compute_metric_set(scores, test_y));
        } catch (const SingleClassError&) {
            result["test_metrics"] = nullptr;
        }
    }
    atomic_write((fs::path(o.out) / (stem + "_result.json")).string(), result.dump(2) + "\n");
}

int cmd_synth_gen(Options& o) {
    SyntheticConfig sc;
    if (o.config.contains("synth")) sc = SyntheticConfig::from_json(o.config["synth"].dump());
    if (o.input_size != 224) sc.image_size = o.input_size;
    ensure_out_dir(o);
    generate_synthetic(sc, o.seed, o.out);
    write_resolved(o, "synth-gen", {{"synth", json::parse(sc.to_json())}});
    return 0;
}

int cmd_pretrain_byol(Options& o) {
    if (o.preset.empty()) o.preset = "rn-by";
    const Preset p = resolve_preset(o.preset == "rn-by" || o.preset == "rn-by-frozen" ? "rn-rand" : o.preset,
                                    o.input_size);
    if (o.dataset.empty()) throw std::runtime_error("pretrain-byol requires --dataset (a directory of PNGs)");
    std::string corpus = o.dataset;
    if (fs::is_directory(fs::path(corpus) / "images")) corpus = (fs::path(corpus) / "images").string();
    ensure_out_dir(o);
    BYOLConfig bc = byol_config_from(o);
    const std::string out_file = (fs::path(o.out) / "encoder.weights").string();
    PretrainResult r = pretrain_to_file(p.spec, corpus, bc, o.seed, out_file);
    json j;
    j["epoch_losses"] = r.epoch_losses;
    j["optimizer_steps"] = r.optimizer_steps;
    atomic_write((fs::path(o.out) / "byol_losses.json").string(), j.dump(2) + "\n");
    write_resolved(o, "pretrain-byol");
    return 0;
}

int cmd_train_vision(Options& o) {
    if (o.preset.empty()) throw std::runtime_error("train-vision requires --preset");
    const Preset p = resolve_preset(o.preset, o.input_size);
    if (p.needs_weights && o.weights.empty())
        throw std::runtime_error("preset " + o.preset + " requires --weights (an initialization file)");
    if (o.dataset.empty()) throw std::runtime_error("train-vision requires --dataset");
    if (o.runs < 1) throw std::runtime_error("train-vision requires --runs >= 1");
    const DatasetManifest manifest = load_manifest((fs::path(o.dataset) / "manifest.csv").string());
    ensure_out_dir(o);

    TrainConfig base = train_config_from(o);
    base.freeze_backbone = p.freeze;
    base.init_weights = p.needs_weights ? o.weights : "";

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= o.runs || failed.load()) return;
            try {
                TrainConfig c = base;
                c.seed = o.seed + static_cast<std::uint64_t>(i);
                RunResult r = train_run(p.spec, manifest, o.dataset, c);
                save_run_result((fs::path(o.out) / ("run_" + std::to_string(i))).string(), r);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!failed.exchange(true)) first_error = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min(o.jobs, o.runs));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load()) throw std::runtime_error(first_error);
    write_resolved(o, "train-vision",
                   {{"train", {{"batch_size", base.batch_size},
                               {"lr", base.lr},
                               {"max_steps", base.max_steps},
                               {"eval_every", base.eval_every}}}});
    return 0;
}

int cmd_train_regression(Options& o) {
    if (o.dataset.empty()) throw std::runtime_error("train-regression requires --dataset");
    const DatasetManifest manifest = load_manifest((fs::path(o.dataset) / "manifest.csv").string());
    ensure_out_dir(o);
    RegressionData d = regression_data(manifest);
    fit_and_emit(o, d.fit_x, d.test_x, d.fit_y, d.test_y, kClinicalNames, "regression");
    write_resolved(o, "train-regression");
    return 0;
}

int cmd_fuse(Options& o) {
    if (o.dataset.empty()) throw std::runtime_error("fuse requires --dataset");
    if (o.weights.empty()) throw std::runtime_error("fuse requires --weights (a train-vision run prefix)");
    const DatasetManifest manifest = load_manifest((fs::path(o.dataset) / "manifest.csv").string());
    ensure_out_dir(o);
    RegressionData d = regression_data(manifest);

    const ModelWeights w = load_model_weights(o.weights + ".weights");
    ArchitectureSpec spec;
    spec.arch = arch_from_name(w.arch);
    spec.input_size = o.input_size;
    VisionModel model(spec, w, o.seed);
    ImageCache cache(o.dataset);
    const AugmentationConfig aug = AugmentationConfig{}.scaled_to(o.input_size);
    auto probs_for = [&](const std::vector<const PatientRecord*>& recs) {
        std::vector<double> out;
        for (const PatientRecord* r : recs) out.push_back(predict_patient(model, *r, cache, aug));
        return out;
    };
    const auto fit_x = late_fusion_features(d.fit_x, probs_for(d.fit_recs));
    const auto test_x = late_fusion_features(d.test_x, probs_for(d.test_recs));
    std::vector<std::string> names = kClinicalNames;
    names.push_back("cnn_prediction");
    fit_and_emit(o, fit_x, test_x, d.fit_y, d.test_y, names, "fusion");
    write_resolved(o, "fuse");
    return 0;
}

int cmd_evaluate(Options& o) {
    if (o.in_path.empty()) throw std::runtime_error("evaluate requires --in (a train-vision output directory)");
    std::vector<MetricSet> per_run;
    for (int i = 0;; ++i) {
        const std::string prefix = (fs::path(o.in_path) / ("run_" + std::to_string(i))).string();
        if (!fs::exists(prefix + ".json")) break;
        per_run.push_back(load_run_result(prefix).test_metrics);
    }
    if (per_run.size() < 2) throw std::runtime_error("evaluate needs at least 2 run results in " + o.in_path);
    ensure_out_dir(o);

    auto collect = [&](auto getter) {
        std::vector<double> v;
        for (const auto& m : per_run) v.push_back(getter(m) * 100.0);
        return aggregate_runs(v);
    };
    ModelReportRow row;
    row.model = o.preset.empty() ? "model" : o.preset;
    row.config = "images";
    row.f1 = collect([](const MetricSet& m) { return m.f1; });
    row.auroc = collect([](const MetricSet& m) { return m.auroc; });
    row.recall = collect([](const MetricSet& m) { return m.recall; });
    row.specificity = collect([](const MetricSet& m) { return m.specificity; });
    atomic_write((fs::path(o.out) / "metrics.csv").string(), render_csv({row}));
    write_resolved(o, "evaluate");
    return 0;
}

std::vector<ModelReportRow> parse_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "model,config,metric,mean,ci95,max,n_runs")
        throw std::runtime_error(path + ": expected header model,config,metric,mean,ci95,max,n_runs");
    std::vector<ModelReportRow> rows;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string model, config, metric, f;
        std::getline(ss, model, ',');
        std::getline(ss, config, ',');
        std::getline(ss, metric, ',');
        AggregateStat s;
        std::getline(ss, f, ',');
        s.mean = std::stod(f);
        std::getline(ss, f, ',');
        s.ci_half_width = std::stod(f);
        std::getline(ss, f, ',');
        s.max = std::stod(f);
        std::getline(ss, f, ',');
        s.n_runs = std::stoi(f);
        auto key = std::make_pair(model, config);
        if (!index.count(key)) {
            index[key] = rows.size();
            rows.push_back(ModelReportRow{model, config, {}, {}, {}, {}});
        }
        ModelReportRow& r = rows[index[key]];
        if (metric == "f1") r.f1 = s;
        else if (metric == "auroc") r.auroc = s;
        else if (metric == "recall") r.recall = s;
        else if (metric == "specificity") r.specificity = s;
        else throw std::runtime_error(path + ": unknown metric '" + metric + "'");
    }
    if (rows.empty()) throw std::runtime_error(path + ": no metric rows");
    return rows;
}

int cmd_report(Options& o) {
    if (o.in_path.empty()) throw std::runtime_error("report requires --in (a metrics.csv file)");
    const std::vector<ModelReportRow> rows = parse_metrics_csv(o.in_path);
    ensure_out_dir(o);
    atomic_write((fs::path(o.out) / "report.md").string(), render_markdown(rows));
    atomic_write((fs::path(o.out) / "report.csv").string(), render_csv(rows));
    atomic_write((fs::path(o.out) / "figure.svg").string(), render_figure_svg(rows));
    write_resolved(o, "report");
    return 0;
}

int cmd_gradcheck() { return run_gradcheck_suite(std::cout) ? 0 : 1; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OCT-based surgical outcome prediction experiments"};
    app.require_subcommand(1);

    Options o;
    const char* names[] = {"synth-gen",        "pretrain-byol", "train-vision", "train-regression",
                           "fuse",             "evaluate",      "report",       "gradcheck"};
    std::map<std::string, CLI::App*> cmds;
    for (const char* n : names) {
        CLI::App* c = app.add_subcommand(n);
        add_common_flags(c, o);
        cmds[n] = c;
    }

    CLI11_PARSE(app, argc, argv);

    try {
        load_config(o);
        if (cmds["synth-gen"]->parsed()) return cmd_synth_gen(o);
        if (cmds["pretrain-byol"]->parsed()) return cmd_pretrain_byol(o);
        if (cmds["train-vision"]->parsed()) return cmd_train_vision(o);
        if (cmds["train-regression"]->parsed()) return cmd_train_regression(o);
        if (cmds["fuse"]->parsed()) return cmd_fuse(o);
        if (cmds["evaluate"]->parsed()) return cmd_evaluate(o);
        if (cmds["report"]->parsed()) return cmd_report(o);
        if (cmds["gradcheck"]->parsed()) return cmd_gradcheck();
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
    return 0;
}
