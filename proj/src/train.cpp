#include "octpredict/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "octpredict/rng.hpp"
#include "octpredict/optim.hpp"

namespace oct {

namespace {

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

// Forward a set of preprocessed single-image tensors through the model in
// evaluation mode, chunked to bound peak memory.
std::vector<double> eval_logits(VisionModel& model, const std::vector<TensorF>& images, int chunk) {
    std::vector<double> out;
    out.reserve(images.size());
    const int s = model.spec().input_size;
    const std::size_t plane = static_cast<std::size_t>(3) * s * s;
    for (const TensorF& img : images)
        if (img.data.size() != plane)
            throw std::invalid_argument("eval batch: image tensor " + shape_str(img.shape) +
                                        " does not match model input size " + std::to_string(s));
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t b = std::min<std::size_t>(chunk, images.size() - start);
        TensorF batch(std::vector<std::int64_t>{static_cast<std::int64_t>(b), 3, s, s});
        for (std::size_t i = 0; i < b; ++i)
            std::copy(images[start + i].data.begin(), images[start + i].data.end(), batch.data.begin() + i * plane);
        const std::vector<float> logits = model.forward_logits(batch, Mode::Eval);
        out.insert(out.end(), logits.begin(), logits.end());
    }
    return out;
}

// Per-patient probability from consecutive (h, v) logit pairs.
std::vector<double> patient_probs(const std::vector<double>& logits) {
    std::vector<double> out(logits.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * (sigmoid(logits[2 * i]) + sigmoid(logits[2 * i + 1]));
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
    if (lr <= 0) throw std::invalid_argument("train config: lr must be positive");
    if (max_steps < 1) throw std::invalid_argument("train config: max_steps must be positive");
    if (eval_every < 1 || max_steps % eval_every != 0)
        throw std::invalid_argument("train config: eval_every must be positive and divide max_steps");
    aug.validate();
}

const ImageBuffer& ImageCache::get(const std::string& rel_path) {
    auto it = cache_.find(rel_path);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(rel_path, decode_png(resolve_path(dir_, rel_path))).first->second;
}

int select_best(const std::vector<std::pair<int, double>>& curve) {
    if (curve.empty()) throw std::invalid_argument("select_best: empty curve");
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].second > curve[best].second) best = i;
    return curve[best].first;
}

double predict_patient(VisionModel& model, const PatientRecord& record, ImageCache& cache,
                       const AugmentationConfig& aug) {
    std::vector<TensorF> views;
    views.push_back(preprocess_eval(cache.get(record.oct_h), aug));
    views.push_back(preprocess_eval(cache.get(record.oct_v), aug));
    const std::vector<double> logits = eval_logits(model, views, 2);
    return 0.5 * (sigmoid(logits[0]) + sigmoid(logits[1]));
}

RunResult train_run(const ArchitectureSpec& spec, const DatasetManifest& manifest, const std::string& dataset_dir,
                    const TrainConfig& config) {
    config.validate();
    if (config.aug.final_size != spec.input_size)
        throw std::invalid_argument("train_run: augmentation final_size " + std::to_string(config.aug.final_size) +
                                    " does not match model input size " + std::to_string(spec.input_size));
    const auto train_recs = manifest.in_split(Split::Train);
    const auto val_recs = manifest.in_split(Split::Val);
    const auto test_recs = manifest.in_split(Split::Test);
    if (train_recs.empty()) throw std::invalid_argument("train_run: empty training split");
    if (val_recs.empty()) throw std::invalid_argument("train_run: empty validation split");

    ImageCache cache(dataset_dir);

    std::vector<std::size_t> train_indices;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        if (manifest.records[i].split == Split::Train) train_indices.push_back(i);
    std::vector<TrainSample> samples = duplicate_per_oct(manifest.records, train_indices);

    auto eval_tensors = [&](const std::vector<const PatientRecord*>& recs) {
        std::vector<TensorF> out;
        out.reserve(recs.size() * 2);
        for (const PatientRecord* r : recs) {
            out.push_back(preprocess_eval(cache.get(r->oct_h), config.aug));
            out.push_back(preprocess_eval(cache.get(r->oct_v), config.aug));
        }
        return out;
    };
    const std::vector<TensorF> val_tensors = eval_tensors(val_recs);
    const std::vector<TensorF> test_tensors = eval_tensors(test_recs);
    auto labels_of = [](const std::vector<const PatientRecord*>& recs) {
        std::vector<int> y;
        for (const PatientRecord* r : recs) y.push_back(derive_label(*r) ? 1 : 0);
        return y;
    };
    const std::vector<int> val_labels = labels_of(val_recs);
    const std::vector<int> test_labels = labels_of(test_recs);

    std::unique_ptr<VisionModel> model;
    if (config.init_weights.empty()) {
        model = std::make_unique<VisionModel>(spec, config.seed);
    } else {
        model = std::make_unique<VisionModel>(spec, load_model_weights(config.init_weights), config.seed);
    }
    if (config.freeze_backbone) model->freeze_backbone();

    Adam<float> opt(model->trainable_params(), static_cast<float>(config.lr));

    RunResult result;
    const int s = spec.input_size;
    const std::size_t plane = static_cast<std::size_t>(3) * s * s;

    int step = 0;
    std::uint64_t epoch = 0;
    while (step < config.max_steps) {
        Rng shuffle_rng = Rng::substream(config.seed, 0xE70C, epoch);
        for (std::size_t i = samples.size(); i > 1; --i)
            std::swap(samples[i - 1], samples[shuffle_rng.uniform_int(static_cast<std::int64_t>(i))]);

        for (std::size_t start = 0; start < samples.size() && step < config.max_steps; start += config.batch_size) {
            const std::size_t b = std::min<std::size_t>(config.batch_size, samples.size() - start);
            TensorF batch(std::vector<std::int64_t>{static_cast<std::int64_t>(b), 3, s, s});
            std::vector<float> targets(b);
            for (std::size_t i = 0; i < b; ++i) {
                const TrainSample& smp = samples[start + i];
                const PatientRecord& rec = manifest.records[smp.record_index];
                Rng aug_rng = Rng::substream(config.seed, 0xA06, static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(i));
                const TensorF img =
                    augment_train(cache.get(smp.view == 0 ? rec.oct_h : rec.oct_v), config.aug, aug_rng);
                std::copy(img.data.begin(), img.data.end(), batch.data.begin() + i * plane);
                targets[i] = smp.label ? 1.0f : 0.0f;
            }

            opt.zero_grad();
            ad::Var<float> logits = model->forward(batch, Mode::Train);
            ad::Var<float> loss = ad::bce_with_logits(logits, targets);
            loss.backward();
            opt.step();
            ++step;
            result.train_loss_curve.emplace_back(step, static_cast<double>(loss.scalar()));

            if (step % config.eval_every == 0) {
                const std::vector<double> scores = patient_probs(eval_logits(*model, val_tensors, config.batch_size));
                const double val_auroc = auroc(scores, val_labels);
                result.val_auroc_curve.emplace_back(step, val_auroc);
                if (result.best_weights.entries.empty() || val_auroc > result.best_val_auroc) {
                    result.best_val_auroc = val_auroc;
                    result.best_step = step;
                    result.best_weights = model->weights();
                }
            }
        }
        ++epoch;
    }

    model->load(result.best_weights);
    if (!test_recs.empty()) {
        const std::vector<double> scores = patient_probs(eval_logits(*model, test_tensors, config.batch_size));
        try {
            result.test_metrics = compute_metric_set(scores, test_labels);
        } catch (const SingleClassError&) {
            // a single-class test split (tiny datasets) leaves the metrics at 0
        }
    }
    return result;
}

void save_run_result(const std::string& out_prefix, const RunResult& result) {
    save_model_weights(out_prefix + ".weights", result.best_weights);
    nlohmann::json j;
    j["best_step"] = result.best_step;
    j["best_val_auroc"] = result.best_val_auroc;
    j["val_auroc_curve"] = result.val_auroc_curve;
    j["train_loss_curve"] = result.train_loss_curve;
    j["test_metrics"] = {{"f1", result.test_metrics.f1},
                         {"auroc", result.test_metrics.auroc},
                         {"recall", result.test_metrics.recall},
                         {"specificity", result.test_metrics.specificity}};
    const std::string path = out_prefix + ".json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out << j.dump(2) << "\n";
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

RunResult load_run_result(const std::string& out_prefix) {
    RunResult r;
    r.best_weights = load_model_weights(out_prefix + ".weights");
    std::ifstream in(out_prefix + ".json");
    if (!in) throw std::runtime_error("cannot open " + out_prefix + ".json");
    nlohmann::json j = nlohmann::json::parse(in);
    r.best_step = j.at("best_step").get<int>();
    r.best_val_auroc = j.at("best_val_auroc").get<double>();
    r.val_auroc_curve = j.at("val_auroc_curve").get<std::vector<std::pair<int, double>>>();
    r.train_loss_curve = j.at("train_loss_curve").get<std::vector<std::pair<int, double>>>();
    const auto& m = j.at("test_metrics");
    r.test_metrics.f1 = m.at("f1").get<double>();
    r.test_metrics.auroc = m.at("auroc").get<double>();
    r.test_metrics.recall = m.at("recall").get<double>();
    r.test_metrics.specificity = m.at("specificity").get<double>();
    return r;
}

}  // namespace oct
