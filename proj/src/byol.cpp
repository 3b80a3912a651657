#include "octpredict/byol.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "octpredict/optim.hpp"
#include "octpredict/rng.hpp"

namespace oct {

void BYOLConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("byol config: epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("byol config: batch_size must be positive");
    if (accumulation < 1) throw std::invalid_argument("byol config: accumulation must be positive");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("byol config: tau must be in [0, 1]");
    if (projector_dim < 1 || predictor_hidden < 1)
        throw std::invalid_argument("byol config: projector/predictor dimensions must be positive");
    if (lr <= 0) throw std::invalid_argument("byol config: lr must be positive");
    aug.validate();
}

double byol_loss(const std::vector<double>& p, const std::vector<double>& z) {
    if (p.size() != z.size() || p.empty()) throw std::invalid_argument("byol_loss: vector size mismatch");
    double np = 0, nz = 0, dot = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        np += p[i] * p[i];
        nz += z[i] * z[i];
        dot += p[i] * z[i];
    }
    if (np == 0 || nz == 0) throw std::invalid_argument("byol_loss: zero-norm vector");
    return 2.0 - 2.0 * dot / (std::sqrt(np) * std::sqrt(nz));
}

void ema_update(ModelWeights& target, const ModelWeights& online, double tau) {
    if (target.entries.size() != online.entries.size())
        throw std::invalid_argument("ema_update: entry count mismatch");
    for (std::size_t i = 0; i < target.entries.size(); ++i) {
        auto& [tp, tt] = target.entries[i];
        const auto& [op, ot] = online.entries[i];
        if (tp != op) throw std::invalid_argument("ema_update: path mismatch at " + tp + " vs " + op);
        if (tt.shape != ot.shape) throw std::invalid_argument("ema_update: shape mismatch at " + tp);
        for (std::size_t j = 0; j < tt.data.size(); ++j)
            tt.data[j] = static_cast<float>(tau * tt.data[j] + (1.0 - tau) * ot.data[j]);
    }
}

namespace {

void ema_tensor(TensorPtrF target, const TensorPtrF& online, double tau) {
    for (std::size_t j = 0; j < target->data.size(); ++j)
        target->data[j] = static_cast<float>(tau * target->data[j] + (1.0 - tau) * online->data[j]);
}

TensorPtrF init_dense(std::vector<std::int64_t> shape, Rng& rng) {
    auto t = make_tensor<float>(std::move(shape));
    const double fan_in = t->shape.size() == 2 ? static_cast<double>(t->shape[1]) : 1.0;
    const double bound = std::sqrt(6.0 / std::max(1.0, fan_in));
    if (t->shape.size() == 2)
        for (auto& v : t->data) v = static_cast<float>(rng.uniform(-bound, bound));
    t->requires_grad = true;
    return t;
}

struct Mlp {
    std::vector<TensorPtrF> params;

    ad::Var<float> dense_at(const ad::Var<float>& x, std::size_t i) const {
        return ad::dense(x, ad::Var<float>::leaf(params[i]), ad::Var<float>::leaf(params[i + 1]));
    }
};

}  // namespace

PretrainResult pretrain(const ArchitectureSpec& spec, const std::vector<std::string>& image_paths,
                        const BYOLConfig& config, std::uint64_t seed) {
    config.validate();
    if (image_paths.empty()) throw std::invalid_argument("pretrain: empty image corpus");
    if (config.aug.final_size != spec.input_size)
        throw std::invalid_argument("pretrain: augmentation final_size " + std::to_string(config.aug.final_size) +
                                    " does not match encoder input size " + std::to_string(spec.input_size));

    VisionModel online(spec, seed);
    VisionModel target(spec, online.weights(), seed);
    for (const std::string& path : target.parameter_paths()) target.tensor(path)->requires_grad = false;

    Rng init_rng = Rng::substream(seed, 0xB401);
    const std::int64_t f = online.feature_dim();
    Mlp projector;
    projector.params = {init_dense({config.projector_dim, f}, init_rng),
                        init_dense({config.projector_dim}, init_rng)};
    Mlp predictor;
    predictor.params = {init_dense({config.predictor_hidden, config.projector_dim}, init_rng),
                        init_dense({config.predictor_hidden}, init_rng),
                        init_dense({config.projector_dim, config.predictor_hidden}, init_rng),
                        init_dense({config.projector_dim}, init_rng)};
    Mlp target_projector;
    for (const auto& p : projector.params) {
        auto copy = make_tensor<float>(p->shape, p->data);
        copy->requires_grad = false;
        target_projector.params.push_back(copy);
    }

    std::vector<TensorPtrF> params = online.trainable_params();
    for (auto& p : projector.params) params.push_back(p);
    for (auto& p : predictor.params) params.push_back(p);
    Adam<float> opt(params, static_cast<float>(config.lr));
    opt.zero_grad();

    std::map<std::string, ImageBuffer> cache;
    auto image_of = [&](const std::string& path) -> const ImageBuffer& {
        auto it = cache.find(path);
        if (it != cache.end()) return it->second;
        return cache.emplace(path, decode_png(path)).first->second;
    };

    const int s = spec.input_size;
    const std::size_t plane = static_cast<std::size_t>(3) * s * s;

    auto online_predict = [&](const TensorF& batch) {
        auto feat = online.forward_features(batch, Mode::Train, true);
        auto proj = projector.dense_at(feat, 0);
        return predictor.dense_at(ad::relu(predictor.dense_at(proj, 0)), 2);
    };
    auto target_project = [&](const TensorF& batch) {
        auto feat = target.forward_features(batch, Mode::Train, false);
        return target_projector.dense_at(feat, 0).val();
    };

    PretrainResult result;
    std::vector<std::size_t> order(image_paths.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::uint64_t micro_global = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(seed, 0xB5E, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<std::int64_t>(i))]);

        const std::size_t n_micro = (order.size() + config.batch_size - 1) / config.batch_size;
        double loss_sum = 0;
        std::size_t micro_in_group = 0;
        std::size_t group_size =
            std::min<std::size_t>(config.accumulation, n_micro);  // shrinks for the trailing partial group

        for (std::size_t m = 0; m < n_micro; ++m, ++micro_global) {
            const std::size_t start = m * config.batch_size;
            const std::size_t b = std::min<std::size_t>(config.batch_size, order.size() - start);
            TensorF view1(std::vector<std::int64_t>{static_cast<std::int64_t>(b), 3, s, s});
            TensorF view2(view1.shape);
            for (std::size_t i = 0; i < b; ++i) {
                const ImageBuffer& img = image_of(image_paths[order[start + i]]);
                for (int v = 0; v < 2; ++v) {
                    Rng aug_rng = Rng::substream(seed, 0xB1E1, micro_global,
                                                 static_cast<std::uint64_t>(2 * i + v));
                    const TensorF t = augment_train(img, config.aug, aug_rng);
                    std::copy(t.data.begin(), t.data.end(), (v == 0 ? view1 : view2).data.begin() + i * plane);
                }
            }

            auto l1 = ad::cosine_prediction_loss(online_predict(view1), target_project(view2));
            auto l2 = ad::cosine_prediction_loss(online_predict(view2), target_project(view1));
            auto loss = ad::scale(ad::add(l1, l2), 0.5f);
            loss_sum += loss.scalar();
            ad::scale(loss, 1.0f / static_cast<float>(group_size)).backward();

            if (++micro_in_group == group_size) {
                opt.step();
                opt.zero_grad();
                for (const std::string& path : online.parameter_paths())
                    ema_tensor(target.tensor(path), online.tensor(path), config.tau);
                for (std::size_t i = 0; i < projector.params.size(); ++i)
                    ema_tensor(target_projector.params[i], projector.params[i], config.tau);
                ++result.optimizer_steps;
                micro_in_group = 0;
                group_size = std::min<std::size_t>(config.accumulation, n_micro - m - 1);
            }
        }
        result.epoch_losses.push_back(loss_sum / static_cast<double>(n_micro));
    }

    ModelWeights all = online.weights();
    result.encoder.arch = all.arch;
    result.encoder.provenance = "byol";
    for (auto& [path, t] : all.entries)
        if (path.rfind("head.", 0) != 0) result.encoder.entries.emplace_back(path, std::move(t));
    return result;
}

PretrainResult pretrain_to_file(const ArchitectureSpec& spec, const std::string& corpus_dir,
                                const BYOLConfig& config, std::uint64_t seed, const std::string& out_path) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    if (fs::is_directory(corpus_dir))
        for (const auto& e : fs::directory_iterator(corpus_dir))
            if (e.is_regular_file() && e.path().extension() == ".png") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    PretrainResult result = pretrain(spec, paths, config, seed);
    save_model_weights(out_path, result.encoder);
    return result;
}

}  // namespace oct
