#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "octpredict/byol.hpp"
#include "octpredict/metrics.hpp"
#include "octpredict/rng.hpp"
#include "octpredict/synthetic.hpp"
#include "octpredict/train.hpp"

using namespace oct;
namespace fs = std::filesystem;

namespace {

struct TempDataset {
    fs::path dir;
    DatasetManifest manifest;

    TempDataset(int n, std::uint64_t seed, const char* name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        SyntheticConfig cfg;
        cfg.n = n;
        cfg.image_size = 32;
        cfg.weights = {0, 0, 0, 0, 0, -6};  // image-only signal
        manifest = generate_synthetic(cfg, seed, dir.string());
    }
    ~TempDataset() { fs::remove_all(dir); }
};

TrainConfig tiny_config(std::uint64_t seed) {
    TrainConfig c;
    c.batch_size = 8;
    c.max_steps = 10;
    c.eval_every = 5;
    c.seed = seed;
    c.aug = c.aug.scaled_to(32);
    return c;
}

}  // namespace

TEST_CASE("select_best is the earliest argmax") {
    CHECK(select_best({{50, 0.6}, {100, 0.8}, {150, 0.7}}) == 100);
    CHECK(select_best({{50, 0.7}, {100, 0.7}}) == 50);
    CHECK_THROWS(select_best({}));

    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::pair<int, double>> curve;
        for (int i = 0; i < 20; ++i)
            curve.emplace_back(50 * (i + 1), std::round(rng.uniform() * 5) / 5.0);
        int best = curve[0].first;
        double best_v = curve[0].second;
        for (const auto& [step, v] : curve)
            if (v > best_v) {
                best_v = v;
                best = step;
            }
        CHECK(select_best(curve) == best);
    }
}

TEST_CASE("patient prediction averages the two views") {
    TempDataset ds(4, 11, "oct_train_pp");
    ImageCache cache(ds.dir.string());
    const AugmentationConfig aug = AugmentationConfig{}.scaled_to(32);
    VisionModel model({Arch::CbrTiny, 32}, 1);

    PatientRecord rec = ds.manifest.records[0];
    const double p = predict_patient(model, rec, cache, aug);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);

    PatientRecord swapped = rec;
    std::swap(swapped.oct_h, swapped.oct_v);
    CHECK(predict_patient(model, swapped, cache, aug) == doctest::Approx(p).epsilon(1e-12));

    PatientRecord same = rec;
    same.oct_v = same.oct_h;
    ImageBuffer img = cache.get(rec.oct_h);
    TensorF one = preprocess_eval(img, aug);
    TensorF batch(std::vector<std::int64_t>{1, 3, 32, 32}, one.data);
    const float logit = model.forward_logits(batch, Mode::Eval)[0];
    const double single = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
    CHECK(predict_patient(model, same, cache, aug) == doctest::Approx(single).epsilon(1e-6));

    PatientRecord missing = rec;
    missing.oct_h = "images/not_there.png";
    CHECK_THROWS(predict_patient(model, missing, cache, aug));
}

TEST_CASE("training runs are deterministic and the snapshot is consistent") {
    TempDataset ds(20, 1, "oct_train_run");
    ArchitectureSpec spec{Arch::CbrTiny, 32};
    RunResult a = train_run(spec, ds.manifest, ds.dir.string(), tiny_config(5));
    RunResult b = train_run(spec, ds.manifest, ds.dir.string(), tiny_config(5));

    CHECK(a.val_auroc_curve == b.val_auroc_curve);
    CHECK(a.train_loss_curve == b.train_loss_curve);
    CHECK(a.best_step == b.best_step);
    REQUIRE(a.best_weights.entries.size() == b.best_weights.entries.size());
    for (std::size_t i = 0; i < a.best_weights.entries.size(); ++i)
        CHECK(a.best_weights.entries[i].second.data == b.best_weights.entries[i].second.data);

    CHECK(a.best_step == select_best(a.val_auroc_curve));
    CHECK(a.train_loss_curve.size() == 10);
    CHECK(a.val_auroc_curve.size() == 2);

    // the retained weights reproduce the recorded best validation AUROC
    VisionModel reloaded(spec, a.best_weights, 999);
    ImageCache cache(ds.dir.string());
    std::vector<double> scores;
    std::vector<int> labels;
    for (const PatientRecord* r : ds.manifest.in_split(Split::Val)) {
        scores.push_back(predict_patient(reloaded, *r, cache, tiny_config(5).aug));
        labels.push_back(derive_label(*r) ? 1 : 0);
    }
    CHECK(auroc(scores, labels) == doctest::Approx(a.best_val_auroc).epsilon(1e-12));
}

TEST_CASE("a frozen run keeps the backbone at its initialization") {
    TempDataset ds(20, 6, "oct_train_frozen");
    ArchitectureSpec spec{Arch::CbrTiny, 32};
    TrainConfig cfg = tiny_config(1);
    cfg.freeze_backbone = true;
    RunResult r = train_run(spec, ds.manifest, ds.dir.string(), cfg);

    VisionModel init(spec, cfg.seed);
    for (const auto& [path, t] : r.best_weights.entries) {
        if (path.rfind("head.", 0) == 0 || path.find("running_") != std::string::npos) continue;
        CHECK(t.data == init.tensor(path)->data);
    }
}

TEST_CASE("train config validation") {
    TrainConfig c = tiny_config(0);
    c.eval_every = 3;  // does not divide max_steps
    CHECK_THROWS(c.validate());
    c = tiny_config(0);
    c.batch_size = 0;
    CHECK_THROWS(c.validate());
    c = tiny_config(0);
    c.lr = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("run results round-trip through files") {
    TempDataset ds(12, 3, "oct_train_save");
    ArchitectureSpec spec{Arch::CbrTiny, 32};
    RunResult r = train_run(spec, ds.manifest, ds.dir.string(), tiny_config(7));

    const std::string prefix = (fs::temp_directory_path() / "oct_run_rt").string();
    save_run_result(prefix, r);
    RunResult back = load_run_result(prefix);
    CHECK(back.val_auroc_curve == r.val_auroc_curve);
    CHECK(back.train_loss_curve == r.train_loss_curve);
    CHECK(back.best_step == r.best_step);
    CHECK(back.best_val_auroc == r.best_val_auroc);
    CHECK(back.best_weights.entries.size() == r.best_weights.entries.size());
    fs::remove(prefix + ".weights");
    fs::remove(prefix + ".json");
}

TEST_CASE("byol loss fixed points") {
    CHECK(byol_loss({1, 0}, {2, 0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(byol_loss({1, 0}, {-3, 0}) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(byol_loss({1, 0}, {0, 5}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS(byol_loss({0, 0}, {1, 0}));
    CHECK_THROWS(byol_loss({1}, {1, 0}));
}

TEST_CASE("ema update follows the scalar recurrence") {
    ModelWeights target, online;
    target.entries.emplace_back("w", TensorF(std::vector<std::int64_t>{1}, std::vector<float>{1.0f}));
    online.entries.emplace_back("w", TensorF(std::vector<std::int64_t>{1}, std::vector<float>{0.2f}));

    double expect = 1.0;
    for (int i = 0; i < 3; ++i) {
        ema_update(target, online, 0.99);
        expect = 0.99 * expect + 0.01 * 0.2;
        CHECK(target.entries[0].second.data[0] == doctest::Approx(expect).epsilon(1e-6));
    }

    ModelWeights frozen = target;
    ema_update(frozen, online, 1.0);
    CHECK(frozen.entries[0].second.data[0] == target.entries[0].second.data[0]);
    ema_update(frozen, online, 0.0);
    CHECK(frozen.entries[0].second.data[0] == 0.2f);

    ModelWeights mismatched;
    mismatched.entries.emplace_back("v", TensorF(std::vector<std::int64_t>{1}, std::vector<float>{0.0f}));
    CHECK_THROWS(ema_update(mismatched, online, 0.5));
}

TEST_CASE("pretraining steps once per accumulation group and exports an encoder") {
    TempDataset ds(8, 4, "oct_byol_small");  // 16 pngs
    std::vector<std::string> paths;
    for (const auto& r : ds.manifest.records) {
        paths.push_back((ds.dir / r.oct_h).string());
        paths.push_back((ds.dir / r.oct_v).string());
    }
    REQUIRE(paths.size() == 16);

    BYOLConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.accumulation = 2;
    cfg.aug = cfg.aug.scaled_to(32);
    ArchitectureSpec spec{Arch::CbrTiny, 32};
    PretrainResult r = pretrain(spec, paths, cfg, 0);

    CHECK(r.optimizer_steps == 4);  // 4 micro-batches per epoch, groups of 2, 2 epochs
    CHECK(r.epoch_losses.size() == 2);
    for (double l : r.epoch_losses) {
        CHECK(l >= 0.0);
        CHECK(l <= 4.0);
    }
    CHECK(r.encoder.provenance == "byol");
    for (const auto& [path, t] : r.encoder.entries) CHECK(path.rfind("head.", 0) != 0);

    // the encoder initializes a fresh model without error
    VisionModel warm(spec, r.encoder, 77);
    CHECK(warm.provenance() == "byol");

    PretrainResult again = pretrain(spec, paths, cfg, 0);
    CHECK(again.epoch_losses == r.epoch_losses);
}
