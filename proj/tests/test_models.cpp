#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "octpredict/models.hpp"
#include "octpredict/rng.hpp"

using namespace oct;

namespace {

// Parameter count built up independently from the layer recipe: a 3x3
// conv (no bias) plus batchnorm gamma/beta per block, then a single-logit
// dense head.
std::int64_t cbr_expected_params(const std::vector<std::int64_t>& channels) {
    std::int64_t total = 0, in = 3;
    for (std::int64_t c : channels) {
        total += c * in * 3 * 3 + 2 * c;
        in = c;
    }
    return total + in + 1;
}

// Bottleneck stage recipe: 1x1 reduce, 3x3, 1x1 expand, each with
// batchnorm, plus a projection shortcut on the first block of a stage.
std::int64_t resnet50_expected_params() {
    std::int64_t total = 64 * 3 * 7 * 7 + 2 * 64;  // stem
    const std::int64_t widths[4] = {64, 128, 256, 512};
    const int depths[4] = {3, 4, 6, 3};
    std::int64_t in = 64;
    for (int s = 0; s < 4; ++s) {
        const std::int64_t mid = widths[s], out = mid * 4;
        for (int b = 0; b < depths[s]; ++b) {
            total += mid * in * 1 * 1 + 2 * mid;
            total += mid * mid * 3 * 3 + 2 * mid;
            total += out * mid * 1 * 1 + 2 * out;
            if (b == 0) total += out * in * 1 * 1 + 2 * out;
            in = out;
        }
    }
    return total + 2048 + 1;  // head
}

TensorF zero_batch(int size, int b = 1) {
    return TensorF(std::vector<std::int64_t>{b, 3, size, size});
}

}  // namespace

TEST_CASE("parameter counts match the hand recipe") {
    CHECK(VisionModel({Arch::CbrTiny, 64}, 0).param_count() == cbr_expected_params({16, 32, 64, 128}));
    CHECK(VisionModel({Arch::CbrSmall, 64}, 0).param_count() == cbr_expected_params({32, 64, 128, 256}));
    CHECK(VisionModel({Arch::CbrWide, 64}, 0).param_count() == cbr_expected_params({64, 128, 256, 512}));
    CHECK(VisionModel({Arch::CbrTall, 64}, 0).param_count() ==
          cbr_expected_params({32, 64, 128, 128, 256, 256}));
    CHECK(VisionModel({Arch::ResNet50, 64}, 0).param_count() == resnet50_expected_params());
    CHECK(resnet50_expected_params() == 23510081);
}

TEST_CASE("capacity ordering across the family") {
    const std::int64_t tiny = cbr_expected_params({16, 32, 64, 128});
    const std::int64_t small = cbr_expected_params({32, 64, 128, 256});
    const std::int64_t tall = cbr_expected_params({32, 64, 128, 128, 256, 256});
    const std::int64_t wide = cbr_expected_params({64, 128, 256, 512});
    CHECK(tiny < small);
    CHECK(small < tall);
    CHECK(tall < wide);
    CHECK(wide < resnet50_expected_params());
}

TEST_CASE("initialization is seed-deterministic") {
    VisionModel a({Arch::CbrTiny, 32}, 7);
    VisionModel b({Arch::CbrTiny, 32}, 7);
    VisionModel c({Arch::CbrTiny, 32}, 8);
    const ModelWeights wa = a.weights(), wb = b.weights(), wc = c.weights();
    REQUIRE(wa.entries.size() == wb.entries.size());
    bool all_equal = true, any_differs = false;
    for (std::size_t i = 0; i < wa.entries.size(); ++i) {
        if (wa.entries[i].second.data != wb.entries[i].second.data) all_equal = false;
        if (wa.entries[i].second.data != wc.entries[i].second.data) any_differs = true;
    }
    CHECK(all_equal);
    CHECK(any_differs);
}

TEST_CASE("weight files round-trip and restore behaviour") {
    const std::string path = (std::filesystem::temp_directory_path() / "oct_test_weights.bin").string();
    VisionModel a({Arch::CbrSmall, 32}, 3);
    TensorF batch = zero_batch(32, 2);
    for (std::size_t i = 0; i < batch.data.size(); ++i) batch.data[i] = 0.01f * static_cast<float>(i % 97);
    const std::vector<float> before = a.forward_logits(batch, Mode::Eval);

    save_model_weights(path, a.weights());
    ModelWeights loaded = load_model_weights(path);
    CHECK(loaded.arch == "CBR-Small");
    VisionModel b({Arch::CbrSmall, 32}, 99);
    b.load(loaded);
    CHECK(b.forward_logits(batch, Mode::Eval) == before);
    std::remove(path.c_str());
}

TEST_CASE("a backbone-only file keeps the seeded head") {
    VisionModel full({Arch::CbrTiny, 32}, 5);
    ModelWeights encoder;
    encoder.arch = full.weights().arch;
    encoder.provenance = "byol";
    for (const auto& [p, t] : full.weights().entries)
        if (p.rfind("head.", 0) != 0) encoder.entries.emplace_back(p, t);

    VisionModel init({Arch::CbrTiny, 32}, encoder, 21);
    VisionModel plain({Arch::CbrTiny, 32}, 21);
    CHECK(init.tensor("head.fc.weight")->data == plain.tensor("head.fc.weight")->data);
    CHECK(init.tensor("block1.conv.weight")->data == full.tensor("block1.conv.weight")->data);
}

TEST_CASE("load rejects a mismatched architecture or missing path") {
    VisionModel tiny({Arch::CbrTiny, 32}, 0);
    VisionModel small({Arch::CbrSmall, 32}, 0);
    CHECK_THROWS(tiny.load(small.weights()));

    ModelWeights w = tiny.weights();
    w.entries.pop_back();
    w.entries.erase(w.entries.begin());
    CHECK_THROWS(tiny.load(w));
}

TEST_CASE("freezing keeps only the head trainable") {
    VisionModel m({Arch::CbrTiny, 32}, 1);
    const std::size_t all = m.trainable_params().size();
    m.freeze_backbone();
    CHECK(m.frozen());
    CHECK(m.trainable_params().size() == 2);
    CHECK(all > 2);
    CHECK_FALSE(m.tensor("block1.conv.weight")->requires_grad);
    CHECK(m.tensor("head.fc.weight")->requires_grad);
}

TEST_CASE("forward output shape and eval determinism") {
    VisionModel m({Arch::ResNet50, 32}, 2);
    TensorF batch = zero_batch(32, 3);
    Rng rng(4);
    for (auto& v : batch.data) v = static_cast<float>(rng.uniform(-1, 1));
    const std::vector<float> a = m.forward_logits(batch, Mode::Eval);
    const std::vector<float> b = m.forward_logits(batch, Mode::Eval);
    CHECK(a.size() == 3);
    CHECK(a == b);
    CHECK(m.feature_dim() == 2048);
}

TEST_CASE("arch names round-trip") {
    for (Arch a : {Arch::CbrTiny, Arch::CbrSmall, Arch::CbrWide, Arch::CbrTall, Arch::ResNet50})
        CHECK(arch_from_name(arch_name(a)) == a);
    CHECK_THROWS(arch_from_name("CBR-Giant"));
}
