#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "octpredict/autodiff.hpp"
#include "octpredict/tensor.hpp"

namespace oct {

enum class Arch { CbrTiny, CbrSmall, CbrWide, CbrTall, ResNet50 };

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

struct ArchitectureSpec {
    Arch arch = Arch::CbrTiny;
    int input_size = 224;
};

// Ordered parameter map. Buffers (batchnorm running statistics) are included
// so a saved snapshot restores eval behaviour exactly.
struct ModelWeights {
    std::string arch;
    std::string provenance;  // random | external-file | byol
    std::vector<std::pair<std::string, TensorF>> entries;

    const TensorF* find(const std::string& path) const;
};

void save_model_weights(const std::string& path, const ModelWeights& weights);
ModelWeights load_model_weights(const std::string& path);

class VisionModel {
public:
    // Random fan-in-scaled uniform initialization, deterministic per seed.
    VisionModel(const ArchitectureSpec& spec, std::uint64_t seed);
    // File initialization. A backbone-only file (e.g. a BYOL encoder) leaves
    // the head at its seeded random initialization.
    VisionModel(const ArchitectureSpec& spec, const ModelWeights& weights, std::uint64_t seed);

    ad::Var<float> forward(const TensorF& batch, Mode mode, bool update_running = true);
    ad::Var<float> forward_features(const TensorF& batch, Mode mode, bool update_running = true);
    std::vector<float> forward_logits(const TensorF& batch, Mode mode);

    void freeze_backbone();
    bool frozen() const { return frozen_; }

    std::vector<TensorPtrF> trainable_params() const;
    std::int64_t param_count() const;
    ModelWeights weights() const;
    void load(const ModelWeights& weights);

    TensorPtrF tensor(const std::string& path) const;
    std::vector<std::string> parameter_paths() const;
    const ArchitectureSpec& spec() const { return spec_; }
    const std::string& provenance() const { return provenance_; }
    std::int64_t feature_dim() const;

private:
    struct BnUnit {
        TensorPtrF gamma, beta;
        std::shared_ptr<BatchNormState<float>> state;
    };
    struct ConvBn {
        TensorPtrF w;
        BnUnit bn;
        int stride = 1, pad = 1;
    };
    struct Bottleneck {
        ConvBn conv1, conv2, conv3;
        bool has_down = false;
        ConvBn down;
    };
    struct Entry {
        std::string path;
        TensorPtrF tensor;
        bool trainable = true;
        bool head = false;
    };

    void build(std::uint64_t seed);
    TensorPtrF add_param(const std::string& path, std::vector<std::int64_t> shape, bool head);
    TensorPtrF add_buffer(const std::string& path, TensorPtrF t);
    BnUnit add_bn(const std::string& prefix, std::int64_t channels);
    ConvBn add_conv_bn(const std::string& prefix, std::int64_t out, std::int64_t in, int k, int stride, int pad);
    void init_random(std::uint64_t seed);
    ad::Var<float> forward_backbone(const TensorF& batch, Mode mode, bool update_running);

    ArchitectureSpec spec_;
    std::string provenance_ = "random";
    bool frozen_ = false;
    std::vector<Entry> entries_;

    // CBR layout
    std::vector<ConvBn> blocks_;
    std::vector<bool> block_pool_;

    // ResNet-50 layout
    ConvBn stem_;
    std::vector<std::vector<Bottleneck>> stages_;

    TensorPtrF head_w_, head_b_;
};

}  // namespace oct
