#include "octpredict/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "octpredict/rng.hpp"

namespace oct {

std::string arch_name(Arch arch) {
    switch (arch) {
        case Arch::CbrTiny: return "CBR-Tiny";
        case Arch::CbrSmall: return "CBR-Small";
        case Arch::CbrWide: return "CBR-Wide";
        case Arch::CbrTall: return "CBR-Tall";
        case Arch::ResNet50: return "ResNet-50";
    }
    throw std::logic_error("unknown architecture");
}

Arch arch_from_name(const std::string& name) {
    if (name == "CBR-Tiny") return Arch::CbrTiny;
    if (name == "CBR-Small") return Arch::CbrSmall;
    if (name == "CBR-Wide") return Arch::CbrWide;
    if (name == "CBR-Tall") return Arch::CbrTall;
    if (name == "ResNet-50") return Arch::ResNet50;
    throw std::invalid_argument("unknown architecture name: " + name);
}

const TensorF* ModelWeights::find(const std::string& path) const {
    for (const auto& [p, t] : entries)
        if (p == path) return &t;
    return nullptr;
}

TensorPtrF VisionModel::add_param(const std::string& path, std::vector<std::int64_t> shape, bool head) {
    auto t = make_tensor<float>(std::move(shape));
    t->requires_grad = true;
    entries_.push_back({path, t, true, head});
    return t;
}

TensorPtrF VisionModel::add_buffer(const std::string& path, TensorPtrF t) {
    entries_.push_back({path, t, false, false});
    return t;
}

VisionModel::BnUnit VisionModel::add_bn(const std::string& prefix, std::int64_t channels) {
    BnUnit unit;
    unit.gamma = add_param(prefix + ".weight", {channels}, false);
    unit.beta = add_param(prefix + ".bias", {channels}, false);
    unit.state = std::make_shared<BatchNormState<float>>(channels);
    add_buffer(prefix + ".running_mean", unit.state->running_mean);
    add_buffer(prefix + ".running_var", unit.state->running_var);
    return unit;
}

VisionModel::ConvBn VisionModel::add_conv_bn(const std::string& prefix, std::int64_t out, std::int64_t in, int k,
                                             int stride, int pad) {
    ConvBn cb;
    cb.w = add_param(prefix + ".conv.weight", {out, in, k, k}, false);
    cb.bn = add_bn(prefix + ".bn", out);
    cb.stride = stride;
    cb.pad = pad;
    return cb;
}

void VisionModel::build(std::uint64_t seed) {
    if (spec_.input_size < 32) throw std::invalid_argument("input size must be at least 32 pixels");

    if (spec_.arch == Arch::ResNet50) {
        stem_.w = add_param("stem.conv.weight", {64, 3, 7, 7}, false);
        stem_.bn = add_bn("stem.bn", 64);
        stem_.stride = 2;
        stem_.pad = 3;
        const std::int64_t mids[4] = {64, 128, 256, 512};
        const int counts[4] = {3, 4, 6, 3};
        std::int64_t in = 64;
        for (int s = 0; s < 4; ++s) {
            std::vector<Bottleneck> stage;
            for (int bi = 0; bi < counts[s]; ++bi) {
                const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(bi);
                const int stride = (s > 0 && bi == 0) ? 2 : 1;
                const std::int64_t mid = mids[s];
                const std::int64_t out = 4 * mid;
                Bottleneck bn;
                bn.conv1.w = add_param(prefix + ".conv1.weight", {mid, in, 1, 1}, false);
                bn.conv1.bn = add_bn(prefix + ".bn1", mid);
                bn.conv1.stride = 1;
                bn.conv1.pad = 0;
                bn.conv2.w = add_param(prefix + ".conv2.weight", {mid, mid, 3, 3}, false);
                bn.conv2.bn = add_bn(prefix + ".bn2", mid);
                bn.conv2.stride = stride;
                bn.conv2.pad = 1;
                bn.conv3.w = add_param(prefix + ".conv3.weight", {out, mid, 1, 1}, false);
                bn.conv3.bn = add_bn(prefix + ".bn3", out);
                bn.conv3.stride = 1;
                bn.conv3.pad = 0;
                if (bi == 0) {
                    bn.has_down = true;
                    bn.down.w = add_param(prefix + ".downsample.conv.weight", {out, in, 1, 1}, false);
                    bn.down.bn = add_bn(prefix + ".downsample.bn", out);
                    bn.down.stride = stride;
                    bn.down.pad = 0;
                }
                stage.push_back(std::move(bn));
                in = out;
            }
            stages_.push_back(std::move(stage));
        }
        head_w_ = add_param("head.fc.weight", {1, 2048}, true);
        head_b_ = add_param("head.fc.bias", {1}, true);
    } else {
        std::vector<std::int64_t> channels;
        switch (spec_.arch) {
            case Arch::CbrTiny: channels = {16, 32, 64, 128}; block_pool_ = {true, true, true, true}; break;
            case Arch::CbrSmall: channels = {32, 64, 128, 256}; block_pool_ = {true, true, true, true}; break;
            case Arch::CbrWide: channels = {64, 128, 256, 512}; block_pool_ = {true, true, true, true}; break;
            case Arch::CbrTall:
                channels = {32, 64, 128, 128, 256, 256};
                block_pool_ = {true, true, true, false, true, false};
                break;
            default: throw std::logic_error("unreachable");
        }
        std::int64_t in = 3;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            blocks_.push_back(add_conv_bn("block" + std::to_string(i + 1), channels[i], in, 3, 1, 1));
            in = channels[i];
        }
        head_w_ = add_param("head.fc.weight", {1, in}, true);
        head_b_ = add_param("head.fc.bias", {1}, true);
    }
    init_random(seed);
}

void VisionModel::init_random(std::uint64_t seed) {
    Rng rng(splitmix64(seed) ^ 0x0c7a11edULL);
    for (auto& e : entries_) {
        if (!e.trainable) continue;  // buffers keep 0 mean / 1 var
        const auto& shape = e.tensor->shape;
        const bool is_bn_scale = e.path.size() > 7 && e.path.rfind(".weight") == e.path.size() - 7 && shape.size() == 1;
        const bool is_bias = e.path.rfind(".bias") != std::string::npos;
        if (is_bn_scale) {
            std::fill(e.tensor->data.begin(), e.tensor->data.end(), 1.0f);
        } else if (is_bias) {
            std::fill(e.tensor->data.begin(), e.tensor->data.end(), 0.0f);
        } else {
            std::int64_t fan_in = 1;
            for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : e.tensor->data) v = static_cast<float>(rng.uniform(-a, a));
        }
    }
}

VisionModel::VisionModel(const ArchitectureSpec& spec, std::uint64_t seed) : spec_(spec) { build(seed); }

VisionModel::VisionModel(const ArchitectureSpec& spec, const ModelWeights& weights, std::uint64_t seed) : spec_(spec) {
    build(seed);
    load(weights);
}

void VisionModel::load(const ModelWeights& weights) {
    std::vector<std::string> offending;
    if (weights.arch != arch_name(spec_.arch))
        offending.push_back("architecture '" + weights.arch + "' does not match '" + arch_name(spec_.arch) + "'");

    // A file may omit the head (encoder-only provenance, e.g. BYOL); every
    // backbone path must be present with the exact shape.
    bool file_has_head = false;
    for (const auto& [p, t] : weights.entries)
        if (p.rfind("head.", 0) == 0) file_has_head = true;

    std::set<std::string> expected;
    for (const auto& e : entries_) expected.insert(e.path);
    for (const auto& [p, t] : weights.entries) {
        (void)t;
        if (!expected.count(p)) offending.push_back("unexpected path " + p);
    }
    for (auto& e : entries_) {
        const TensorF* src = weights.find(e.path);
        if (!src) {
            if (!(e.head && !file_has_head)) offending.push_back("missing path " + e.path);
            continue;
        }
        if (src->shape != e.tensor->shape) {
            offending.push_back("shape mismatch at " + e.path + ": file " + shape_str(src->shape) + " vs expected " +
                                shape_str(e.tensor->shape));
            continue;
        }
    }
    if (!offending.empty()) {
        std::string msg = "weight load rejected (" + std::to_string(offending.size()) + " problems):";
        for (std::size_t i = 0; i < offending.size() && i < 10; ++i) msg += "\n  " + offending[i];
        throw std::invalid_argument(msg);
    }
    for (auto& e : entries_) {
        const TensorF* src = weights.find(e.path);
        if (src) e.tensor->data = src->data;
    }
    provenance_ = weights.provenance.empty() ? "external-file" : weights.provenance;
}

ModelWeights VisionModel::weights() const {
    ModelWeights w;
    w.arch = arch_name(spec_.arch);
    w.provenance = provenance_;
    for (const auto& e : entries_) w.entries.emplace_back(e.path, TensorF(e.tensor->shape, e.tensor->data));
    return w;
}

ad::Var<float> VisionModel::forward_backbone(const TensorF& batch, Mode mode, bool update_running) {
    if (batch.shape.size() != 4 || batch.shape[1] != 3)
        throw std::invalid_argument("forward: expected batch x 3 x H x W input, got " + shape_str(batch.shape));
    if (batch.shape[2] != spec_.input_size || batch.shape[3] != spec_.input_size)
        throw std::invalid_argument("forward: spatial size " + std::to_string(batch.shape[2]) + "x" +
                                    std::to_string(batch.shape[3]) + " does not match configured input size " +
                                    std::to_string(spec_.input_size));

    auto x = ad::Var<float>::constant(batch.shape, batch.data);
    auto run_conv_bn = [&](const ConvBn& cb, ad::Var<float> in) {
        auto y = ad::conv2d(in, ad::Var<float>::leaf(cb.w), cb.stride, cb.pad);
        return ad::batchnorm2d(y, ad::Var<float>::leaf(cb.bn.gamma), ad::Var<float>::leaf(cb.bn.beta), *cb.bn.state,
                               mode, update_running);
    };

    if (spec_.arch == Arch::ResNet50) {
        x = ad::relu(run_conv_bn(stem_, x));
        x = ad::maxpool2d(x, 3, 2, 1);
        for (const auto& stage : stages_) {
            for (const auto& block : stage) {
                auto identity = block.has_down ? run_conv_bn(block.down, x) : x;
                auto y = ad::relu(run_conv_bn(block.conv1, x));
                y = ad::relu(run_conv_bn(block.conv2, y));
                y = run_conv_bn(block.conv3, y);
                x = ad::relu(ad::add(y, identity));
            }
        }
    } else {
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            x = ad::relu(run_conv_bn(blocks_[i], x));
            if (block_pool_[i]) x = ad::maxpool2d(x, 2, 2, 0);
        }
    }
    return ad::global_avg_pool(x);
}

ad::Var<float> VisionModel::forward_features(const TensorF& batch, Mode mode, bool update_running) {
    return forward_backbone(batch, mode, update_running);
}

ad::Var<float> VisionModel::forward(const TensorF& batch, Mode mode, bool update_running) {
    auto feat = forward_backbone(batch, mode, update_running);
    return ad::dense(feat, ad::Var<float>::leaf(head_w_), ad::Var<float>::leaf(head_b_));
}

std::vector<float> VisionModel::forward_logits(const TensorF& batch, Mode mode) {
    return forward(batch, mode, false).val();
}

void VisionModel::freeze_backbone() {
    frozen_ = true;
    for (auto& e : entries_)
        if (e.trainable) e.tensor->requires_grad = e.head;
}

std::vector<TensorPtrF> VisionModel::trainable_params() const {
    std::vector<TensorPtrF> out;
    for (const auto& e : entries_)
        if (e.trainable && e.tensor->requires_grad) out.push_back(e.tensor);
    return out;
}

std::int64_t VisionModel::param_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
        if (e.trainable) n += e.tensor->numel();
    return n;
}

TensorPtrF VisionModel::tensor(const std::string& path) const {
    for (const auto& e : entries_)
        if (e.path == path) return e.tensor;
    throw std::invalid_argument("no parameter named " + path);
}

std::vector<std::string> VisionModel::parameter_paths() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.path);
    return out;
}

std::int64_t VisionModel::feature_dim() const { return head_w_->shape[1]; }

}  // namespace oct
