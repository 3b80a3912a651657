#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octpredict/image.hpp"
#include "octpredict/models.hpp"

namespace oct {

struct BYOLConfig {
    int epochs = 20;
    int batch_size = 32;
    int accumulation = 8;  // micro-batches per optimizer step, effective batch 256
    double tau = 0.996;
    int projector_dim = 64;
    int predictor_hidden = 128;
    double lr = 1e-4;
    AugmentationConfig aug;

    void validate() const;
};

// 2 - 2 cos(p, z). Rejects zero-norm vectors.
double byol_loss(const std::vector<double>& p, const std::vector<double>& z);

// theta_target <- tau * theta_target + (1 - tau) * theta_online, elementwise
// over every entry, buffers included. Paths must match exactly.
void ema_update(ModelWeights& target, const ModelWeights& online, double tau);

struct PretrainResult {
    std::vector<double> epoch_losses;  // mean symmetrized loss per epoch
    ModelWeights encoder;              // backbone only, provenance "byol"
    std::int64_t optimizer_steps = 0;
};

PretrainResult pretrain(const ArchitectureSpec& spec, const std::vector<std::string>& image_paths,
                        const BYOLConfig& config, std::uint64_t seed);

// Convenience wrapper: collects *.png under corpus_dir (sorted), pretrains,
// and writes the encoder weight file.
PretrainResult pretrain_to_file(const ArchitectureSpec& spec, const std::string& corpus_dir,
                                const BYOLConfig& config, std::uint64_t seed, const std::string& out_path);

}  // namespace oct
