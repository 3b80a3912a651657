#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octpredict/dataset.hpp"
#include "octpredict/image.hpp"
#include "octpredict/metrics.hpp"
#include "octpredict/models.hpp"

namespace oct {

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    int max_steps = 1000;
    int eval_every = 50;
    std::uint64_t seed = 0;
    bool freeze_backbone = false;
    std::string init_weights;  // empty for random initialization
    AugmentationConfig aug;

    void validate() const;
};

struct RunResult {
    ModelWeights best_weights;
    std::vector<std::pair<int, double>> val_auroc_curve;  // (step, AUROC)
    std::vector<std::pair<int, double>> train_loss_curve;
    int best_step = 0;
    double best_val_auroc = 0;
    MetricSet test_metrics;
};

// Decoded images keyed by manifest-relative path, loaded once per dataset.
class ImageCache {
public:
    explicit ImageCache(std::string dataset_dir) : dir_(std::move(dataset_dir)) {}
    const ImageBuffer& get(const std::string& rel_path);

private:
    std::string dir_;
    std::map<std::string, ImageBuffer> cache_;
};

int select_best(const std::vector<std::pair<int, double>>& curve);

// Two-view patient probability: mean of the per-view sigmoid outputs.
double predict_patient(VisionModel& model, const PatientRecord& record, ImageCache& cache,
                       const AugmentationConfig& aug);

RunResult train_run(const ArchitectureSpec& spec, const DatasetManifest& manifest, const std::string& dataset_dir,
                    const TrainConfig& config);

// Persists the retained weights next to a JSON sidecar holding both curves,
// the best step, and the test metrics.
void save_run_result(const std::string& out_prefix, const RunResult& result);
RunResult load_run_result(const std::string& out_prefix);

}  // namespace oct
