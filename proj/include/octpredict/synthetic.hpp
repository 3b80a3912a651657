#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "octpredict/dataset.hpp"

namespace oct {

// Calibration targets default to the training-split statistics of the source
// cohort; the outcome follows a known logistic ground truth over the
// standardized clinical features plus the rendered hole aperture, so fits on
// generated data can be checked against the true coefficients.
struct SyntheticConfig {
    int n = 200;
    int image_size = 224;

    // ground-truth logistic model on standardized features, order:
    // age, mh_duration, elevated_edge, pseudophakic, baseline_va, hole_aperture
    std::array<double, 6> weights = {-0.4, -0.5, 0.6, 0.5, -1.0, -0.8};
    double intercept = 0.0;

    std::array<double, 3> split_fractions = {0.69, 0.17, 0.14};

    double age_mean = 66.57, age_std = 7.60;
    double mh_duration_mean = 11.48, mh_duration_std = 10.55;
    double elevated_edge_rate = 0.8915;
    double pseudophakic_rate = 0.1687;
    double baseline_va_mean = 50.43, baseline_va_std = 15.51;

    double hole_aperture_lo = 0.08, hole_aperture_hi = 0.50;  // fraction of image width

    static const std::array<const char*, 6> kFeatureNames;

    std::string to_json() const;
    static SyntheticConfig from_json(const std::string& text);
    std::string config_hash() const;

    double aperture_mean() const { return 0.5 * (hole_aperture_lo + hole_aperture_hi); }
    double aperture_std() const { return (hole_aperture_hi - hole_aperture_lo) / std::sqrt(12.0); }
};

// Writes PNGs under <out_dir>/images plus <out_dir>/manifest.csv and returns
// the manifest. n = 0 yields an empty manifest and no images.
DatasetManifest generate_synthetic(const SyntheticConfig& config, std::uint64_t seed, const std::string& out_dir);

// Exposed for tests: the ground-truth standardized feature vector and hole
// aperture drawn for record index i under the given seed.
struct SyntheticTruth {
    std::array<double, 6> z;  // standardized features incl. aperture
    double aperture = 0;
    double p_positive = 0;
    bool positive = false;
};
SyntheticTruth synthetic_truth(const SyntheticConfig& config, std::uint64_t seed, int index);

ImageBuffer render_oct(int size, double aperture, int view, Rng& rng);

}  // namespace oct
