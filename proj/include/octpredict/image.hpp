#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "octpredict/rng.hpp"
#include "octpredict/tensor.hpp"

namespace oct {

// 8-bit image, row-major, interleaved samples.
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 or 3
    std::vector<std::uint8_t> data;

    void validate() const;
};

// 8-bit grayscale or RGB PNG only; anything else is rejected with a reason.
ImageBuffer decode_png(const std::string& path);
ImageBuffer decode_png_bytes(const std::uint8_t* bytes, std::size_t size);
void encode_png(const std::string& path, const ImageBuffer& image);

struct AugmentationConfig {
    int resize_to = 256;
    int final_size = 224;
    double hflip_prob = 0.5;
    double brightness_lo = -0.3, brightness_hi = 0.3;
    double contrast_lo = -0.3, contrast_hi = 0.3;
    double rotation_lo = -10.0, rotation_hi = 10.0;  // degrees
    double crop_lo = 0.7, crop_hi = 1.0;             // side-length ratio
    std::array<double, 3> channel_means = {0.485, 0.456, 0.406};
    std::array<double, 3> channel_stds = {0.229, 0.224, 0.225};

    void validate() const;

    // Same chain at another output size, with the pre-crop resize scaled to
    // keep the crop geometry proportional.
    AugmentationConfig scaled_to(int size) const;
};

// Training chain, in order: resize -> hflip -> brightness -> contrast ->
// rotate -> random crop -> resize -> per-channel normalize. Deterministic
// given the rng state. Output is 3 x final_size x final_size.
TensorF augment_train(const ImageBuffer& image, const AugmentationConfig& config, Rng& rng);

// Evaluation preprocessing: resize to final_size and normalize.
TensorF preprocess_eval(const ImageBuffer& image, const AugmentationConfig& config);

}  // namespace oct
