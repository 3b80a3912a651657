#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "octpredict/image.hpp"

namespace oct {

void AugmentationConfig::validate() const {
    if (resize_to <= 0 || final_size <= 0) throw std::invalid_argument("augmentation sizes must be positive");
    if (final_size > resize_to) throw std::invalid_argument("final_size must not exceed resize_to");
    if (hflip_prob < 0 || hflip_prob > 1) throw std::invalid_argument("hflip_prob must be in [0,1]");
    auto ordered = [](double lo, double hi) { return lo <= hi; };
    if (!ordered(brightness_lo, brightness_hi) || !ordered(contrast_lo, contrast_hi) ||
        !ordered(rotation_lo, rotation_hi) || !ordered(crop_lo, crop_hi))
        throw std::invalid_argument("augmentation ranges must satisfy lo <= hi");
    if (crop_lo <= 0 || crop_hi > 1) throw std::invalid_argument("crop ratio range must lie in (0,1]");
    for (double s : channel_stds)
        if (s <= 0) throw std::invalid_argument("channel stds must be positive");
}

AugmentationConfig AugmentationConfig::scaled_to(int size) const {
    if (size <= 0) throw std::invalid_argument("scaled_to: size must be positive");
    AugmentationConfig c = *this;
    c.resize_to = std::max(size, static_cast<int>(std::lround(static_cast<double>(resize_to) * size / final_size)));
    c.final_size = size;
    return c;
}

namespace {

// Planar float working image on the 0..255 scale.
struct FloatImage {
    int h = 0, w = 0;
    std::vector<float> ch[3];
};

FloatImage from_buffer(const ImageBuffer& img) {
    img.validate();
    FloatImage f;
    f.h = img.height;
    f.w = img.width;
    const std::size_t n = static_cast<std::size_t>(f.h) * f.w;
    for (int c = 0; c < 3; ++c) f.ch[c].resize(n);
    if (img.channels == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const float v = img.data[i];
            f.ch[0][i] = v;
            f.ch[1][i] = v;
            f.ch[2][i] = v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) f.ch[c][i] = img.data[3 * i + c];
    }
    return f;
}

// Corner-aligned bilinear resampling (exact on linear intensity ramps).
FloatImage resize_bilinear(const FloatImage& in, int out_h, int out_w) {
    FloatImage out;
    out.h = out_h;
    out.w = out_w;
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < 3; ++c) out.ch[c].resize(n);

    const double sy = out_h > 1 ? static_cast<double>(in.h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in.w - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = out_h > 1 ? y * sy : (in.h - 1) * 0.5;
        const int y0 = std::min(static_cast<int>(fy), in.h - 1);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = out_w > 1 ? x * sx : (in.w - 1) * 0.5;
            const int x0 = std::min(static_cast<int>(fx), in.w - 1);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const std::vector<float>& src = in.ch[c];
                const double top = src[y0 * in.w + x0] * (1 - wx) + src[y0 * in.w + x1] * wx;
                const double bot = src[y1 * in.w + x0] * (1 - wx) + src[y1 * in.w + x1] * wx;
                out.ch[c][y * out_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

void hflip(FloatImage& img) {
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y) {
            float* row = img.ch[c].data() + static_cast<std::size_t>(y) * img.w;
            std::reverse(row, row + img.w);
        }
}

void brightness(FloatImage& img, double eps) {
    if (eps == 0.0) return;
    const float k = static_cast<float>(1.0 + eps);
    for (int c = 0; c < 3; ++c)
        for (auto& v : img.ch[c]) v = std::clamp(v * k, 0.0f, 255.0f);
}

void contrast(FloatImage& img, double eps) {
    if (eps == 0.0) return;
    const float k = static_cast<float>(1.0 + eps);
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (float v : img.ch[c]) mean += v;
        mean /= static_cast<double>(img.ch[c].size());
        const float m = static_cast<float>(mean);
        for (auto& v : img.ch[c]) v = std::clamp((v - m) * k + m, 0.0f, 255.0f);
    }
}

// Rotation about the image center, bilinear, out-of-bounds filled black.
FloatImage rotate(const FloatImage& in, double degrees) {
    FloatImage out;
    out.h = in.h;
    out.w = in.w;
    const std::size_t n = static_cast<std::size_t>(in.h) * in.w;
    for (int c = 0; c < 3; ++c) out.ch[c].assign(n, 0.0f);

    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (in.h - 1) * 0.5, cx = (in.w - 1) * 0.5;
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sxf = cs * dx + sn * dy + cx;
            const double syf = -sn * dx + cs * dy + cy;
            if (sxf < 0 || syf < 0 || sxf > in.w - 1 || syf > in.h - 1) continue;
            const int x0 = std::min(static_cast<int>(sxf), in.w - 1);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const int y0 = std::min(static_cast<int>(syf), in.h - 1);
            const int y1 = std::min(y0 + 1, in.h - 1);
            const double wx = sxf - x0, wy = syf - y0;
            for (int c = 0; c < 3; ++c) {
                const std::vector<float>& src = in.ch[c];
                const double top = src[y0 * in.w + x0] * (1 - wx) + src[y0 * in.w + x1] * wx;
                const double bot = src[y1 * in.w + x0] * (1 - wx) + src[y1 * in.w + x1] * wx;
                out.ch[c][y * out.w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

FloatImage crop(const FloatImage& in, int x0, int y0, int side) {
    FloatImage out;
    out.h = side;
    out.w = side;
    for (int c = 0; c < 3; ++c) {
        out.ch[c].resize(static_cast<std::size_t>(side) * side);
        for (int y = 0; y < side; ++y)
            std::copy_n(in.ch[c].data() + static_cast<std::size_t>(y0 + y) * in.w + x0, side,
                        out.ch[c].data() + static_cast<std::size_t>(y) * side);
    }
    return out;
}

TensorF normalize(const FloatImage& img, const AugmentationConfig& cfg) {
    TensorF out({3, img.h, img.w});
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    for (int c = 0; c < 3; ++c) {
        const float mean = static_cast<float>(cfg.channel_means[c]);
        const float inv_std = static_cast<float>(1.0 / cfg.channel_stds[c]);
        for (std::size_t i = 0; i < n; ++i) out.data[c * n + i] = (img.ch[c][i] / 255.0f - mean) * inv_std;
    }
    return out;
}

}  // namespace

TensorF augment_train(const ImageBuffer& image, const AugmentationConfig& config, Rng& rng) {
    config.validate();
    FloatImage img = from_buffer(image);
    img = resize_bilinear(img, config.resize_to, config.resize_to);

    // Fixed draw order so streams stay aligned regardless of branch outcomes.
    const bool do_flip = rng.uniform() < config.hflip_prob;
    const double eps_b = rng.uniform(config.brightness_lo, config.brightness_hi);
    const double eps_c = rng.uniform(config.contrast_lo, config.contrast_hi);
    const double theta = rng.uniform(config.rotation_lo, config.rotation_hi);
    const double ratio = rng.uniform(config.crop_lo, config.crop_hi);
    const int side = std::clamp(static_cast<int>(std::floor(ratio * config.resize_to)), 1, config.resize_to);
    const int x0 = static_cast<int>(rng.uniform_int(config.resize_to - side + 1));
    const int y0 = static_cast<int>(rng.uniform_int(config.resize_to - side + 1));

    if (do_flip) hflip(img);
    brightness(img, eps_b);
    contrast(img, eps_c);
    img = rotate(img, theta);
    img = crop(img, x0, y0, side);
    img = resize_bilinear(img, config.final_size, config.final_size);
    return normalize(img, config);
}

TensorF preprocess_eval(const ImageBuffer& image, const AugmentationConfig& config) {
    config.validate();
    FloatImage img = from_buffer(image);
    img = resize_bilinear(img, config.final_size, config.final_size);
    return normalize(img, config);
}

}  // namespace oct
