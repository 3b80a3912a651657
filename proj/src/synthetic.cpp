#include "octpredict/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "octpredict/rng.hpp"

namespace oct {

const std::array<const char*, 6> SyntheticConfig::kFeatureNames = {
    "age", "mh_duration", "elevated_edge", "pseudophakic", "baseline_va", "hole_aperture"};

namespace {

using nlohmann::json;

json config_to_json(const SyntheticConfig& c) {
    json j;
    j["n"] = c.n;
    j["image_size"] = c.image_size;
    json w;
    for (std::size_t i = 0; i < c.weights.size(); ++i) w[SyntheticConfig::kFeatureNames[i]] = c.weights[i];
    j["weights"] = w;
    j["intercept"] = c.intercept;
    j["split_fractions"] = c.split_fractions;
    j["age_mean"] = c.age_mean;
    j["age_std"] = c.age_std;
    j["mh_duration_mean"] = c.mh_duration_mean;
    j["mh_duration_std"] = c.mh_duration_std;
    j["elevated_edge_rate"] = c.elevated_edge_rate;
    j["pseudophakic_rate"] = c.pseudophakic_rate;
    j["baseline_va_mean"] = c.baseline_va_mean;
    j["baseline_va_std"] = c.baseline_va_std;
    j["hole_aperture_lo"] = c.hole_aperture_lo;
    j["hole_aperture_hi"] = c.hole_aperture_hi;
    return j;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct DrawnRecord {
    ClinicalFeatures clinical;
    int va_6mo = 0;
    SyntheticTruth truth;
};

DrawnRecord draw_record(const SyntheticConfig& c, std::uint64_t seed, int index) {
    Rng rng = Rng::substream(seed, 0xFEA7, static_cast<std::uint64_t>(index));
    DrawnRecord r;

    r.clinical.age = std::clamp(rng.normal(c.age_mean, c.age_std), 30.0, 95.0);
    const double dur_k = (c.mh_duration_mean / c.mh_duration_std) * (c.mh_duration_mean / c.mh_duration_std);
    const double dur_theta = c.mh_duration_std * c.mh_duration_std / c.mh_duration_mean;
    r.clinical.mh_duration = rng.gamma(dur_k, dur_theta);
    r.clinical.elevated_edge = rng.bernoulli(c.elevated_edge_rate);
    r.clinical.pseudophakic = rng.bernoulli(c.pseudophakic_rate);
    // kept away from the VA scale edges so the outcome construction below can
    // never flip a label through clamping
    r.clinical.baseline_va = static_cast<int>(std::lround(std::clamp(rng.normal(c.baseline_va_mean, c.baseline_va_std), 5.0, 78.0)));
    r.truth.aperture = rng.uniform(c.hole_aperture_lo, c.hole_aperture_hi);

    auto bin_std = [](double rate) { return std::sqrt(std::max(rate * (1.0 - rate), 1e-12)); };
    r.truth.z = {(r.clinical.age - c.age_mean) / c.age_std,
                 (r.clinical.mh_duration - c.mh_duration_mean) / c.mh_duration_std,
                 ((r.clinical.elevated_edge ? 1.0 : 0.0) - c.elevated_edge_rate) / bin_std(c.elevated_edge_rate),
                 ((r.clinical.pseudophakic ? 1.0 : 0.0) - c.pseudophakic_rate) / bin_std(c.pseudophakic_rate),
                 (r.clinical.baseline_va - c.baseline_va_mean) / c.baseline_va_std,
                 (r.truth.aperture - c.aperture_mean()) / c.aperture_std()};

    double logit = c.intercept;
    for (std::size_t i = 0; i < 6; ++i) logit += c.weights[i] * r.truth.z[i];
    r.truth.p_positive = sigmoid(logit);
    r.truth.positive = rng.uniform() < r.truth.p_positive;

    // gain >= 15 exactly when the drawn label is positive; ranges chosen so
    // clamping VA to [0, 100] cannot cross the 15-letter threshold
    double gain;
    if (r.truth.positive)
        gain = 15.0 + std::min(7.0, std::abs(rng.normal(0.0, 4.0)));
    else
        gain = 14.0 - std::min(24.0, std::abs(rng.normal(0.0, 8.0)));
    r.va_6mo = static_cast<int>(std::clamp(std::lround(r.clinical.baseline_va + gain), 0l, 100l));
    return r;
}

}  // namespace

std::string SyntheticConfig::to_json() const { return config_to_json(*this).dump(2); }

SyntheticConfig SyntheticConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    SyntheticConfig c;
    if (j.contains("n")) c.n = j.at("n").get<int>();
    if (j.contains("image_size")) c.image_size = j.at("image_size").get<int>();
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        for (std::size_t i = 0; i < c.weights.size(); ++i)
            if (w.contains(kFeatureNames[i])) c.weights[i] = w.at(kFeatureNames[i]).get<double>();
    }
    if (j.contains("intercept")) c.intercept = j.at("intercept").get<double>();
    if (j.contains("split_fractions")) c.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
    auto opt = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    opt("age_mean", c.age_mean);
    opt("age_std", c.age_std);
    opt("mh_duration_mean", c.mh_duration_mean);
    opt("mh_duration_std", c.mh_duration_std);
    opt("elevated_edge_rate", c.elevated_edge_rate);
    opt("pseudophakic_rate", c.pseudophakic_rate);
    opt("baseline_va_mean", c.baseline_va_mean);
    opt("baseline_va_std", c.baseline_va_std);
    opt("hole_aperture_lo", c.hole_aperture_lo);
    opt("hole_aperture_hi", c.hole_aperture_hi);
    return c;
}

std::string SyntheticConfig::config_hash() const {
    const std::string s = to_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SyntheticTruth synthetic_truth(const SyntheticConfig& config, std::uint64_t seed, int index) {
    return draw_record(config, seed, index).truth;
}

ImageBuffer render_oct(int size, double aperture, int view, Rng& rng) {
    if (size <= 0) throw std::invalid_argument("render_oct: size must be positive");
    ImageBuffer img;
    img.height = size;
    img.width = size;
    img.channels = 1;
    img.data.resize(static_cast<std::size_t>(size) * size);

    const double cx = size * (0.5 + rng.uniform(-0.05, 0.05));
    const double cy = size * (0.53 + rng.uniform(-0.02, 0.02));
    const double rx = std::max(1.0, aperture * size / 2.0);
    const double ry_factor = (view == 0 ? 0.55 : 0.75) * (1.0 + rng.uniform(-0.1, 0.1));
    const double ry = std::max(1.0, ry_factor * rx);

    const int retina_top = static_cast<int>(0.35 * size);
    const int retina_bot = static_cast<int>(0.72 * size);
    for (int y = 0; y < size; ++y) {
        double base;
        if (y < retina_top)
            base = 25.0;
        else if (y < retina_bot)
            base = 170.0 + 25.0 * std::sin(2.0 * 3.14159265358979323846 * 6.0 * (y - retina_top) / std::max(1, retina_bot - retina_top));
        else
            base = 95.0;
        for (int x = 0; x < size; ++x) {
            double v = base + rng.uniform(-8.0, 8.0);
            const double ex = (x - cx) / rx, ey = (y - cy) / ry;
            if (ex * ex + ey * ey <= 1.0 && y >= retina_top && y < retina_bot) v = 20.0 + rng.uniform(-4.0, 4.0);
            img.data[static_cast<std::size_t>(y) * size + x] =
                static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return img;
}

DatasetManifest generate_synthetic(const SyntheticConfig& config, std::uint64_t seed, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (config.n < 0) throw std::invalid_argument("synthetic config: n must be non-negative");
    if (config.image_size <= 0) throw std::invalid_argument("synthetic config: image_size must be positive");

    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir + ": " + ec.message());

    DatasetManifest manifest;
    manifest.provenance = config.config_hash();
    for (int i = 0; i < config.n; ++i) {
        DrawnRecord d = draw_record(config, seed, i);
        PatientRecord r;
        char id[16];
        std::snprintf(id, sizeof(id), "p%04d", i);
        r.patient_id = id;
        r.oct_h = std::string("images/") + id + "_h.png";
        r.oct_v = std::string("images/") + id + "_v.png";
        r.clinical = d.clinical;
        r.va_6mo = d.va_6mo;
        for (int view = 0; view < 2; ++view) {
            Rng img_rng = Rng::substream(seed, 0x17A6E, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(view));
            ImageBuffer img = render_oct(config.image_size, d.truth.aperture, view, img_rng);
            encode_png(resolve_path(out_dir, view == 0 ? r.oct_h : r.oct_v), img);
        }
        manifest.records.push_back(std::move(r));
    }
    if (config.n > 0) split_dataset(manifest.records, config.split_fractions, seed);
    save_manifest((fs::path(out_dir) / "manifest.csv").string(), manifest);
    return manifest;
}

}  // namespace oct
