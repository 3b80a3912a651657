#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "octpredict/image.hpp"

namespace oct {

struct ClinicalFeatures {
    double age = 0;          // years
    double mh_duration = 0;  // weeks
    bool elevated_edge = false;
    bool pseudophakic = false;
    int baseline_va = 0;  // ETDRS letters

    void validate() const;
};

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct PatientRecord {
    std::string patient_id;
    std::string oct_h;  // horizontal cut, path relative to the manifest
    std::string oct_v;  // vertical cut
    ClinicalFeatures clinical;
    int va_6mo = 0;  // ETDRS letters at 6 months
    Split split = Split::Train;
};

struct DatasetManifest {
    std::vector<PatientRecord> records;
    std::string provenance;  // synthetic config hash or "external"

    std::vector<const PatientRecord*> in_split(Split s) const;
};

// Positive = clinically significant improvement: a gain of at least
// 15 ETDRS letters at 6 months (inclusive).
bool derive_label(const PatientRecord& record);

// Seeded uniform permutation, contiguous assignment. Val and test sizes are
// round(n * fraction); the remainder goes to train.
void split_dataset(std::vector<PatientRecord>& records, std::array<double, 3> fractions, std::uint64_t seed);

// One training sample per OCT image, carrying the source record's label.
struct TrainSample {
    std::size_t record_index = 0;
    int view = 0;  // 0 = horizontal, 1 = vertical
    bool label = false;
};

std::vector<TrainSample> duplicate_per_oct(const std::vector<PatientRecord>& records,
                                           const std::vector<std::size_t>& indices);

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

// Resolves a record's image path against the directory holding the manifest.
std::string resolve_path(const std::string& dataset_dir, const std::string& rel);

}  // namespace oct
