#include "octpredict/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "octpredict/rng.hpp"

namespace oct {

void ClinicalFeatures::validate() const {
    if (age <= 0) throw std::invalid_argument("clinical features: age must be positive");
    if (mh_duration < 0) throw std::invalid_argument("clinical features: MH duration must be non-negative");
    if (baseline_va < 0 || baseline_va > 100)
        throw std::invalid_argument("clinical features: baseline VA must be in [0, 100] letters");
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw std::logic_error("unknown split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split name: " + name);
}

std::vector<const PatientRecord*> DatasetManifest::in_split(Split s) const {
    std::vector<const PatientRecord*> out;
    for (const auto& r : records)
        if (r.split == s) out.push_back(&r);
    return out;
}

bool derive_label(const PatientRecord& record) {
    record.clinical.validate();
    if (record.va_6mo < 0 || record.va_6mo > 100)
        throw std::invalid_argument("record " + record.patient_id + ": 6-month VA must be in [0, 100] letters");
    return record.va_6mo - record.clinical.baseline_va >= 15;
}

void split_dataset(std::vector<PatientRecord>& records, std::array<double, 3> fractions, std::uint64_t seed) {
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
    const std::int64_t n = static_cast<std::int64_t>(records.size());
    if (n < 3) throw std::invalid_argument("split requires at least 3 records");

    const std::int64_t n_val = std::llround(n * fractions[1]);
    const std::int64_t n_test = std::llround(n * fractions[2]);
    const std::int64_t n_train = n - n_val - n_test;
    if (n_train < 1 || n_val < 0 || n_test < 0) throw std::invalid_argument("split fractions leave no training records");

    std::vector<std::size_t> perm(records.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng = Rng::substream(seed, 0x5117);
    for (std::int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

    for (std::int64_t i = 0; i < n; ++i) {
        Split s = Split::Train;
        if (i >= n_train && i < n_train + n_val) s = Split::Val;
        else if (i >= n_train + n_val) s = Split::Test;
        records[perm[i]].split = s;
    }
}

std::vector<TrainSample> duplicate_per_oct(const std::vector<PatientRecord>& records,
                                           const std::vector<std::size_t>& indices) {
    std::vector<TrainSample> out;
    out.reserve(indices.size() * 2);
    for (std::size_t idx : indices) {
        const bool label = derive_label(records[idx]);
        out.push_back({idx, 0, label});
        out.push_back({idx, 1, label});
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

const char* kHeader =
    "patient_id,oct_h_path,oct_v_path,age,mh_duration,elevated_edge,pseudophakic,baseline_va,va_6mo,split";

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    // id uniqueness is part of the manifest contract
    {
        std::vector<std::string> ids;
        for (const auto& r : manifest.records) ids.push_back(r.patient_id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw std::invalid_argument("manifest has duplicate patient ids");
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        if (!manifest.provenance.empty()) out << "# provenance=" << manifest.provenance << "\n";
        out << kHeader << "\n";
        for (const auto& r : manifest.records) {
            out << r.patient_id << ',' << r.oct_h << ',' << r.oct_v << ',' << format_double(r.clinical.age) << ','
                << format_double(r.clinical.mh_duration) << ',' << (r.clinical.elevated_edge ? 1 : 0) << ','
                << (r.clinical.pseudophakic ? 1 : 0) << ',' << r.clinical.baseline_va << ',' << r.va_6mo << ','
                << split_name(r.split) << "\n";
        }
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path);
    DatasetManifest m;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string tag = "# provenance=";
            if (line.rfind(tag, 0) == 0) m.provenance = line.substr(tag.size());
            continue;
        }
        if (!saw_header) {
            if (line != kHeader)
                throw std::runtime_error(path + ": unexpected manifest header on line " + std::to_string(line_no));
            saw_header = true;
            continue;
        }
        auto f = split_csv_line(line);
        if (f.size() != 10)
            throw std::runtime_error(path + ": expected 10 fields on line " + std::to_string(line_no) + ", got " +
                                     std::to_string(f.size()));
        PatientRecord r;
        r.patient_id = f[0];
        r.oct_h = f[1];
        r.oct_v = f[2];
        r.clinical.age = std::stod(f[3]);
        r.clinical.mh_duration = std::stod(f[4]);
        r.clinical.elevated_edge = f[5] == "1";
        r.clinical.pseudophakic = f[6] == "1";
        r.clinical.baseline_va = std::stoi(f[7]);
        r.va_6mo = std::stoi(f[8]);
        r.split = split_from_name(f[9]);
        m.records.push_back(std::move(r));
    }
    if (!saw_header) throw std::runtime_error(path + ": missing manifest header");
    return m;
}

std::string resolve_path(const std::string& dataset_dir, const std::string& rel) {
    std::filesystem::path p(rel);
    if (p.is_absolute()) return rel;
    return (std::filesystem::path(dataset_dir) / p).string();
}

}  // namespace oct
