#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "octpredict/models.hpp"

namespace oct {

namespace {

constexpr char kMagic[4] = {'O', 'P', 'W', 'T'};
constexpr std::uint8_t kVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw std::runtime_error("weight file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const std::uint64_t n = read_u64(in);
    if (n > (1ULL << 20)) throw std::runtime_error("weight file corrupt: unreasonable string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("weight file truncated");
    return s;
}

}  // namespace

void save_model_weights(const std::string& path, const ModelWeights& weights) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out.write(kMagic, 4);
        out.put(static_cast<char>(kVersion));
        write_string(out, weights.arch);
        write_string(out, weights.provenance);
        write_u64(out, weights.entries.size());
        for (const auto& [p, t] : weights.entries) {
            write_string(out, p);
            write_u64(out, t.shape.size());
            for (std::int64_t e : t.shape) write_u64(out, static_cast<std::uint64_t>(e));
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        }
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

ModelWeights load_model_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weight file " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path + " is not an OPWT weight file");
    const int version = in.get();
    if (version != kVersion) throw std::runtime_error(path + ": unsupported weight file version " + std::to_string(version));
    ModelWeights w;
    w.arch = read_string(in);
    w.provenance = read_string(in);
    const std::uint64_t n = read_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string p = read_string(in);
        const std::uint64_t rank = read_u64(in);
        if (rank > 8) throw std::runtime_error(path + ": corrupt entry rank");
        std::vector<std::int64_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::int64_t>(read_u64(in));
        TensorF t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in) throw std::runtime_error(path + ": weight file truncated in entry " + p);
        w.entries.emplace_back(std::move(p), std::move(t));
    }
    return w;
}

}  // namespace oct
