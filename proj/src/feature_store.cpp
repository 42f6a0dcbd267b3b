#include "steps/feature_store.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "steps/errors.hpp"

namespace steps {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((std::uint64_t(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

void write_feature_store(const FeatureSequence& seq, const std::string& path) {
    if (!seq.data.allFinite()) {
        for (Eigen::Index t = 0; t < seq.data.rows(); ++t) {
            if (!seq.data.row(t).allFinite()) {
                std::ostringstream os;
                os << "refusing to write non-finite feature at frame " << t << " to " << path;
                throw DataError(os.str());
            }
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(kMagic, 4);
    put_le<std::uint32_t>(f, kVersion);
    put_le<std::uint64_t>(f, std::uint64_t(seq.data.rows()));
    put_le<std::uint64_t>(f, std::uint64_t(seq.data.cols()));
    // row-major storage, so the buffer is already in file order
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(seq.data.data()),
            std::streamsize(sizeof(float)) * seq.data.size());
    if (!f) throw DataError("write failed: " + path);
}

FeatureSequence read_feature_store(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad magic, not a feature store: " + path);
    const auto version = get_le<std::uint32_t>(f);
    if (version != kVersion) {
        throw DataError("unsupported feature-store version " + std::to_string(version) + ": " + path);
    }
    const auto T = get_le<std::uint64_t>(f);
    const auto D = get_le<std::uint64_t>(f);
    if (!f || T == 0 || D == 0 || T > (1ull << 40) || D > (1ull << 32)) {
        throw DataError("invalid shape in feature store header: " + path);
    }
    FeatureSequence seq;
    seq.data.resize(Eigen::Index(T), Eigen::Index(D));
    f.read(reinterpret_cast<char*>(seq.data.data()), std::streamsize(sizeof(float)) * seq.data.size());
    if (std::size_t(f.gcount()) != sizeof(float) * T * D) {
        throw DataError("truncated feature store payload: " + path);
    }
    seq.default_timestamps();
    return seq;
}

}  // namespace steps
