#pragma once

// Feature sets, the seeded synthetic generator, and the NCPL embedding file.

#include "ncplr/common.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ncplr {

/// N unit-norm embeddings with optional identity/camera metadata.
///
/// `true_ids` is empty when ground truth is unknown. `cam_ids` is empty when
/// camera metadata is absent (treated as camera 0 by consumers).
struct FeatureSet {
    RowMatrix features;
    std::vector<int> true_ids;
    std::vector<int> cam_ids;

    Index n() const { return static_cast<Index>(features.rows()); }
    Index dim() const { return static_cast<Index>(features.cols()); }
    bool has_truth() const { return !true_ids.empty(); }
    int cam(Index i) const { return cam_ids.empty() ? 0 : cam_ids[i]; }

    /// Subset of rows, metadata carried along.
    FeatureSet select(const std::vector<Index>& rows) const {
        FeatureSet out;
        out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        for (Index r = 0; r < rows.size(); ++r) out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
        if (has_truth()) {
            for (Index r : rows) out.true_ids.push_back(true_ids[r]);
        }
        if (!cam_ids.empty()) {
            for (Index r : rows) out.cam_ids.push_back(cam_ids[r]);
        }
        return out;
    }
};

struct SyntheticSpec {
    Index num_ids = 8;
    Index points_per_id = 12;
    Index dim = 16;
    double intra_std = 0.1;
    Index num_cams = 2;
    std::uint64_t seed = 0;
};

/// Scales each row to unit Euclidean norm. Zero (or non-finite) rows are rejected.
inline void normalize_rows(RowMatrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double norm = m.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw NormalizationError("row " + std::to_string(i) + " cannot be unit-normalized (norm " +
                                     format_double(norm) + ")");
        }
        m.row(i) /= norm;
    }
}

/// Throws ConfigError when the FeatureSet invariants do not hold.
inline void validate(const FeatureSet& fs) {
    if (fs.n() < 1) throw ConfigError("feature set is empty");
    if (fs.dim() < 2) throw ConfigError("feature dimension must be >= 2");
    if (fs.has_truth() && fs.true_ids.size() != fs.n()) throw ConfigError("true_ids length differs from row count");
    if (!fs.cam_ids.empty() && fs.cam_ids.size() != fs.n()) throw ConfigError("cam_ids length differs from row count");
}

inline FeatureSet generate_synthetic(const SyntheticSpec& spec) {
    if (spec.dim < 2) throw ConfigError("synthetic dim must be >= 2");
    if (spec.num_ids < 2) throw ConfigError("synthetic num_ids must be >= 2");
    if (spec.points_per_id < 1) throw ConfigError("synthetic points_per_id must be >= 1");
    if (!(spec.intra_std >= 0.0)) throw ConfigError("synthetic intra_std must be >= 0");
    if (spec.num_cams < 1) throw ConfigError("synthetic num_cams must be >= 1");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto d = static_cast<Eigen::Index>(spec.dim);

    // Identity means: normalized Gaussians are uniform on the sphere.
    RowMatrix means(static_cast<Eigen::Index>(spec.num_ids), d);
    for (Eigen::Index g = 0; g < means.rows(); ++g) {
        for (Eigen::Index k = 0; k < d; ++k) means(g, k) = gauss(rng);
    }
    normalize_rows(means);

    FeatureSet fs;
    const Index n = spec.num_ids * spec.points_per_id;
    fs.features.resize(static_cast<Eigen::Index>(n), d);
    fs.true_ids.reserve(n);
    fs.cam_ids.reserve(n);
    Index row = 0;
    for (Index g = 0; g < spec.num_ids; ++g) {
        for (Index j = 0; j < spec.points_per_id; ++j, ++row) {
            for (Eigen::Index k = 0; k < d; ++k) {
                double noise = spec.intra_std > 0.0 ? spec.intra_std * gauss(rng) : 0.0;
                fs.features(static_cast<Eigen::Index>(row), k) = means(static_cast<Eigen::Index>(g), k) + noise;
            }
            fs.true_ids.push_back(static_cast<int>(g));
            fs.cam_ids.push_back(static_cast<int>(j % spec.num_cams));
        }
    }
    normalize_rows(fs.features);
    return fs;
}

namespace detail {

inline constexpr std::array<char, 4> kFeatureMagic{'N', 'C', 'P', 'L'};
inline constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), in.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.csv");
}

}  // namespace detail

/// Bytes in the NCPL header: magic, version, N, d.
inline constexpr std::size_t kFeatureHeaderBytes = 4 + 4 + 8 + 8;

/// Writes the NCPL binary file and its `<path>.meta.csv` sidecar.
inline void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
    validate(fs);
    std::string bytes;
    bytes.reserve(kFeatureHeaderBytes + fs.n() * fs.dim() * 4);
    bytes.append(detail::kFeatureMagic.data(), 4);
    detail::put_le<std::uint32_t>(bytes, detail::kFeatureVersion);
    detail::put_le<std::uint64_t>(bytes, fs.n());
    detail::put_le<std::uint64_t>(bytes, fs.dim());
    for (Eigen::Index i = 0; i < fs.features.rows(); ++i) {
        for (Eigen::Index k = 0; k < fs.features.cols(); ++k) {
            detail::put_le<float>(bytes, static_cast<float>(fs.features(i, k)));
        }
    }
    detail::write_file(path, bytes);

    std::string meta = "index,true_id,cam_id\n";
    for (Index i = 0; i < fs.n(); ++i) {
        meta += std::to_string(i) + ',' + std::to_string(fs.has_truth() ? fs.true_ids[i] : -1) + ',' +
                std::to_string(fs.cam(i)) + '\n';
    }
    detail::write_file(detail::sidecar_path(path), meta);
}

/// Reads an NCPL file (and the sidecar when present); rows are re-normalized.
inline FeatureSet load_features(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    auto fail = [&](std::size_t offset, const std::string& what) {
        throw FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
    };
    if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kFeatureMagic.data(), 4) != 0) fail(0, "bad magic");
    if (bytes.size() < kFeatureHeaderBytes) fail(bytes.size(), "truncated header");
    auto version = detail::get_le<std::uint32_t>(bytes, 4);
    if (version != detail::kFeatureVersion) fail(4, "unsupported version " + std::to_string(version));
    auto n = detail::get_le<std::uint64_t>(bytes, 8);
    auto d = detail::get_le<std::uint64_t>(bytes, 16);
    if (n == 0) fail(8, "N is zero");
    if (d < 2) fail(16, "d must be >= 2");
    if (n > (bytes.size() / 4) || d > (bytes.size() / 4) || n * d > (bytes.size() - kFeatureHeaderBytes) / 4) {
        fail(bytes.size(), "truncated payload (expected " + std::to_string(n) + "x" + std::to_string(d) + " floats)");
    }
    if (bytes.size() != kFeatureHeaderBytes + n * d * 4) fail(kFeatureHeaderBytes + n * d * 4, "trailing bytes");

    FeatureSet fs;
    fs.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    std::size_t offset = kFeatureHeaderBytes;
    for (Eigen::Index i = 0; i < fs.features.rows(); ++i) {
        for (Eigen::Index k = 0; k < fs.features.cols(); ++k, offset += 4) {
            float v = detail::get_le<float>(bytes, offset);
            if (!std::isfinite(v)) fail(offset, "non-finite value");
            fs.features(i, k) = v;
        }
    }
    normalize_rows(fs.features);

    const auto meta_path = detail::sidecar_path(path);
    if (std::filesystem::exists(meta_path)) {
        std::istringstream meta(detail::read_file(meta_path));
        std::string line;
        if (!std::getline(meta, line) || line != "index,true_id,cam_id") {
            throw FormatError(meta_path.string() + ": bad header");
        }
        std::vector<int> ids;
        std::vector<int> cams;
        Index expected = 0;
        while (std::getline(meta, line)) {
            if (line.empty()) continue;
            std::istringstream row(line);
            std::string a, b, c;
            if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c)) {
                throw FormatError(meta_path.string() + ": malformed row " + std::to_string(expected));
            }
            try {
                if (std::stoull(a) != expected) throw FormatError(meta_path.string() + ": index out of order");
                ids.push_back(std::stoi(b));
                cams.push_back(std::stoi(c));
            } catch (const std::logic_error&) {
                throw FormatError(meta_path.string() + ": unparsable row " + std::to_string(expected));
            }
            ++expected;
        }
        if (ids.size() != n) throw FormatError(meta_path.string() + ": row count differs from feature file");
        if (std::any_of(ids.begin(), ids.end(), [](int v) { return v >= 0; })) fs.true_ids = std::move(ids);
        fs.cam_ids = std::move(cams);
    }
    return fs;
}

}  // namespace ncplr
