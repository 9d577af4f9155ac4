#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "milnce/encoders.hpp"
#include "milnce/errors.hpp"
#include "milnce/matrix.hpp"

namespace milnce {

struct Encoders {
    VideoEncoderParams video;
    TextEncoderParams text;
};

/// Adam moment buffers keyed by parameter name, plus the shared step counter.
struct AdamState {
    std::uint64_t t = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

/// Full training state. Saving and loading round-trips bit-exactly, so a run
/// resumed from a checkpoint continues identically to one that never stopped.
struct Checkpoint {
    std::uint32_t version = 1;
    std::string configEcho;  // JSON of the run config that produced this state
    std::uint64_t step = 0;  // completed optimizer updates
    std::uint64_t rngSeed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Encoders encoders;
    AdamState adam;
};

// ---------------------------------------------------------------------------
// Binary container, little-endian, documented in docs/formats.md:
//   magic "MNCK" | u32 version | u64 step | u64 rngSeed
//   f64 beta1 | f64 beta2 | f64 epsilon | u64 adam.t | u32 maxWords
//   u32 configLen | configLen bytes of UTF-8 JSON
//   u32 arrayCount | arrayCount * (u32 nameLen | name | u32 rows | u32 cols
//                                  | rows*cols f64 row-major)
// Named arrays: encoder parameters (biases as 1 x n), then adam.m.* /
// adam.v.* for each trainable parameter.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[4] = {'M', 'N', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw ArtifactError("checkpoint: truncated file");
    return value;
}

inline void write_named_array(std::ostream& os, const std::string& name, std::size_t rows,
                              std::size_t cols, const double* data) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(rows));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cols));
    os.write(reinterpret_cast<const char*>(data),
             static_cast<std::streamsize>(rows * cols * sizeof(double)));
}

struct NamedArray {
    std::string name;
    Matrix value;
};

inline NamedArray read_named_array(std::istream& is) {
    auto nameLen = read_pod<std::uint32_t>(is);
    std::string name(nameLen, '\0');
    is.read(name.data(), nameLen);
    auto rows = read_pod<std::uint32_t>(is);
    auto cols = read_pod<std::uint32_t>(is);
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!is) throw ArtifactError("checkpoint: truncated array payload for '" + name + "'");
    return NamedArray{std::move(name), std::move(m)};
}

inline std::vector<std::pair<std::string, Matrix>> collect_arrays(const Checkpoint& ck) {
    std::vector<std::pair<std::string, Matrix>> arr;
    auto pushMat = [&](const std::string& n, const Matrix& m) { arr.emplace_back(n, m); };
    auto pushVec = [&](const std::string& n, const std::vector<double>& v) {
        arr.emplace_back(n, Matrix(1, v.size(), v));
    };
    const auto& e = ck.encoders;
    pushMat("video.W1", e.video.w1);
    pushVec("video.b1", e.video.b1);
    pushMat("video.W2", e.video.w2);
    pushVec("video.b2", e.video.b2);
    if (e.video.attn) {
        pushMat("video.Wa", e.video.attn->w);
        pushVec("video.ba", e.video.attn->b);
    }
    pushMat("text.E", e.text.embedding);
    pushMat("text.W1", e.text.w1);
    pushVec("text.b1", e.text.b1);
    pushMat("text.W2", e.text.w2);
    pushVec("text.b2", e.text.b2);
    if (e.text.attn) {
        pushMat("text.Wa", e.text.attn->w);
        pushVec("text.ba", e.text.attn->b);
    }
    for (const auto& [name, buf] : ck.adam.m) pushVec("adam.m." + name, buf);
    for (const auto& [name, buf] : ck.adam.v) pushVec("adam.v." + name, buf);
    return arr;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ArtifactError("checkpoint: cannot open '" + tmp.string() + "' for write");
        os.write(detail::kCheckpointMagic, 4);
        detail::write_pod<std::uint32_t>(os, ck.version);
        detail::write_pod<std::uint64_t>(os, ck.step);
        detail::write_pod<std::uint64_t>(os, ck.rngSeed);
        detail::write_pod<double>(os, ck.beta1);
        detail::write_pod<double>(os, ck.beta2);
        detail::write_pod<double>(os, ck.epsilon);
        detail::write_pod<std::uint64_t>(os, ck.adam.t);
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.encoders.text.maxWords));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.configEcho.size()));
        os.write(ck.configEcho.data(), static_cast<std::streamsize>(ck.configEcho.size()));
        auto arrays = detail::collect_arrays(ck);
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
        for (const auto& [name, m] : arrays) {
            detail::write_named_array(os, name, m.rows, m.cols, m.data.data());
        }
        if (!os) throw ArtifactError("checkpoint: write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArtifactError("checkpoint: cannot open '" + path.string() + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0) {
        throw ArtifactError("checkpoint: bad magic in '" + path.string() + "'");
    }
    Checkpoint ck;
    ck.version = detail::read_pod<std::uint32_t>(is);
    if (ck.version != 1) {
        throw ArtifactError("checkpoint: unsupported version " + std::to_string(ck.version));
    }
    ck.step = detail::read_pod<std::uint64_t>(is);
    ck.rngSeed = detail::read_pod<std::uint64_t>(is);
    ck.beta1 = detail::read_pod<double>(is);
    ck.beta2 = detail::read_pod<double>(is);
    ck.epsilon = detail::read_pod<double>(is);
    ck.adam.t = detail::read_pod<std::uint64_t>(is);
    auto maxWords = detail::read_pod<std::uint32_t>(is);
    auto configLen = detail::read_pod<std::uint32_t>(is);
    ck.configEcho.resize(configLen);
    is.read(ck.configEcho.data(), configLen);
    if (!is) throw ArtifactError("checkpoint: truncated config echo");
    auto count = detail::read_pod<std::uint32_t>(is);
    std::map<std::string, Matrix> arrays;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto a = detail::read_named_array(is);
        arrays.emplace(std::move(a.name), std::move(a.value));
    }

    auto takeMat = [&](const std::string& n) {
        auto it = arrays.find(n);
        if (it == arrays.end()) throw ArtifactError("checkpoint: missing array '" + n + "'");
        Matrix m = std::move(it->second);
        arrays.erase(it);
        return m;
    };
    auto takeVec = [&](const std::string& n) {
        Matrix m = takeMat(n);
        return std::move(m.data);
    };
    auto& e = ck.encoders;
    e.video.w1 = takeMat("video.W1");
    e.video.b1 = takeVec("video.b1");
    e.video.w2 = takeMat("video.W2");
    e.video.b2 = takeVec("video.b2");
    if (arrays.count("video.Wa")) {
        e.video.attn = AttentionHead{takeMat("video.Wa"), takeVec("video.ba")};
    }
    e.text.embedding = takeMat("text.E");
    e.text.w1 = takeMat("text.W1");
    e.text.b1 = takeVec("text.b1");
    e.text.w2 = takeMat("text.W2");
    e.text.b2 = takeVec("text.b2");
    if (arrays.count("text.Wa")) {
        e.text.attn = AttentionHead{takeMat("text.Wa"), takeVec("text.ba")};
    }
    e.text.maxWords = maxWords;
    for (auto& [name, m] : arrays) {
        if (name.rfind("adam.m.", 0) == 0) {
            ck.adam.m[name.substr(7)] = m.data;
        } else if (name.rfind("adam.v.", 0) == 0) {
            ck.adam.v[name.substr(7)] = m.data;
        } else {
            throw ArtifactError("checkpoint: unexpected array '" + name + "'");
        }
    }
    return ck;
}

inline bool encoders_equal(const Encoders& a, const Encoders& b) {
    auto headEq = [](const std::optional<AttentionHead>& x, const std::optional<AttentionHead>& y) {
        if (x.has_value() != y.has_value()) return false;
        return !x || (x->w == y->w && x->b == y->b);
    };
    return a.video.w1 == b.video.w1 && a.video.b1 == b.video.b1 && a.video.w2 == b.video.w2 &&
           a.video.b2 == b.video.b2 && headEq(a.video.attn, b.video.attn) &&
           a.text.embedding == b.text.embedding && a.text.w1 == b.text.w1 &&
           a.text.b1 == b.text.b1 && a.text.w2 == b.text.w2 && a.text.b2 == b.text.b2 &&
           headEq(a.text.attn, b.text.attn) && a.text.maxWords == b.text.maxWords;
}

}  // namespace milnce
