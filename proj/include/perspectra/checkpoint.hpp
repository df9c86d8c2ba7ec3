#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "perspectra/params.hpp"
#include "perspectra/tensor.hpp"

namespace perspectra {

// Checkpoint wire format, little-endian throughout:
//   magic "PRSC" | u32 version | u32 metadata length + UTF-8 JSON |
//   u32 manifest count | entries (u32 name length + name, u32 rank, u64 dims...) |
//   payload: contiguous IEEE-754 doubles, one run per manifest entry in order.
// The round trip is bit-exact.

inline constexpr char kCheckpointMagic[4] = {'P', 'R', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
public:
    Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > size_)
            throw std::runtime_error("checkpoint: truncated payload (wanted " + std::to_string(n) +
                                     " more bytes, " + std::to_string(size_ - pos_) + " left)");
    }

    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

} // namespace detail

struct CheckpointMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::int64_t epoch = 0;
    nlohmann::json extra = nlohmann::json::object(); // e.g. the architecture spec

    nlohmann::json to_json() const {
        nlohmann::json j = extra;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["epoch"] = epoch;
        return j;
    }

    static CheckpointMeta from_json(nlohmann::json j) {
        CheckpointMeta m;
        m.config_hash = j.value("config_hash", "");
        m.seed = j.value("seed", std::uint64_t{0});
        m.epoch = j.value("epoch", std::int64_t{0});
        j.erase("config_hash");
        j.erase("seed");
        j.erase("epoch");
        m.extra = std::move(j);
        return m;
    }
};

inline std::string serialize_checkpoint(const ParameterSet& params, const CheckpointMeta& meta) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    detail::put_u32(out, kCheckpointVersion);

    std::string meta_json = meta.to_json().dump();
    detail::put_u32(out, static_cast<std::uint32_t>(meta_json.size()));
    out += meta_json;

    detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        detail::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
        for (std::size_t d : e.value.shape) detail::put_u64(out, d);
    }
    for (const auto& e : params.entries())
        for (double v : e.value.data) detail::put_f64(out, v);
    return out;
}

struct LoadedCheckpoint {
    ParameterSet params;
    CheckpointMeta meta;
};

inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
    detail::Reader r(bytes.data(), bytes.size());
    if (r.bytes(4) != std::string(kCheckpointMagic, 4))
        throw std::runtime_error("checkpoint: bad magic, not a checkpoint file");
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    std::uint32_t meta_len = r.u32();
    nlohmann::json meta_json = nlohmann::json::parse(r.bytes(meta_len));

    std::uint32_t count = r.u32();
    std::vector<std::pair<std::string, Shape>> manifest;
    manifest.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.u32());
        std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(r.u64());
        manifest.emplace_back(std::move(name), std::move(shape));
    }

    LoadedCheckpoint out;
    out.meta = CheckpointMeta::from_json(std::move(meta_json));
    for (auto& [name, shape] : manifest) {
        std::size_t n = shape_product(shape);
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = r.f64();
        out.params.add(name, Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

/// Checks that a loaded checkpoint matches an expected parameter layout; the
/// error lists every missing and unexpected tensor name and any shape clash.
inline void validate_checkpoint_layout(const ParameterSet& loaded, const ParameterSet& expected) {
    std::string missing, extra, mismatched;
    for (const auto& e : expected.entries()) {
        if (!loaded.contains(e.name))
            missing += (missing.empty() ? "" : ", ") + e.name;
        else if (loaded.at(e.name).shape != e.value.shape)
            mismatched += (mismatched.empty() ? "" : ", ") + e.name;
    }
    for (const auto& e : loaded.entries())
        if (!expected.contains(e.name)) extra += (extra.empty() ? "" : ", ") + e.name;
    if (missing.empty() && extra.empty() && mismatched.empty()) return;
    std::string msg = "checkpoint does not match architecture:";
    if (!missing.empty()) msg += " missing tensors: " + missing + ";";
    if (!extra.empty()) msg += " unexpected tensors: " + extra + ";";
    if (!mismatched.empty()) msg += " shape mismatch: " + mismatched + ";";
    throw std::runtime_error(msg);
}

inline void save_checkpoint_file(const std::filesystem::path& path, const ParameterSet& params,
                                 const CheckpointMeta& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    std::string bytes = serialize_checkpoint(params, meta);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

inline LoadedCheckpoint load_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str());
}

} // namespace perspectra
