#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "network.hpp"
#include "optim.hpp"

namespace m4c {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
    ModelConfig config{};
    ParamStore<float> params{};
    std::uint64_t stream_seed = 0;
    std::uint64_t round = 0;  // training rounds completed
    nlohmann::json train_config = nlohmann::json::object();
    std::optional<AdamWState<float>> optimizer{};
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

inline void append_le(std::string& blob, const Mat<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(m.data()[i]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        char b[4];
        std::memcpy(b, &bits, 4);
        blob.append(b, 4);
    }
}

inline void read_le(const std::string& blob, std::size_t offset, Mat<float>& m) {
    if (offset + static_cast<std::size_t>(m.size()) * 4 > blob.size()) throw CheckpointError("checkpoint blob truncated");
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, blob.data() + offset + static_cast<std::size_t>(i) * 4, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        m.data()[i] = std::bit_cast<float>(bits);
    }
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + p.string());
}

inline nlohmann::json pack(const ParamStore<float>& store, std::string& blob) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& e : store.entries()) {
        tensors.push_back({{"name", e.name},
                           {"shape", {e.value.rows(), e.value.cols()}},
                           {"dtype", "float32"},
                           {"offset", blob.size()}});
        append_le(blob, e.value);
    }
    return tensors;
}

inline ParamStore<float> unpack(const nlohmann::json& tensors, const std::string& blob, const std::vector<TensorShape>& expected,
                                const std::string& what) {
    if (!tensors.is_array() || tensors.size() != expected.size())
        throw CheckpointError(what + ": expected " + std::to_string(expected.size()) + " tensors, found " +
                              std::to_string(tensors.is_array() ? tensors.size() : 0));
    ParamStore<float> out;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& t = tensors[i];
        const auto& e = expected[i];
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
        if (name != e.name) throw CheckpointError(what + ": tensor " + std::to_string(i) + " is " + name + ", expected " + e.name);
        if (shape.size() != 2 || shape[0] != e.rows || shape[1] != e.cols)
            throw CheckpointError(what + ": shape mismatch for " + name);
        if (t.at("dtype").get<std::string>() != "float32") throw CheckpointError(what + ": unsupported dtype for " + name);
        Mat<float> m(e.rows, e.cols);
        read_le(blob, t.at("offset").get<std::size_t>(), m);
        out.add(name, std::move(m));
    }
    return out;
}

}  // namespace detail

/// Directory layout: manifest.json, params.bin and (optionally) optimizer.bin.
inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string blob;
    nlohmann::json manifest;
    manifest["format"] = "m4c-checkpoint";
    manifest["format_version"] = kCheckpointFormatVersion;
    manifest["model_config"] = to_json(ck.config);
    manifest["stream_seed"] = ck.stream_seed;
    manifest["round"] = ck.round;
    manifest["train_config"] = ck.train_config;
    manifest["blob"] = "params.bin";
    manifest["tensors"] = detail::pack(ck.params, blob);
    manifest["params_fnv1a"] = detail::hex64(detail::fnv1a(blob.data(), blob.size()));
    detail::write_file(dir / "params.bin", blob);
    if (ck.optimizer) {
        std::string oblob;
        manifest["optimizer"] = {{"blob", "optimizer.bin"},
                                 {"step", ck.optimizer->step},
                                 {"m", detail::pack(ck.optimizer->m, oblob)},
                                 {"v", detail::pack(ck.optimizer->v, oblob)}};
        detail::write_file(dir / "optimizer.bin", oblob);
    } else if (fs::exists(dir / "optimizer.bin")) {
        fs::remove(dir / "optimizer.bin");
    }
    detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw CheckpointError("checkpoint directory not found: " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    if (manifest.value("format", std::string{}) != "m4c-checkpoint") throw CheckpointError("not a checkpoint manifest: " + dir.string());
    if (manifest.value("format_version", 0) != kCheckpointFormatVersion)
        throw CheckpointError("unsupported checkpoint format version");
    Checkpoint ck;
    try {
        ck.config = model_config_from_json(manifest.at("model_config"));
        ck.stream_seed = manifest.at("stream_seed").get<std::uint64_t>();
        ck.round = manifest.at("round").get<std::uint64_t>();
        ck.train_config = manifest.value("train_config", nlohmann::json::object());
        const auto shapes = param_shapes(ck.config);
        const auto blob = detail::read_file(dir / manifest.at("blob").get<std::string>());
        if (manifest.contains("params_fnv1a") &&
            manifest["params_fnv1a"].get<std::string>() != detail::hex64(detail::fnv1a(blob.data(), blob.size())))
            throw CheckpointError("parameter blob hash mismatch in " + dir.string());
        ck.params = detail::unpack(manifest.at("tensors"), blob, shapes, "params");
        if (const auto bad = ck.params.first_non_finite(); !bad.empty()) throw CheckpointError("non-finite parameter " + bad);
        if (manifest.contains("optimizer")) {
            const auto& o = manifest["optimizer"];
            const auto oblob = detail::read_file(dir / o.at("blob").get<std::string>());
            AdamWState<float> st;
            st.step = o.at("step").get<std::uint64_t>();
            st.m = detail::unpack(o.at("m"), oblob, shapes, "optimizer.m");
            st.v = detail::unpack(o.at("v"), oblob, shapes, "optimizer.v");
            ck.optimizer = std::move(st);
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
    }
    return ck;
}

/// Content hash of the parameter blob, as recorded in the manifest.
inline std::string checkpoint_hash(const std::filesystem::path& dir) {
    const auto blob = detail::read_file(dir / "params.bin");
    return detail::hex64(detail::fnv1a(blob.data(), blob.size()));
}

}  // namespace m4c
