#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "msaan/model.hpp"
#include "msaan/optim.hpp"

// Binary checkpoint: magic "MSAA", format version, model configuration, the
// parameter tensors in canonical order, and (optionally) the Adam moment
// state. All multi-byte fields are little-endian for cross-platform
// determinism; load(save(w)) reproduces every tensor bit-exactly.

namespace msaan {

constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& os, uint16_t v) {
    const uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u8(std::ostream& os, uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

inline void put_f32_data(std::ostream& os, const Tensor& t) {
    for (float f : t.data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(os, bits);
    }
}

inline uint16_t get_u16(std::istream& is) {
    uint8_t b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw IoError("truncated checkpoint");
    return uint16_t(b[0]) | (uint16_t(b[1]) << 8);
}

inline uint32_t get_u32(std::istream& is) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("truncated checkpoint");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline uint8_t get_u8(std::istream& is) {
    uint8_t b;
    is.read(reinterpret_cast<char*>(&b), 1);
    if (!is) throw IoError("truncated checkpoint");
    return b;
}

inline void get_f32_data(std::istream& is, Tensor& t) {
    for (float& f : t.data) {
        const uint32_t bits = get_u32(is);
        std::memcpy(&f, &bits, 4);
    }
}

inline void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    MSAAN_CHECK(name.size() <= UINT16_MAX, "parameter name too long");
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u8(os, 4);  // rank: NCHW
    put_u32(os, static_cast<uint32_t>(t.dims.n));
    put_u32(os, static_cast<uint32_t>(t.dims.c));
    put_u32(os, static_cast<uint32_t>(t.dims.h));
    put_u32(os, static_cast<uint32_t>(t.dims.w));
    put_f32_data(os, t);
}

inline std::pair<std::string, Dims> get_tensor_header(std::istream& is) {
    const uint16_t len = get_u16(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw IoError("truncated checkpoint");
    const uint8_t rank = get_u8(is);
    if (rank != 4) throw FormatError("unsupported checkpoint tensor rank " + std::to_string(rank));
    Dims d;
    d.n = static_cast<int>(get_u32(is));
    d.c = static_cast<int>(get_u32(is));
    d.h = static_cast<int>(get_u32(is));
    d.w = static_cast<int>(get_u32(is));
    return {std::move(name), d};
}

inline void put_config(std::ostream& os, const ModelConfig& cfg) {
    put_u32(os, static_cast<uint32_t>(cfg.n_blocks));
    put_u32(os, static_cast<uint32_t>(cfg.channels));
    put_u32(os, static_cast<uint32_t>(cfg.scale));
    put_u8(os, cfg.use_leb ? 1 : 0);
    put_u8(os, cfg.use_gfm ? 1 : 0);
    put_u8(os, cfg.use_mfa ? 1 : 0);
    put_u8(os, cfg.use_fg ? 1 : 0);
    put_u32(os, static_cast<uint32_t>(cfg.figff_expansion));
}

inline ModelConfig get_config(std::istream& is) {
    ModelConfig cfg;
    cfg.n_blocks = static_cast<int>(get_u32(is));
    cfg.channels = static_cast<int>(get_u32(is));
    cfg.scale = static_cast<int>(get_u32(is));
    cfg.use_leb = get_u8(is) != 0;
    cfg.use_gfm = get_u8(is) != 0;
    cfg.use_mfa = get_u8(is) != 0;
    cfg.use_fg = get_u8(is) != 0;
    cfg.figff_expansion = static_cast<int>(get_u32(is));
    return cfg;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& store,
                            bool include_adam = true) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("MSAA", 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_config(os, cfg);

    detail::put_u32(os, static_cast<uint32_t>(store.entries().size()));
    for (const auto& e : store.entries()) detail::put_tensor(os, e.name, e.value);

    if (include_adam) {
        detail::put_u32(os, static_cast<uint32_t>(store.entries().size()));
        detail::put_u32(os, static_cast<uint32_t>(store.step()));
        for (const auto& e : store.entries()) {
            detail::put_tensor(os, e.name, e.m);
            detail::put_f32_data(os, e.v);  // same dims as m
        }
    } else {
        detail::put_u32(os, 0);
    }
    if (!os) throw IoError("short write to " + path);
}

struct Checkpoint {
    ModelConfig config;
    ParamStore store;
    bool has_adam_state = false;
};

// `expected` guards against loading under a mismatched configuration: the
// load fails loudly instead of reshaping anything.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MSAA", 4) != 0) throw FormatError("not a checkpoint file: " + path);
    const uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.config = detail::get_config(is);
    if (expected && !(ckpt.config == *expected))
        throw DataError("checkpoint model configuration does not match the requested configuration");
    ckpt.config.validate();

    const uint32_t count = detail::get_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, dims] = detail::get_tensor_header(is);
        Tensor t(dims);
        detail::get_f32_data(is, t);
        ckpt.store.add(name, std::move(t));
    }

    // verify the entry set matches the configuration exactly
    size_t expected_count = 0;
    for_each_param(ckpt.config, [&](const std::string& name, Dims dims, ParamInit, int) {
        ++expected_count;
        MSAAN_CHECK(ckpt.store.has(name), "checkpoint missing parameter " + name);
        if (!(ckpt.store.at(name).value.dims == dims))
            throw DataError("checkpoint tensor " + name + " has dims " + ckpt.store.at(name).value.dims.str() +
                            ", expected " + dims.str());
    });
    if (expected_count != ckpt.store.entries().size())
        throw DataError("checkpoint has " + std::to_string(ckpt.store.entries().size()) +
                        " tensors, configuration expects " + std::to_string(expected_count));

    const uint32_t adam_count = detail::get_u32(is);
    if (adam_count > 0) {
        if (adam_count != count) throw FormatError("adam state count does not match parameter count");
        ckpt.store.set_step(static_cast<int64_t>(detail::get_u32(is)));
        for (uint32_t i = 0; i < adam_count; ++i) {
            auto [name, dims] = detail::get_tensor_header(is);
            auto& entry = ckpt.store.at(name);
            MSAAN_CHECK(entry.value.dims == dims, "adam state dims mismatch for " + name);
            detail::get_f32_data(is, entry.m);
            detail::get_f32_data(is, entry.v);
        }
        ckpt.has_adam_state = true;
    }
    return ckpt;
}

}  // namespace msaan
