#include "sstode/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sstode/errors.hpp"

namespace sstode::io {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string checksum_string(std::span<const std::uint8_t> bytes) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + buf;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void atomic_write(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::CheckpointWriteFailure, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error(ErrorCode::CheckpointWriteFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::CheckpointWriteFailure, "rename " + tmp.string() + " failed: " + ec.message());
}

void atomic_write_text(const fs::path& path, const std::string& text) {
    atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json read_json(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ManifestMalformed, path.string() + ": " + e.what());
    }
}

void append_f64_le(std::vector<std::uint8_t>& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
}

void append_f32_le(std::vector<std::uint8_t>& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
}

std::vector<double> decode_f64_le(std::span<const std::uint8_t> bytes) {
    require(bytes.size() % 8 == 0, ErrorCode::ShapeMismatch, "f64 blob length is not a multiple of 8");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::vector<double> decode_f32_le(std::span<const std::uint8_t> bytes) {
    require(bytes.size() % 4 == 0, ErrorCode::ShapeMismatch, "f32 blob length is not a multiple of 4");
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[i * 4 + k]) << (8 * k);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return out;
}

void save_params(const ad::ParamSet& params, const fs::path& stem, const json& meta) {
    std::vector<std::uint8_t> blob;
    json entries = json::array();
    std::size_t offset = 0;
    for (const auto& [name, e] : params.entries()) {
        append_f64_le(blob, e.value.span());
        entries.push_back({{"name", name}, {"shape", e.value.shape()}, {"offset", offset}, {"count", e.value.size()}});
        offset += e.value.size();
    }
    fs::path bin = stem;
    bin += ".bin";
    fs::path manifest = stem;
    manifest += ".json";
    json m = {{"format", "sstode-params"},
              {"version", 1},
              {"dtype", "f64"},
              {"byte_order", "little-endian"},
              {"step", params.step},
              {"blob", bin.filename().string()},
              {"checksum", checksum_string(blob)},
              {"entries", entries},
              {"meta", meta}};
    if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());
    // Blob first: a manifest never points at a blob that is not fully on disk.
    atomic_write(bin, blob);
    atomic_write_text(manifest, m.dump(2));
}

ad::ParamSet load_params(const fs::path& stem, json* meta) {
    fs::path manifest = stem;
    manifest += ".json";
    const json m = read_json(manifest);
    try {
        if (m.at("format") != "sstode-params" || m.at("dtype") != "f64")
            throw Error(ErrorCode::ManifestMalformed, manifest.string() + ": not an f64 parameter manifest");
        const fs::path bin = manifest.parent_path() / m.at("blob").get<std::string>();
        const auto bytes = read_file(bin);
        if (checksum_string(bytes) != m.at("checksum").get<std::string>())
            throw Error(ErrorCode::ChecksumMismatch, bin.string());
        const auto values = decode_f64_le(bytes);
        ad::ParamSet ps;
        for (const auto& e : m.at("entries")) {
            Shape shape = e.at("shape").get<Shape>();
            const std::size_t off = e.at("offset"), count = e.at("count");
            if (count != shape_size(shape) || off + count > values.size())
                throw Error(ErrorCode::ShapeMismatch, "entry '" + e.at("name").get<std::string>() + "' out of range");
            ps.add(e.at("name"), Tensor(shape, std::vector<double>(values.begin() + off, values.begin() + off + count)));
        }
        ps.step = m.value("step", std::size_t{0});
        if (meta) *meta = m.value("meta", json::object());
        return ps;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ManifestMalformed, manifest.string() + ": " + e.what());
    }
}

} // namespace sstode::io
