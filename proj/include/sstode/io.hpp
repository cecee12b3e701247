#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sstode/autodiff.hpp"

namespace sstode::io {

using json = nlohmann::json;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string checksum_string(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);
json read_json(const std::filesystem::path& path);

/// Little-endian IEEE-754 encoding regardless of host order.
void append_f64_le(std::vector<std::uint8_t>& out, std::span<const double> values);
void append_f32_le(std::vector<std::uint8_t>& out, std::span<const double> values);
std::vector<double> decode_f64_le(std::span<const std::uint8_t> bytes);
std::vector<double> decode_f32_le(std::span<const std::uint8_t> bytes);

/// ParamSet checkpoint: `<stem>.json` manifest (names, shapes, dtype, offsets,
/// checksum, optional metadata) plus `<stem>.bin` raw float64 little-endian blob.
void save_params(const ad::ParamSet& params, const std::filesystem::path& stem, const json& meta = json::object());
ad::ParamSet load_params(const std::filesystem::path& stem, json* meta = nullptr);

} // namespace sstode::io
