#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "abcran/tensor.hpp"

namespace abcran::io {

/// Raw little-endian IEEE-754 binary64, no header.
void write_f64le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64le(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Field tensor directory: meta.json (caller-supplied keys plus dtype/layout/shape)
/// next to snapshots.bin. Used for datasets and for exported error fields.
void write_field_dir(const std::filesystem::path& dir, nlohmann::json meta, const Tensor& field);

}  // namespace abcran::io
