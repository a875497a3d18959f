#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace greenmg {

/// On-disk container: one line of JSON metadata, a newline, then the payload
/// as raw little-endian float64. The writer adds "payload_count" and a
/// "checksum" (FNV-1a 64 over the payload bytes, lower-case hex) to the
/// header; the reader verifies both.
struct Blob {
    nlohmann::json header;
    std::vector<double> payload;
};

uint64_t fnv1a64(const void* data, std::size_t bytes);

/// Writes to a temporary file in the same directory, then renames into
/// place, so a crash never leaves a truncated file at `path`.
void write_blob_atomic(const std::string& path, nlohmann::json header, const double* data,
                       std::size_t count);

Blob read_blob(const std::string& path);

/// Creates the directory (and parents) if missing; throws IoFailure on error.
void ensure_directory(const std::string& path);

/// Writes a small text file atomically (same rename scheme as blobs).
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace greenmg
