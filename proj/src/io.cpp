#include "greenmg/io.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "greenmg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "payload serialization assumes a little-endian host");

namespace greenmg {

namespace fs = std::filesystem;

uint64_t fnv1a64(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t hash = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ull;
    }
    return hash;
}

namespace {

std::string checksum_hex(const double* data, std::size_t count) {
    const uint64_t hash = fnv1a64(data, count * sizeof(double));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

void rename_into_place(const fs::path& tmp, const fs::path& target) {
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoFailure("cannot rename " + tmp.string() + " to " + target.string() + ": " +
                        ec.message());
    }
}

}  // namespace

void write_blob_atomic(const std::string& path, nlohmann::json header, const double* data,
                       std::size_t count) {
    header["payload_count"] = count;
    header["checksum"] = checksum_hex(data, count);
    const std::string line = header.dump();

    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot open " + tmp.string() + " for writing");
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
        out.put('\n');
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(count * sizeof(double)));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw IoFailure("write failed for " + tmp.string());
        }
    }
    rename_into_place(tmp, target);
}

Blob read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw IoFailure("missing header line in " + path);

    Blob blob;
    try {
        blob.header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("bad header in " + path + ": " + e.what());
    }
    if (!blob.header.contains("payload_count")) {
        throw IoFailure("header in " + path + " lacks payload_count");
    }

    const auto count = blob.header["payload_count"].get<std::size_t>();
    blob.payload.resize(count);
    in.read(reinterpret_cast<char*>(blob.payload.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
        throw IoFailure("truncated payload in " + path);
    }

    if (blob.header.contains("checksum")) {
        const std::string want = blob.header["checksum"].get<std::string>();
        const std::string got = checksum_hex(blob.payload.data(), count);
        if (want != got) throw IoFailure("checksum mismatch in " + path);
    }
    return blob;
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoFailure("cannot create directory " + path + ": " + ec.message());
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot open " + tmp.string() + " for writing");
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw IoFailure("write failed for " + tmp.string());
        }
    }
    rename_into_place(tmp, target);
}

}  // namespace greenmg
