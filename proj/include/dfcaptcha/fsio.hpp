#pragma once

// Small file helpers. Writes are atomic (temp file in the target directory,
// then rename) so interrupted runs never leave torn outputs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dfcaptcha/errors.hpp"
#include "dfcaptcha/rng.hpp"

namespace dfcaptcha {

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoError, "read failed for " + path.string());
    return ss.str();
}

inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
    fs::create_directories(dir, ec);

    const auto tag = detail::mix64(detail::fnv1a64(path.string()) ^
                                   static_cast<std::uint64_t>(
                                       std::chrono::steady_clock::now().time_since_epoch().count()));
    const fs::path tmp = dir / (path.filename().string() + ".tmp-" + std::to_string(tag & 0xFFFFFF));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "rename failed for " + path.string());
    }
}

} // namespace dfcaptcha
