#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <locale>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "env.hpp"
#include "stats.hpp"

namespace cookiewalk {

/// Locale-independent decimal text with 17 significant digits (round-trips doubles).
inline std::string format_double(double v)
{
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(17);
    os << v;
    return os.str();
}

/// Writes through a temporary file in the same directory, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os << content;
        os.flush();
        if (!os)
            throw std::runtime_error("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot rename onto " + path.string() + ": " + ec.message());
    }
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

/// Accepts inline JSON or a path to a JSON file.
inline EnvironmentSpec load_spec(const std::string& text_or_path)
{
    std::string text = text_or_path;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
        if (!std::filesystem::is_regular_file(text_or_path))
            throw ValidationError("env", "'" + text_or_path + "' is neither inline JSON nor a readable file");
        text = read_file(text_or_path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("env", std::string("invalid JSON: ") + e.what());
    }
    try {
        return spec_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("env", e.what());
    }
}

inline constexpr const char* kBatchCsvHeader = "estimator,spec_hash,seed,value,lo,hi,censored\n";

inline std::string batch_csv_row(const std::string& estimator, const std::string& spec_hash, std::uint64_t seed,
                                 const Estimate& e)
{
    return estimator + ',' + spec_hash + ',' + std::to_string(seed) + ',' + format_double(e.value) + ',' +
           format_double(e.lo) + ',' + format_double(e.hi) + ',' + format_double(e.censored_fraction) + '\n';
}

/// Batch CSV text: existing rows of `previous` (if it has the batch header) followed by `rows`.
inline std::string batch_csv_append(const std::string& previous, const std::string& rows)
{
    if (previous.rfind(kBatchCsvHeader, 0) == 0)
        return previous + rows;
    return std::string(kBatchCsvHeader) + rows;
}

} // namespace cookiewalk
