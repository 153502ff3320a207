#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "taskcast/error.hpp"

namespace taskcast {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file.
inline void atomic_write(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out)
            throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot rename into " + path.string());
    }
}

// Calls `fn(object, line_number)` for every non-blank line of a JSONL file.
// Line numbers are 1-based. A UTF-8 byte-order mark is rejected.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn)
{
    const std::string text = read_file(path);
    if (text.starts_with("\xEF\xBB\xBF"))
        throw ParseError(path.string(), 1, "byte-order mark not allowed");

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos)
            end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos)
            continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string(), line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object())
            throw ParseError(path.string(), line_no, "expected a JSON object");
        fn(obj, line_no);
    }
}

inline std::string to_jsonl(const std::vector<json>& rows)
{
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out += '\n';
    }
    return out;
}

namespace detail {

inline const json& require_field(const json& obj, const char* key, const std::string& where)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
        throw SchemaError(where + ": missing field \"" + key + "\"");
    return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& where)
{
    const auto& v = require_field(obj, key, where);
    if (!v.is_string())
        throw SchemaError(where + ": field \"" + key + "\" must be a string");
    return v.get<std::string>();
}

inline double require_number(const json& obj, const char* key, const std::string& where)
{
    const auto& v = require_field(obj, key, where);
    if (!v.is_number())
        throw SchemaError(where + ": field \"" + key + "\" must be a number");
    return v.get<double>();
}

inline std::string where(const std::filesystem::path& path, std::size_t line)
{
    return path.string() + ":" + std::to_string(line);
}

} // namespace detail

} // namespace taskcast
