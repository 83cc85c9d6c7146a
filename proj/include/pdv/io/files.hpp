#pragma once

// Small file helpers shared by the loaders and writers.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pdv/error.hpp"

namespace pdv::io {

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
        out.emplace_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

// Rows of a CSV file with a mandatory header; `line` is 1-based in the file.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw InputError(source + ":" + std::to_string(line) + ": " + msg);
    }

    double number(const CsvRow& r, std::size_t col) const {
        const std::string& s = r.cells.at(col);
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            fail(r.line, "column '" + header[col] + "': '" + s + "' is not a number");
        }
        return v;
    }
};

// Parses CSV text and checks the header against `expected` exactly.
inline CsvTable parse_csv(const std::string& text, const std::vector<std::string>& expected,
                          const std::string& source) {
    CsvTable t;
    t.source = source;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++no;
        if (no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (!have_header) {
            if (cells != expected) {
                std::string want;
                for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
                t.fail(no, "header must be '" + want + "'");
            }
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != expected.size()) {
            t.fail(no, "expected " + std::to_string(expected.size()) + " fields, found " + std::to_string(cells.size()));
        }
        t.rows.push_back({no, std::move(cells)});
    }
    if (!have_header) throw InputError(source + ": missing header row");
    return t;
}

inline std::string join(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out;
}

// Append-only byte buffer for the binary containers.
struct ByteWriter {
    std::string bytes;
    template <class T>
    void put(const T& v) {
        bytes.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_raw(const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); }
};

struct ByteReader {
    std::string_view bytes;
    std::size_t pos = 0;
    std::string what;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw InputError(what + ": truncated file");
    }
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    void get_raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace pdv::io
