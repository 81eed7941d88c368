#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "brandrank/errors.hpp"

namespace brandrank {

// Minimal comma-separated reader for the pipeline's file formats: UTF-8,
// '.' decimal point, no quoting. Errors carry 1-based line numbers.
class CsvReader {
public:
    CsvReader(const std::string& path, const std::string& expected_header)
        : path_(path), in_(path) {
        if (!in_) throw data_error(path + ": cannot open");
        std::string header;
        if (!std::getline(in_, header)) throw data_error(path + ": empty file");
        if (!header.empty() && header.back() == '\r') header.pop_back();
        if (header != expected_header)
            throw data_error(path + ": expected header '" + expected_header + "', got '" +
                             header + "'");
        line_no_ = 1;
    }

    // Fills `fields` with the next row's columns; false at end of file.
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields.clear();
            size_t start = 0;
            for (;;) {
                size_t comma = line.find(',', start);
                if (comma == std::string::npos) {
                    fields.push_back(line.substr(start));
                    break;
                }
                fields.push_back(line.substr(start, comma - start));
                start = comma + 1;
            }
            return true;
        }
        return false;
    }

    size_t line_no() const { return line_no_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw data_error(path_ + ":" + std::to_string(line_no_) + ": " + msg);
    }

    double parse_double(const std::string& s) const {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail("bad number '" + s + "'");
        return v;
    }

    int64_t parse_int(const std::string& s) const {
        int64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail("bad integer '" + s + "'");
        return v;
    }

private:
    std::string path_;
    std::ifstream in_;
    size_t line_no_ = 0;
};

// Full-precision decimal formatting so that doubles survive a write/read
// round trip bit-exactly.
inline std::string format_double(double v) {
    char buf[32];
    int n = snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<size_t>(n));
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : path_(path), out_(path) {
        if (!out_) throw data_error(path + ": cannot open for writing");
    }

    void row(const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void line(const std::string& s) { out_ << s << '\n'; }

    void close() {
        out_.close();
        if (!out_) throw data_error(path_ + ": write failed");
    }

private:
    std::string path_;
    std::ofstream out_;
};

} // namespace brandrank
