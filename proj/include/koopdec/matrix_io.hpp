#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopdec/numerics.hpp"

namespace koopdec::io {

using json = nlohmann::json;

/// Fixed 12-significant-digit rendering shared by every file writer, so
/// identical runs produce byte-identical files.
inline std::string format_real(double v) {
    if (v == 0.0) return "0";  // folds -0
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

/// Rounds through the same 12-digit text form used on disk.
inline double round12(double v) { return std::stod(format_real(v)); }

inline std::string matrix_to_csv(const Matrix& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_real(m(i, j));
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_real(const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        detail::fail("parse_error", "not a number: '" + text + "'");
    }
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
    detail::require(used == text.size(), "parse_error", "trailing characters in '" + text + "'");
    detail::require(std::isfinite(v), "non_finite", "non-finite value '" + text + "'");
    return v;
}

inline Matrix matrix_from_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split_csv_line(line)) row.push_back(parse_real(cell));
        if (!rows.empty()) {
            detail::require(row.size() == rows.front().size(), "parse_error",
                            "ragged CSV matrix");
        }
        rows.push_back(std::move(row));
    }
    const auto r = static_cast<Eigen::Index>(rows.size());
    const auto c = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size());
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j];
    return m;
}

/// {"rows": r, "cols": c, "data": [row-major entries]}; entries are rounded to
/// 12 significant digits.
inline json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(round12(m(i, j)));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

/// Full-precision variant for values that must survive a round trip exactly
/// (trained weights, fitted operators).
inline json matrix_to_json_exact(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const json& j) {
    detail::require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"),
                    "parse_error", "matrix JSON needs rows, cols and data");
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    detail::require(r >= 0 && c >= 0 && data.is_array() &&
                        data.size() == static_cast<std::size_t>(r * c),
                    "parse_error", "matrix JSON data length does not equal rows*cols");
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j2 = 0; j2 < c; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * c + j2)].get<double>();
    numerics::require_finite(m, "matrix JSON");
    return m;
}

inline json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Vector vector_from_json(const json& j) {
    detail::require(j.is_array(), "parse_error", "expected a JSON array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    numerics::require_finite(v, "vector JSON");
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    detail::require(static_cast<bool>(in), "io_error", "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    detail::require(static_cast<bool>(out), "io_error", "cannot write " + path);
    out << content;
}

inline json read_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        detail::fail("parse_error", path + ": " + e.what());
    }
}

}  // namespace koopdec::io
