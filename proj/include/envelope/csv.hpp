#pragma once

#include <envelope/error.hpp>

#include <Eigen/Core>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace envelope::csv {

struct ReadOptions
{
    bool header = false;
    char delimiter = ',';
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& field, std::size_t line, std::size_t col)
{
    const std::string t = trim(field);
    double v = 0;
    // from_chars for double is available in libstdc++ >= 11
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw InvalidArgument("line " + std::to_string(line) + ", column " + std::to_string(col) +
                              ": cannot parse '" + t + "' as a number");
    }
    return v;
}

} // namespace detail

/// Parses a numeric CSV stream. Blank lines and lines starting with '#' are
/// skipped; the first remaining line is dropped when opts.header is set.
inline Eigen::MatrixXd read_matrix(std::istream& in, const ReadOptions& opts = {},
                                   std::vector<std::string>* header_out = nullptr)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool header_pending = opts.header;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(t);
        std::string f;
        while (std::getline(ss, f, opts.delimiter)) fields.push_back(f);
        if (!t.empty() && t.back() == opts.delimiter) fields.emplace_back();
        if (header_pending) {
            header_pending = false;
            if (header_out) {
                header_out->clear();
                for (auto& h : fields) header_out->push_back(detail::trim(h));
            }
            continue;
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c)
            row.push_back(detail::parse_double(fields[c], lineno, c + 1));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InvalidArgument("line " + std::to_string(lineno) + " has " +
                                  std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InvalidArgument("CSV input contains no data rows");
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

inline Eigen::MatrixXd read_matrix_file(const std::string& path, const ReadOptions& opts = {},
                                        std::vector<std::string>* header_out = nullptr)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open '" + path + "' for reading");
    try {
        return read_matrix(in, opts, header_out);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

/// Writes `m` with an optional '#' provenance line and a column header.
/// Values use max_digits10 so they reparse to identical doubles.
inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m,
                         const std::vector<std::string>& columns = {},
                         const std::string& comment = {})
{
    if (!comment.empty()) out << "# " << comment << '\n';
    if (!columns.empty()) {
        for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j];
        out << '\n';
    }
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
}

inline void write_matrix_file(const std::string& path, const Eigen::MatrixXd& m,
                              const std::vector<std::string>& columns = {},
                              const std::string& comment = {})
{
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot open '" + path + "' for writing");
    write_matrix(out, m, columns, comment);
}

} // namespace envelope::csv
