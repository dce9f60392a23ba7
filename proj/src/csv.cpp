#include "abcsmc/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcsmc/error.hpp"

namespace abcsmc {

static std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open " + path);
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.substr(1));
            continue;
        }
        auto cells = split_commas(line);
        if (!have_header) {
            t.columns = cells;
            have_header = true;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            try {
                row.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw Error("io", "non-numeric cell '" + c + "' in " + path);
            }
        }
        if (row.size() != t.columns.size())
            throw Error("io", "ragged row in " + path);
        rows.push_back(std::move(row));
    }
    if (!have_header) throw Error("io", "missing header row in " + path);
    t.values = Matrix(rows.size(), t.columns.size());
    for (std::size_t i = 0; i < rows.size(); ++i) t.values.set_row(i, rows[i]);
    return t;
}

static std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const CsvTable& t) {
    std::ostringstream out;
    for (const auto& c : t.comments) out << '#' << c << '\n';
    for (std::size_t j = 0; j < t.columns.size(); ++j)
        out << t.columns[j] << (j + 1 < t.columns.size() ? "," : "");
    out << '\n';
    for (std::size_t i = 0; i < t.values.rows; ++i) {
        for (std::size_t j = 0; j < t.values.cols; ++j)
            out << format_double(t.values(i, j))
                << (j + 1 < t.values.cols ? "," : "");
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("io", "cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace abcsmc
