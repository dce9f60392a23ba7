#pragma once

#include <string>
#include <vector>

#include "abcsmc/linalg.hpp"

namespace abcsmc {

// Numeric CSV with a header row. Lines starting with '#' are comments and are
// preserved on write via the `comments` argument.
struct CsvTable {
    std::vector<std::string> comments;  // without the leading '#'
    std::vector<std::string> columns;
    Matrix values;
};

CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const CsvTable& table);

// Atomic write: writes to <path>.tmp then renames.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace abcsmc
