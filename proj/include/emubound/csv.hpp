// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace emubound {

// Round-trip-safe decimal formatting (17 significant digits).
std::string format_double(double v);
std::string format_int(long long v);

double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
    int require_column(const std::string& name) const;
};

// Minimal comma-separated parser; the artifact schemas never quote or embed commas.
CsvTable read_csv(const std::string& path);

std::string join_csv_row(const std::vector<std::string>& fields);

}  // namespace emubound
