#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qiv/design.hpp"

namespace qiv::io {

struct ColumnRoles {
    std::string outcome = "y";
    std::string treatment = "a";
    std::vector<std::string> qivs;
    std::vector<std::string> covariates;  // empty: every remaining column

    // Throws ErrorKind::Config when a column appears in two roles.
    void validate() const;
};

// Header is mandatory, delimiter is a comma. Any malformed cell aborts with
// its row and column.
Dataset load_csv(const std::string& path, const ColumnRoles& roles);
Dataset parse_csv(const std::string& text, const ColumnRoles& roles, const std::string& source = "<memory>");

// Writes y, a, the QIV columns, then the covariates. Values use the shortest
// representation that reads back to the same double.
void write_csv(const std::string& path, const Dataset& d);
std::string to_csv(const Dataset& d);

struct Fingerprint {
    std::size_t rows = 0;
    std::size_t columns = 0;
    std::uint64_t hash = 0;  // FNV-1a over column names and values

    std::string hex() const;
};

Fingerprint fingerprint(const Dataset& d);

}  // namespace qiv::io
