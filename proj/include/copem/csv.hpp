#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "copem/dataset.hpp"

namespace copem {

/// Dataset plus its column names.  Empty CSV fields are missing cells.
struct CsvTable {
  std::vector<std::string> header;
  IncompleteDataset data;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Values at 17 significant digits so write(read(f)) preserves them exactly.
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);

void write_mat2_csv(std::ostream& out, const std::vector<std::string>& header,
                    const std::vector<std::array<double, 2>>& rows);

}  // namespace copem
