#include "copem/csv.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace copem {

namespace {

// One CSV record, honoring quoted fields; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool saw_any = false;
  int c;
  while ((c = in.get()) != EOF) {
    saw_any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\r') {
      // swallow; \r\n handled by the following \n
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (!saw_any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  std::vector<std::string> fields;
  if (!read_record(in, fields) || fields.empty() || (fields.size() == 1 && fields[0].empty()))
    throw IngestionError("csv: empty input or missing header row");
  const std::vector<std::string> header = fields;
  const int p = static_cast<int>(header.size());

  std::vector<std::vector<std::pair<bool, double>>> rows;
  int line = 1;
  while (read_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank trailing line
    if (static_cast<int>(fields.size()) != p)
      throw IngestionError("csv: row " + std::to_string(line) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(p));
    std::vector<std::pair<bool, double>> row(p);
    for (int j = 0; j < p; ++j) {
      const std::string cell = trim(fields[j]);
      if (cell.empty()) {
        row[j] = {false, 0.0};
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw IngestionError("csv: unparseable cell at row " + std::to_string(line) +
                             ", column " + header[j] + ": '" + cell + "'");
      row[j] = {true, v};
    }
    rows.push_back(std::move(row));
  }

  IncompleteDataset data(static_cast<int>(rows.size()), p);
  for (int i = 0; i < static_cast<int>(rows.size()); ++i)
    for (int j = 0; j < p; ++j)
      if (rows[i][j].first) data.set(i, j, rows[i][j].second);
  return CsvTable{header, std::move(data)};
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("csv: cannot open " + path);
  return read_csv(in);
}

namespace {

void write_header(std::ostream& out, const std::vector<std::string>& header) {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    const bool needs_quotes = header[j].find_first_of(",\"\n") != std::string::npos;
    if (needs_quotes) {
      out << '"';
      for (char c : header[j]) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << header[j];
    }
  }
  out << "\n";
}

void write_value(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void write_csv(std::ostream& out, const CsvTable& table) {
  write_header(out, table.header);
  for (int i = 0; i < table.data.rows(); ++i) {
    for (int j = 0; j < table.data.cols(); ++j) {
      if (j) out << ',';
      if (table.data.is_observed(i, j)) write_value(out, table.data.value(i, j));
    }
    out << "\n";
  }
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("csv: cannot open " + path + " for writing");
  write_csv(out, table);
}

void write_mat2_csv(std::ostream& out, const std::vector<std::string>& header,
                    const std::vector<std::array<double, 2>>& rows) {
  write_header(out, header);
  for (const auto& r : rows) {
    write_value(out, r[0]);
    out << ',';
    write_value(out, r[1]);
    out << "\n";
  }
}

}  // namespace copem
