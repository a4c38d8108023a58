#pragma once

// Matrix and graph I/O. Text matrices are header-free delimited rows
// (comma or whitespace separated, UTF-8); the binary format is a 16-byte
// header (8-byte magic "RSUBMAT1", uint32 rows, uint32 cols, little
// endian) followed by row-major IEEE doubles.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "robsub/types.hpp"

namespace robsub {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr char kBinaryMagic[8] = {'R', 'S', 'U', 'B', 'M', 'A', 'T', '1'};

inline Matrix read_matrix_text(std::istream& is, const std::string& name = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    for (char& ch : line)
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(token, &used);  // accepts nan/inf tokens too
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size())
        throw IoError(name + ": malformed numeric field on line " +
                      std::to_string(rows.size() + 1));
      row.push_back(value);
    }
    if (row.empty()) continue;  // skip blank lines
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(name + ": ragged row on line " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(name + ": no data rows");
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

inline void write_matrix_text(std::ostream& os, const Matrix& m, int precision = 17) {
  os << std::setprecision(precision);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) os << ',';
      os << m(i, j);
    }
    os << '\n';
  }
}

inline Matrix read_matrix_binary(std::istream& is, const std::string& name = "<stream>") {
  char magic[8];
  std::uint32_t dims[2];
  if (!is.read(magic, sizeof magic) ||
      !is.read(reinterpret_cast<char*>(dims), sizeof dims))
    throw IoError(name + ": truncated binary header");
  if (std::memcmp(magic, kBinaryMagic, sizeof magic) != 0)
    throw IoError(name + ": bad binary magic");
  Matrix out(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) {
      double value;
      if (!is.read(reinterpret_cast<char*>(&value), sizeof value))
        throw IoError(name + ": truncated binary payload");
      out(i, j) = value;
    }
  return out;
}

inline void write_matrix_binary(std::ostream& os, const Matrix& m) {
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(m.rows()),
                                 static_cast<std::uint32_t>(m.cols())};
  os.write(kBinaryMagic, sizeof kBinaryMagic);
  os.write(reinterpret_cast<const char*>(dims), sizeof dims);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double value = m(i, j);
      os.write(reinterpret_cast<const char*>(&value), sizeof value);
    }
}

inline Matrix load_matrix(const std::string& path, bool binary = false) {
  std::ifstream file(path, binary ? std::ios::binary : std::ios::in);
  if (!file) throw IoError(path + ": cannot open for reading");
  return binary ? read_matrix_binary(file, path) : read_matrix_text(file, path);
}

/// Load a matrix, sniffing the binary magic to pick the format.
inline Matrix load_matrix_any(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError(path + ": cannot open for reading");
  char magic[8] = {};
  probe.read(magic, sizeof magic);
  const bool binary =
      probe.gcount() == 8 && std::memcmp(magic, kBinaryMagic, sizeof magic) == 0;
  probe.close();
  return load_matrix(path, binary);
}

inline void save_matrix(const std::string& path, const Matrix& m, bool binary = false,
                        int precision = 17) {
  std::ofstream file(path, binary ? std::ios::binary : std::ios::out);
  if (!file) throw IoError(path + ": cannot open for writing");
  if (binary)
    write_matrix_binary(file, m);
  else
    write_matrix_text(file, m, precision);
  if (!file) throw IoError(path + ": write failed");
}

/// Edge-pair text file (two whitespace-separated nonnegative node ids per
/// line) to a dense symmetric 0/1 adjacency matrix. Self-loops are
/// ignored. Node count is max id + 1 unless a larger count is forced.
inline Matrix read_edge_list(std::istream& is, Index n_nodes = 0,
                             const std::string& name = "<stream>") {
  std::vector<std::pair<long, long>> edges;
  long max_id = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream fields(line);
    long a, b;
    if (!(fields >> a)) continue;  // blank line
    if (!(fields >> b))
      throw IoError(name + ": expected two node ids on line " + std::to_string(line_no));
    if (a < 0 || b < 0)
      throw IoError(name + ": negative node id on line " + std::to_string(line_no));
    max_id = std::max({max_id, a, b});
    edges.emplace_back(a, b);
  }
  if (edges.empty()) throw IoError(name + ": no edges");
  const Index n = std::max<Index>(n_nodes, static_cast<Index>(max_id + 1));
  Matrix adjacency = Matrix::Zero(n, n);
  for (const auto& [a, b] : edges) {
    if (a == b) continue;
    adjacency(a, b) = 1.0;
    adjacency(b, a) = 1.0;
  }
  return adjacency;
}

inline Matrix load_edge_list(const std::string& path, Index n_nodes = 0) {
  std::ifstream file(path);
  if (!file) throw IoError(path + ": cannot open for reading");
  return read_edge_list(file, n_nodes, path);
}

}  // namespace robsub
