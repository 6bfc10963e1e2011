#pragma once

// Reader for Matrix Market coordinate files (real or integer; general or symmetric).

#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "pdaexp/error.hpp"
#include "pdaexp/linalg.hpp"

namespace pdaexp {

inline SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "matrix market: empty input");
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  for (auto* s : {&object, &format, &field, &symmetry})
    for (auto& c : *s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
    throw Error(ErrorCode::InvalidConfig, "matrix market: only 'matrix coordinate' files are supported");
  if (field != "real" && field != "integer" && field != "double")
    throw Error(ErrorCode::InvalidConfig, "matrix market: unsupported field '" + field + "'");
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw Error(ErrorCode::InvalidConfig, "matrix market: unsupported symmetry '" + symmetry + "'");

  Index rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream sizes(line);
    sizes >> rows >> cols >> nnz;
    break;
  }
  if (rows < 0 || cols < 0 || nnz < 0) throw Error(ErrorCode::Io, "matrix market: missing size line");

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(symmetric ? 2 * nnz : nnz));
  Index read = 0;
  while (read < nnz && std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream entry(line);
    Index i = 0, j = 0;
    double v = 0.0;
    if (!(entry >> i >> j >> v)) throw Error(ErrorCode::Io, "matrix market: malformed entry '" + line + "'");
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw Error(ErrorCode::Io, "matrix market: index out of range in '" + line + "'");
    entries.emplace_back(i - 1, j - 1, v);
    if (symmetric && i != j) entries.emplace_back(j - 1, i - 1, v);
    ++read;
  }
  if (read != nnz) throw Error(ErrorCode::Io, "matrix market: fewer entries than declared");
  return sparse_from_triplets(rows, cols, entries);
}

inline SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_matrix_market(in);
}

}  // namespace pdaexp
