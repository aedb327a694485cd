#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iotzsl/mat.hpp"

namespace iotzsl {

// Numeric variable from a MATLAB level-5 file: column-major flat data plus
// its dimension vector.
struct Mat5Array {
  std::vector<int> dims;
  std::vector<double> data;  // column-major, real part only

  // 2-D view as a row-major Mat.
  Mat as_mat() const;
};

// Reads the real numeric variables of a level-5 MAT-file. Handles plain and
// zlib-compressed elements and the common numeric storage classes; cell
// arrays, structs, sparse and complex data are skipped.
std::map<std::string, Mat5Array> read_mat5(const std::string& path);

// Minimal writer used by tests and fixtures: one real double variable.
void write_mat5(const std::string& path, const std::string& var_name, const Mat5Array& arr,
                bool compress = false);

}  // namespace iotzsl
