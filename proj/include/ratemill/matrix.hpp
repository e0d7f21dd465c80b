#pragma once

// Numeric feature matrix shared by the feature pipeline, the booster and the
// explainer. Row-major doubles with NaN as the missing marker. Columns carry
// a group id so multi-column features (the sector embedding) can be selected
// or reported as a unit.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ratemill {

struct FeatureMatrix {
  std::vector<std::string> column_names;
  std::vector<std::string> groups;  // parallel to column_names
  std::vector<double> values;       // row-major, n_rows x n_cols
  std::vector<int> target;          // 0/1, length n_rows (may be empty for score-only data)

  std::size_t n_rows = 0;
  std::size_t n_cols = 0;

  double at(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * n_cols + c]; }

  const double* row(std::size_t r) const { return values.data() + r * n_cols; }

  int col_index(const std::string& name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i)
      if (column_names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (column_names.size() != n_cols || groups.size() != n_cols)
      throw std::runtime_error("feature matrix: column metadata size mismatch");
    if (values.size() != n_rows * n_cols)
      throw std::runtime_error("feature matrix: value buffer size mismatch");
    if (!target.empty() && target.size() != n_rows)
      throw std::runtime_error("feature matrix: target length mismatch");
    for (std::size_t i = 0; i < column_names.size(); ++i)
      for (std::size_t j = i + 1; j < column_names.size(); ++j)
        if (column_names[i] == column_names[j])
          throw std::runtime_error("feature matrix: duplicate column " + column_names[i]);
  }
};

inline FeatureMatrix make_matrix(std::vector<std::string> names,
                                 std::size_t n_rows) {
  FeatureMatrix m;
  m.n_cols = names.size();
  m.n_rows = n_rows;
  m.column_names = std::move(names);
  m.groups = m.column_names;  // default: each column its own group
  m.values.assign(m.n_rows * m.n_cols, std::numeric_limits<double>::quiet_NaN());
  return m;
}

// Column subset in the given order; group labels follow their columns.
inline FeatureMatrix select_columns(const FeatureMatrix& m,
                                    const std::vector<std::string>& keep) {
  FeatureMatrix out;
  out.n_rows = m.n_rows;
  out.n_cols = keep.size();
  out.column_names = keep;
  out.target = m.target;
  out.groups.reserve(keep.size());
  std::vector<int> idx;
  idx.reserve(keep.size());
  for (const auto& name : keep) {
    const int c = m.col_index(name);
    if (c < 0) throw std::runtime_error("select_columns: unknown column " + name);
    idx.push_back(c);
    out.groups.push_back(m.groups[c]);
  }
  out.values.resize(out.n_rows * out.n_cols);
  for (std::size_t r = 0; r < m.n_rows; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j)
      out.values[r * out.n_cols + j] = m.at(r, static_cast<std::size_t>(idx[j]));
  return out;
}

}  // namespace ratemill
