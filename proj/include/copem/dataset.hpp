#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "copem/errors.hpp"
#include "copem/numkernel.hpp"

namespace copem {

/// N x p real matrix with a missingness mask.  Missing cells hold NaN and are
/// flagged in the mask; the mask is authoritative.
class IncompleteDataset {
 public:
  IncompleteDataset(int n_rows, int n_cols)
      : n_(n_rows),
        p_(n_cols),
        values_(static_cast<std::size_t>(n_rows) * n_cols,
                std::numeric_limits<double>::quiet_NaN()),
        observed_(static_cast<std::size_t>(n_rows) * n_cols, 0) {
    if (n_rows < 0 || n_cols < 1) throw ConfigError("IncompleteDataset: bad shape");
  }

  int rows() const { return n_; }
  int cols() const { return p_; }

  void set(int i, int j, double v) {
    values_[idx(i, j)] = v;
    observed_[idx(i, j)] = 1;
  }
  void set_missing(int i, int j) {
    values_[idx(i, j)] = std::numeric_limits<double>::quiet_NaN();
    observed_[idx(i, j)] = 0;
  }

  bool is_observed(int i, int j) const { return observed_[idx(i, j)] != 0; }
  double value(int i, int j) const { return values_[idx(i, j)]; }

  IndexPartition row_partition(int i) const {
    std::vector<bool> mask(p_);
    for (int j = 0; j < p_; ++j) mask[j] = is_observed(i, j);
    return IndexPartition::from_mask(mask);
  }

  std::vector<double> observed_in_row(int i) const {
    std::vector<double> v;
    for (int j = 0; j < p_; ++j)
      if (is_observed(i, j)) v.push_back(value(i, j));
    return v;
  }

  std::vector<double> observed_in_column(int j) const {
    std::vector<double> v;
    for (int i = 0; i < n_; ++i)
      if (is_observed(i, j)) v.push_back(value(i, j));
    return v;
  }

  int observed_count(int j) const {
    int c = 0;
    for (int i = 0; i < n_; ++i) c += is_observed(i, j) ? 1 : 0;
    return c;
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * p_ + j; }
  int n_, p_;
  std::vector<double> values_;
  std::vector<unsigned char> observed_;
};

}  // namespace copem
