#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace sasot {

// Dense row-major double matrix. Everything in this library is desk scale,
// so there is no view machinery and no expression templates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              fill) {
    assert(rows >= 0 && cols >= 0);
  }

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(static_cast<int>(rows.size()),
             rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
      assert(static_cast<int>(row.size()) == m.cols_);
      int c = 0;
      for (double v : row) m(r, c++) = v;
      ++r;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(int r, int c) { return data_[index(r, c)]; }
  double operator()(int r, int c) const { return data_[index(r, c)]; }

  std::span<double> row(int r) {
    return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(int r) const {
    return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           data_ == other.data_;
  }

 private:
  std::size_t index(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return static_cast<std::size_t>(r) * cols_ + c;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace sasot
