#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace grfu {

using Shape = std::vector<int>;

// Thrown when a loss turns non-finite or a gradient blows up.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);
long shape_numel(const Shape& s);

/// Dense row-major tensor of doubles. Rank 0 is a scalar, rank 1 a vector,
/// rank 2 a matrix. Values are treated as immutable once built; copies share
/// the underlying buffer. Linkage to a recording graph is tracked by the
/// graph itself (keyed on the buffer), not by the tensor.
class Tensor {
 public:
  Tensor();                                    // scalar zero
  explicit Tensor(Shape shape);                // zeros of the given shape
  Tensor(Shape shape, std::vector<double> values);
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> buf);  // shares the buffer

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  long size() const { return static_cast<long>(buf_->size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rows() const;  // rank-1: length, rank-2: first dim
  int cols() const;  // rank-1: 1, rank-2: second dim

  std::span<const double> values() const { return {buf_->data(), buf_->size()}; }
  const double* data() const { return buf_->data(); }
  double at(long i) const { return (*buf_)[static_cast<size_t>(i)]; }
  double at(long r, long c) const { return (*buf_)[static_cast<size_t>(r * cols() + c)]; }
  double item() const;  // value of a single-element tensor

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  /// Swaps in a new value buffer. The old buffer stays alive for any graph
  /// that recorded it, so previously built graphs are unaffected.
  void reset_values(std::vector<double> values);

  const std::shared_ptr<const std::vector<double>>& buffer() const { return buf_; }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> buf_;
};

[[noreturn]] void fail_shape(const std::string& what, const Shape& a, const Shape& b);

namespace kernels {
// y = A(m x k) * B(k x n), row-major, via BLAS. Runs single-threaded so
// results are reproducible run to run.
void matmul(const double* a, const double* b, double* y, int m, int k, int n);
// y += A^T(k x m) * B(k x n)
void matmul_at_b(const double* a, const double* b, double* y, int m, int k, int n);
// y += A(m x k) * B^T(n x k)
void matmul_a_bt(const double* a, const double* b, double* y, int m, int k, int n);
}  // namespace kernels

}  // namespace grfu
