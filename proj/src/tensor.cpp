#include "grfu/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <sstream>

extern "C" void openblas_set_num_threads(int);

namespace grfu {

namespace {
// BLAS must not fan out to its own thread pool: thread splits would change
// summation order with machine load and break bitwise reproducibility.
const bool blas_single_thread = [] {
  openblas_set_num_threads(1);
  return true;
}();
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape)
    : Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int d : shape_)
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + shape_str(shape_));
  if (shape_numel(shape_) != static_cast<long>(values.size()))
    throw std::invalid_argument("tensor value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  buf_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor::Tensor(Shape shape, std::shared_ptr<const std::vector<double>> buf)
    : shape_(std::move(shape)), buf_(std::move(buf)) {
  if (!buf_ || shape_numel(shape_) != static_cast<long>(buf_->size()))
    throw std::invalid_argument("tensor buffer does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, {v}); }
Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
  auto n = static_cast<size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

int Tensor::rows() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[0];
  return 1;
}

int Tensor::cols() const { return rank() == 2 ? shape_[1] : 1; }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
  return (*buf_)[0];
}

bool Tensor::all_finite() const {
  for (double v : *buf_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::reset_values(std::vector<double> values) {
  if (static_cast<long>(values.size()) != size())
    throw std::invalid_argument("reset_values size mismatch for shape " + shape_str(shape_));
  buf_ = std::make_shared<const std::vector<double>>(std::move(values));
}

void fail_shape(const std::string& what, const Shape& a, const Shape& b) {
  throw std::invalid_argument(what + ": " + shape_str(a) + " vs " + shape_str(b));
}

namespace kernels {

void matmul(const double* a, const double* b, double* y, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a, k, b, n, 0.0, y, n);
}

void matmul_at_b(const double* a, const double* b, double* y, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0, a, m, b, n, 1.0, y, n);
}

void matmul_a_bt(const double* a, const double* b, double* y, int m, int k, int n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0, a, k, b, k, 1.0, y, n);
}

}  // namespace kernels

}  // namespace grfu
