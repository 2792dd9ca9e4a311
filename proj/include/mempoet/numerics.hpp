#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mempoet {

// Probability floor used by cross_entropy to guard log(0).
inline constexpr double kProbFloor = 1e-12;
// Vectors with L2 norm below this are treated as carrying no direction.
inline constexpr double kNormFloor = 1e-12;

// Dense row-major matrix of doubles. Row vectors are 1 x n matrices and
// compose with weights stored as (in x out), i.e. y = x * W.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);

  static Matrix row(std::vector<double> v);

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row_ptr(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row_ptr(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  int size() const { return rows * cols; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  void fill(double v);
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double k);
Matrix sigmoid(const Matrix& a);
Matrix tanh_map(const Matrix& a);
Matrix one_minus(const Matrix& a);
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double dot(const Matrix& a, const Matrix& b);
double norm2(const Matrix& a);

// Stable softmax over a 1 x n row; entries in (0,1], sum 1.
Matrix softmax(const Matrix& v);

// -ln p[target], with p[target] floored at kProbFloor.
double cross_entropy(const Matrix& p, int target);

// Cosine similarity in [-1,1]; 0 when either norm is below kNormFloor.
double cosine(const Matrix& a, const Matrix& b);

// GRU weights, row-vector convention:
//   z = sigmoid(x Wz + h Uz + bz)
//   r = sigmoid(x Wr + h Ur + br)
//   hc = tanh(x Wh + (r . h) Uh + bh)
//   h' = (1 - z) . h + z . hc
struct GruWeights {
  const Matrix* Wz;
  const Matrix* Uz;
  const Matrix* bz;
  const Matrix* Wr;
  const Matrix* Ur;
  const Matrix* br;
  const Matrix* Wh;
  const Matrix* Uh;
  const Matrix* bh;
};

Matrix gru_cell(const Matrix& x, const Matrix& h_prev, const GruWeights& w);

// Named parameter tensors with same-shaped gradient and AdaDelta accumulator
// slots. Iteration order is the sorted name order everywhere, which makes
// updates bit-deterministic.
class ParamStore {
 public:
  Matrix& add(const std::string& name, Matrix init);
  bool has(const std::string& name) const;
  Matrix& param(const std::string& name);
  const Matrix& param(const std::string& name) const;
  Matrix& grad(const std::string& name);
  const Matrix& grad(const std::string& name) const;
  std::vector<std::string> names() const;
  size_t value_count() const;

  void zero_grads();

  // In-place AdaDelta update:
  //   Eg2  <- rho Eg2 + (1-rho) g^2
  //   d    <- -sqrt(Ed2 + eps) / sqrt(Eg2 + eps) * g
  //   Ed2  <- rho Ed2 + (1-rho) d^2
  // Gradients are left untouched; the caller clears them.
  void adadelta_step(double rho, double eps);

 private:
  struct Slot {
    Matrix value;
    Matrix grad;
    Matrix grad_sq_avg;
    Matrix update_sq_avg;
  };
  std::map<std::string, Slot> slots_;

  Slot& slot(const std::string& name);
  const Slot& slot(const std::string& name) const;
};

// FNV-1a over raw bytes; used for checkpoint fingerprints and trace digests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);
uint64_t digest(const Matrix& m);

}  // namespace mempoet
