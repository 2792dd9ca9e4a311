#include "mempoet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mempoet/errors.hpp"

namespace mempoet {

Matrix::Matrix(int r, int c, double fill_value)
    : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill_value) {
  if (r < 0 || c < 0) throw UsageError("Matrix: negative dimensions");
}

Matrix Matrix::row(std::vector<double> v) {
  Matrix m;
  m.rows = 1;
  m.cols = static_cast<int>(v.size());
  m.a = std::move(v);
  return m;
}

bool Matrix::all_finite() const {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Matrix::fill(double v) { std::fill(a.begin(), a.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw UsageError("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row_ptr(i);
    double* cr = c.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw UsageError("add: shape mismatch");
  Matrix c = a;
  for (int i = 0; i < c.size(); ++i) c.a[i] += b.a[i];
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw UsageError("hadamard: shape mismatch");
  Matrix c = a;
  for (int i = 0; i < c.size(); ++i) c.a[i] *= b.a[i];
  return c;
}

Matrix scale(const Matrix& a, double k) {
  Matrix c = a;
  for (double& x : c.a) x *= k;
  return c;
}

Matrix sigmoid(const Matrix& a) {
  Matrix c = a;
  for (double& x : c.a) x = 1.0 / (1.0 + std::exp(-x));
  return c;
}

Matrix tanh_map(const Matrix& a) {
  Matrix c = a;
  for (double& x : c.a) x = std::tanh(x);
  return c;
}

Matrix one_minus(const Matrix& a) {
  Matrix c = a;
  for (double& x : c.a) x = 1.0 - x;
  return c;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw UsageError("concat_cols: row count mismatch");
  Matrix c(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    std::copy(a.row_ptr(i), a.row_ptr(i) + a.cols, c.row_ptr(i));
    std::copy(b.row_ptr(i), b.row_ptr(i) + b.cols, c.row_ptr(i) + a.cols);
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix c(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) c(j, i) = a(i, j);
  }
  return c;
}

double dot(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw UsageError("dot: length mismatch");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a.a[i] * b.a[i];
  return s;
}

double norm2(const Matrix& a) { return std::sqrt(dot(a, a)); }

Matrix softmax(const Matrix& v) {
  if (v.size() == 0) throw UsageError("softmax: empty input");
  Matrix out = v;
  double mx = out.a[0];
  for (double x : out.a) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : out.a) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : out.a) x /= sum;
  return out;
}

double cross_entropy(const Matrix& p, int target) {
  if (target < 0 || target >= p.size())
    throw UsageError("cross_entropy: target out of range");
  return -std::log(std::max(p.a[static_cast<size_t>(target)], kProbFloor));
}

double cosine(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw UsageError("cosine: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

Matrix gru_cell(const Matrix& x, const Matrix& h_prev, const GruWeights& w) {
  const Matrix z = sigmoid(add(add(matmul(x, *w.Wz), matmul(h_prev, *w.Uz)), *w.bz));
  const Matrix r = sigmoid(add(add(matmul(x, *w.Wr), matmul(h_prev, *w.Ur)), *w.br));
  const Matrix hc =
      tanh_map(add(add(matmul(x, *w.Wh), matmul(hadamard(r, h_prev), *w.Uh)), *w.bh));
  return add(hadamard(one_minus(z), h_prev), hadamard(z, hc));
}

Matrix& ParamStore::add(const std::string& name, Matrix init) {
  if (slots_.count(name)) throw UsageError("ParamStore: duplicate name " + name);
  Slot s;
  s.grad = Matrix(init.rows, init.cols);
  s.grad_sq_avg = Matrix(init.rows, init.cols);
  s.update_sq_avg = Matrix(init.rows, init.cols);
  s.value = std::move(init);
  return slots_.emplace(name, std::move(s)).first->second.value;
}

bool ParamStore::has(const std::string& name) const { return slots_.count(name) != 0; }

ParamStore::Slot& ParamStore::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw UsageError("ParamStore: unknown name " + name);
  return it->second;
}

const ParamStore::Slot& ParamStore::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw UsageError("ParamStore: unknown name " + name);
  return it->second;
}

Matrix& ParamStore::param(const std::string& name) { return slot(name).value; }
const Matrix& ParamStore::param(const std::string& name) const { return slot(name).value; }
Matrix& ParamStore::grad(const std::string& name) { return slot(name).grad; }
const Matrix& ParamStore::grad(const std::string& name) const { return slot(name).grad; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [name, _] : slots_) out.push_back(name);
  return out;
}

size_t ParamStore::value_count() const {
  size_t n = 0;
  for (const auto& [_, s] : slots_) n += static_cast<size_t>(s.value.size());
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [_, s] : slots_) s.grad.fill(0.0);
}

void ParamStore::adadelta_step(double rho, double eps) {
  if (!(rho > 0.0 && rho < 1.0)) throw UsageError("adadelta_step: rho outside (0,1)");
  if (!(eps > 0.0)) throw UsageError("adadelta_step: eps must be positive");
  for (auto& [_, s] : slots_) {
    for (int i = 0; i < s.value.size(); ++i) {
      const double g = s.grad.a[i];
      s.grad_sq_avg.a[i] = rho * s.grad_sq_avg.a[i] + (1.0 - rho) * g * g;
      const double d =
          -std::sqrt(s.update_sq_avg.a[i] + eps) / std::sqrt(s.grad_sq_avg.a[i] + eps) * g;
      s.update_sq_avg.a[i] = rho * s.update_sq_avg.a[i] + (1.0 - rho) * d * d;
      s.value.a[i] += d;
    }
  }
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t digest(const Matrix& m) {
  uint64_t h = fnv1a64(&m.rows, sizeof(m.rows));
  h = fnv1a64(&m.cols, sizeof(m.cols), h);
  return fnv1a64(m.a.data(), m.a.size() * sizeof(double), h);
}

}  // namespace mempoet
