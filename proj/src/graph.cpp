#include "mempoet/graph.hpp"

#include <cmath>

#include "mempoet/errors.hpp"

namespace mempoet {

int Graph::push(Matrix val, bool track) {
  Node n;
  if (track) n.grad = Matrix(val.rows, val.cols);
  n.val = std::move(val);
  n.track = track;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Graph::constant(Matrix m) { return {push(std::move(m), false)}; }

Var Graph::leaf(Matrix m) { return {push(std::move(m), true)}; }

Var Graph::param(ParamStore& ps, const std::string& name) {
  Matrix& value = ps.param(name);
  auto it = param_cache_.find(&value);
  if (it != param_cache_.end()) return {it->second};
  int id = push(value, true);
  node(id).external_grad = &ps.grad(name);
  param_cache_.emplace(&value, id);
  return {id};
}

const Matrix& Graph::value(Var v) const { return node(v.id).val; }

double Graph::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw UsageError("Graph::scalar: node is not 1x1");
  return m.a[0];
}

const Matrix& Graph::grad_of(Var v) const { return node(v.id).grad; }

Var Graph::matmul(Var a, Var b) {
  int id = push(mempoet::matmul(value(a), value(b)), tracked(a) || tracked(b));
  node(id).back = [a, b](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    const Matrix& av = g.node(a.id).val;
    const Matrix& bv = g.node(b.id).val;
    if (g.tracked(a)) {
      Matrix& da = g.node(a.id).grad;
      for (int i = 0; i < av.rows; ++i)
        for (int k = 0; k < av.cols; ++k) {
          double s = 0.0;
          for (int j = 0; j < bv.cols; ++j) s += go(i, j) * bv(k, j);
          da(i, k) += s;
        }
    }
    if (g.tracked(b)) {
      Matrix& db = g.node(b.id).grad;
      for (int k = 0; k < bv.rows; ++k)
        for (int j = 0; j < bv.cols; ++j) {
          double s = 0.0;
          for (int i = 0; i < av.rows; ++i) s += av(i, k) * go(i, j);
          db(k, j) += s;
        }
    }
  };
  return {id};
}

Var Graph::add(Var a, Var b) {
  int id = push(mempoet::add(value(a), value(b)), tracked(a) || tracked(b));
  node(id).back = [a, b](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    if (g.tracked(a)) {
      Matrix& da = g.node(a.id).grad;
      for (int i = 0; i < go.size(); ++i) da.a[i] += go.a[i];
    }
    if (g.tracked(b)) {
      Matrix& db = g.node(b.id).grad;
      for (int i = 0; i < go.size(); ++i) db.a[i] += go.a[i];
    }
  };
  return {id};
}

Var Graph::hadamard(Var a, Var b) {
  int id = push(mempoet::hadamard(value(a), value(b)), tracked(a) || tracked(b));
  node(id).back = [a, b](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    const Matrix& av = g.node(a.id).val;
    const Matrix& bv = g.node(b.id).val;
    if (g.tracked(a)) {
      Matrix& da = g.node(a.id).grad;
      for (int i = 0; i < go.size(); ++i) da.a[i] += go.a[i] * bv.a[i];
    }
    if (g.tracked(b)) {
      Matrix& db = g.node(b.id).grad;
      for (int i = 0; i < go.size(); ++i) db.a[i] += go.a[i] * av.a[i];
    }
  };
  return {id};
}

Var Graph::one_minus(Var a) {
  int id = push(mempoet::one_minus(value(a)), tracked(a));
  node(id).back = [a](Graph& g, int self) {
    if (!g.tracked(a)) return;
    const Matrix& go = g.node(self).grad;
    Matrix& da = g.node(a.id).grad;
    for (int i = 0; i < go.size(); ++i) da.a[i] -= go.a[i];
  };
  return {id};
}

Var Graph::sigmoid(Var a) {
  int id = push(mempoet::sigmoid(value(a)), tracked(a));
  node(id).back = [a](Graph& g, int self) {
    if (!g.tracked(a)) return;
    const Matrix& go = g.node(self).grad;
    const Matrix& y = g.node(self).val;
    Matrix& da = g.node(a.id).grad;
    for (int i = 0; i < go.size(); ++i) da.a[i] += go.a[i] * y.a[i] * (1.0 - y.a[i]);
  };
  return {id};
}

Var Graph::tanh_fn(Var a) {
  int id = push(tanh_map(value(a)), tracked(a));
  node(id).back = [a](Graph& g, int self) {
    if (!g.tracked(a)) return;
    const Matrix& go = g.node(self).grad;
    const Matrix& y = g.node(self).val;
    Matrix& da = g.node(a.id).grad;
    for (int i = 0; i < go.size(); ++i) da.a[i] += go.a[i] * (1.0 - y.a[i] * y.a[i]);
  };
  return {id};
}

Var Graph::scale(Var a, double k) {
  int id = push(mempoet::scale(value(a), k), tracked(a));
  node(id).back = [a, k](Graph& g, int self) {
    if (!g.tracked(a)) return;
    const Matrix& go = g.node(self).grad;
    Matrix& da = g.node(a.id).grad;
    for (int i = 0; i < go.size(); ++i) da.a[i] += k * go.a[i];
  };
  return {id};
}

Var Graph::concat_cols(Var a, Var b) {
  int id = push(mempoet::concat_cols(value(a), value(b)), tracked(a) || tracked(b));
  node(id).back = [a, b](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    const Matrix& av = g.node(a.id).val;
    for (int i = 0; i < go.rows; ++i) {
      if (g.tracked(a)) {
        Matrix& da = g.node(a.id).grad;
        for (int j = 0; j < av.cols; ++j) da(i, j) += go(i, j);
      }
      if (g.tracked(b)) {
        Matrix& db = g.node(b.id).grad;
        for (int j = av.cols; j < go.cols; ++j) db(i, j - av.cols) += go(i, j);
      }
    }
  };
  return {id};
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw UsageError("stack_rows: empty input");
  const int cols = value(rows[0]).cols;
  Matrix m(static_cast<int>(rows.size()), cols);
  bool track = false;
  for (size_t i = 0; i < rows.size(); ++i) {
    const Matrix& r = value(rows[i]);
    if (r.rows != 1 || r.cols != cols) throw UsageError("stack_rows: shape mismatch");
    std::copy(r.a.begin(), r.a.end(), m.row_ptr(static_cast<int>(i)));
    track = track || tracked(rows[i]);
  }
  int id = push(std::move(m), track);
  node(id).back = [rows](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    for (size_t i = 0; i < rows.size(); ++i) {
      if (!g.tracked(rows[i])) continue;
      Matrix& dr = g.node(rows[i].id).grad;
      const double* src = go.row_ptr(static_cast<int>(i));
      for (int j = 0; j < go.cols; ++j) dr.a[j] += src[j];
    }
  };
  return {id};
}

Var Graph::stack_scalars(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw UsageError("stack_scalars: empty input");
  Matrix m(1, static_cast<int>(scalars.size()));
  bool track = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Matrix& s = value(scalars[i]);
    if (s.size() != 1) throw UsageError("stack_scalars: inputs must be 1x1");
    m.a[i] = s.a[0];
    track = track || tracked(scalars[i]);
  }
  int id = push(std::move(m), track);
  node(id).back = [scalars](Graph& g, int self) {
    const Matrix& go = g.node(self).grad;
    for (size_t i = 0; i < scalars.size(); ++i) {
      if (g.tracked(scalars[i])) g.node(scalars[i].id).grad.a[0] += go.a[i];
    }
  };
  return {id};
}

Var Graph::pick_row(Var m, int r) {
  const Matrix& mv = value(m);
  if (r < 0 || r >= mv.rows) throw UsageError("pick_row: row out of range");
  Matrix out(1, mv.cols);
  std::copy(mv.row_ptr(r), mv.row_ptr(r) + mv.cols, out.a.begin());
  int id = push(std::move(out), tracked(m));
  node(id).back = [m, r](Graph& g, int self) {
    if (!g.tracked(m)) return;
    const Matrix& go = g.node(self).grad;
    double* dst = g.node(m.id).grad.row_ptr(r);
    for (int j = 0; j < go.cols; ++j) dst[j] += go.a[j];
  };
  return {id};
}

Var Graph::dot(Var a, Var b) {
  Matrix out(1, 1);
  out.a[0] = mempoet::dot(value(a), value(b));
  int id = push(std::move(out), tracked(a) || tracked(b));
  node(id).back = [a, b](Graph& g, int self) {
    const double go = g.node(self).grad.a[0];
    const Matrix& av = g.node(a.id).val;
    const Matrix& bv = g.node(b.id).val;
    if (g.tracked(a)) {
      Matrix& da = g.node(a.id).grad;
      for (int i = 0; i < av.size(); ++i) da.a[i] += go * bv.a[i];
    }
    if (g.tracked(b)) {
      Matrix& db = g.node(b.id).grad;
      for (int i = 0; i < bv.size(); ++i) db.a[i] += go * av.a[i];
    }
  };
  return {id};
}

Var Graph::softmax_row(Var v) {
  int id = push(mempoet::softmax(value(v)), tracked(v));
  node(id).back = [v](Graph& g, int self) {
    if (!g.tracked(v)) return;
    const Matrix& go = g.node(self).grad;
    const Matrix& y = g.node(self).val;
    double gy = 0.0;
    for (int i = 0; i < y.size(); ++i) gy += go.a[i] * y.a[i];
    Matrix& dv = g.node(v.id).grad;
    for (int i = 0; i < y.size(); ++i) dv.a[i] += y.a[i] * (go.a[i] - gy);
  };
  return {id};
}

Var Graph::softmax_xent(Var logits, int target) {
  const Matrix probs = mempoet::softmax(value(logits));
  Matrix out(1, 1);
  out.a[0] = cross_entropy(probs, target);
  int id = push(std::move(out), tracked(logits));
  node(id).back = [logits, target, probs](Graph& g, int self) {
    if (!g.tracked(logits)) return;
    const double go = g.node(self).grad.a[0];
    Matrix& dl = g.node(logits.id).grad;
    // In the floored region the loss is constant, so the gradient is zero.
    if (probs.a[static_cast<size_t>(target)] <= kProbFloor) return;
    for (int i = 0; i < probs.size(); ++i) {
      dl.a[i] += go * (probs.a[i] - (i == target ? 1.0 : 0.0));
    }
  };
  return {id};
}

Var Graph::sum(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw UsageError("sum: empty input");
  Matrix out(1, 1);
  bool track = false;
  for (Var s : scalars) {
    const Matrix& sv = value(s);
    if (sv.size() != 1) throw UsageError("sum: inputs must be 1x1");
    out.a[0] += sv.a[0];
    track = track || tracked(s);
  }
  int id = push(std::move(out), track);
  node(id).back = [scalars](Graph& g, int self) {
    const double go = g.node(self).grad.a[0];
    for (Var s : scalars) {
      if (g.tracked(s)) g.node(s.id).grad.a[0] += go;
    }
  };
  return {id};
}

Graph::GruVars Graph::gru_params(ParamStore& ps, const std::string& prefix) {
  GruVars w;
  w.Wz = param(ps, prefix + ".Wz");
  w.Uz = param(ps, prefix + ".Uz");
  w.bz = param(ps, prefix + ".bz");
  w.Wr = param(ps, prefix + ".Wr");
  w.Ur = param(ps, prefix + ".Ur");
  w.br = param(ps, prefix + ".br");
  w.Wh = param(ps, prefix + ".Wh");
  w.Uh = param(ps, prefix + ".Uh");
  w.bh = param(ps, prefix + ".bh");
  return w;
}

Var Graph::gru(Var x, Var h_prev, const GruVars& w) {
  Var z = sigmoid(add(add(matmul(x, w.Wz), matmul(h_prev, w.Uz)), w.bz));
  Var r = sigmoid(add(add(matmul(x, w.Wr), matmul(h_prev, w.Ur)), w.br));
  Var hc = tanh_fn(add(add(matmul(x, w.Wh), matmul(hadamard(r, h_prev), w.Uh)), w.bh));
  return add(hadamard(one_minus(z), h_prev), hadamard(z, hc));
}

void Graph::backward(Var loss) {
  Node& ln = node(loss.id);
  if (ln.val.size() != 1) throw UsageError("backward: loss must be 1x1");
  if (!ln.track) return;
  ln.grad.a[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = node(i);
    if (n.track && n.back) n.back(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.external_grad) continue;
    for (int i = 0; i < n.grad.size(); ++i) n.external_grad->a[i] += n.grad.a[i];
  }
}

}  // namespace mempoet
