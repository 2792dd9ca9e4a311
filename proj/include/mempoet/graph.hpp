#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mempoet/numerics.hpp"

namespace mempoet {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Matrix values. Operations append nodes; backward()
// sweeps the tape once in reverse creation order and accumulates parameter
// gradients into the bound ParamStore. Values are computed with the same
// kernels as the plain inference path, so forward results are bit-identical.
class Graph {
 public:
  Var constant(Matrix m);
  Var leaf(Matrix m);
  Var param(ParamStore& ps, const std::string& name);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var one_minus(Var a);
  Var sigmoid(Var a);
  Var tanh_fn(Var a);
  Var scale(Var a, double k);
  Var concat_cols(Var a, Var b);
  Var stack_rows(const std::vector<Var>& rows);
  Var stack_scalars(const std::vector<Var>& scalars);
  Var pick_row(Var m, int r);
  Var dot(Var a, Var b);
  Var softmax_row(Var v);
  // Scalar node: cross_entropy(softmax(logits), target), fused for a stable
  // and exact backward (p - onehot).
  Var softmax_xent(Var logits, int target);
  Var sum(const std::vector<Var>& scalars);

  struct GruVars {
    Var Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh;
  };
  GruVars gru_params(ParamStore& ps, const std::string& prefix);
  Var gru(Var x, Var h_prev, const GruVars& w);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  const Matrix& grad_of(Var v) const;

  // Seeds d(loss)=1 and runs the tape backwards; loss must be 1x1. Parameter
  // gradients are added to (not overwritten in) the ParamStore.
  void backward(Var loss);

  void reserve(size_t n) { nodes_.reserve(n); }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    bool track = false;
    std::function<void(Graph&, int)> back;
    Matrix* external_grad = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> param_cache_;

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int push(Matrix val, bool track);
  bool tracked(Var v) const { return node(v.id).track; }
};

}  // namespace mempoet
