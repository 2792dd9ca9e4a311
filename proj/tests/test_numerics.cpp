#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mempoet/errors.hpp"
#include "mempoet/graph.hpp"
#include "mempoet/numerics.hpp"
#include "mempoet/rng.hpp"

using namespace mempoet;
using testkit::random_matrix;

TEST_CASE("softmax analytic values") {
  const Matrix a = softmax(Matrix::row({0.0, 0.0}));
  CHECK(a.a[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.a[1] == doctest::Approx(0.5).epsilon(1e-12));

  const Matrix b = softmax(Matrix::row({std::log(2.0), 0.0}));
  CHECK(b.a[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(b.a[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(Matrix(1, 0)), UsageError);
}

TEST_CASE("softmax matches direct exp/sum evaluation") {
  Rng rng(11);
  const Matrix v = random_matrix(1, 10, rng, 4.0);
  const Matrix got = softmax(v);
  // Independent evaluation without max subtraction.
  double sum = 0.0;
  for (double x : v.a) sum += std::exp(x);
  for (int i = 0; i < 10; ++i) {
    CHECK(got.a[i] == doctest::Approx(std::exp(v.a[i]) / sum).epsilon(1e-12));
  }
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.next_below(20);
    const Matrix v = random_matrix(1, n, rng, 10.0);
    const Matrix p = softmax(v);
    double sum = 0.0;
    for (double x : p.a) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    const double c = rng.uniform(-50.0, 50.0);
    Matrix shifted = v;
    for (double& x : shifted.a) x += c;
    const Matrix q = softmax(shifted);
    for (int i = 0; i < n; ++i) CHECK(std::abs(p.a[i] - q.a[i]) < 1e-12);
  }
}

TEST_CASE("cross_entropy analytic values") {
  Matrix uniform(1, 10, 0.1);
  CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Matrix onehot(1, 4);
  onehot.a[2] = 1.0;
  CHECK(cross_entropy(onehot, 2) == doctest::Approx(0.0));

  CHECK(cross_entropy(Matrix::row({0.9, 0.1}), 1) ==
        doctest::Approx(-std::log(0.1)).epsilon(1e-12));

  // Zero probability is floored, not -inf.
  CHECK(cross_entropy(onehot, 0) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(cross_entropy(onehot, 7), UsageError);
}

TEST_CASE("cosine analytic values and guards") {
  const Matrix x = Matrix::row({0.3, -1.2, 2.0});
  CHECK(cosine(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine(Matrix::row({1, 0}), Matrix::row({0, 1})) == doctest::Approx(0.0));
  CHECK(cosine(Matrix::row({1, 1}), Matrix::row({1, 0})) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cosine(Matrix::row({0, 0}), Matrix::row({1, 2})) == 0.0);
  CHECK_THROWS_AS(cosine(Matrix::row({1, 2}), Matrix::row({1, 2, 3})), UsageError);
}

TEST_CASE("cosine symmetry, positive scale invariance, bounds") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + rng.next_below(8);
    const Matrix a = random_matrix(1, n, rng, 3.0);
    const Matrix b = random_matrix(1, n, rng, 3.0);
    const double c = cosine(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(cosine(b, a) == doctest::Approx(c));
    const double lambda = 0.01 + 10.0 * rng.next_double();
    CHECK(cosine(scale(a, lambda), b) == doctest::Approx(c).epsilon(1e-9));
  }
}

namespace {

GruWeights make_view(const std::vector<Matrix>& w) {
  return GruWeights{&w[0], &w[1], &w[2], &w[3], &w[4], &w[5], &w[6], &w[7], &w[8]};
}

std::vector<Matrix> random_gru(int in, int hid, Rng& rng, double range) {
  std::vector<Matrix> w;
  for (int gate = 0; gate < 3; ++gate) {
    w.push_back(random_matrix(in, hid, rng, range));
    w.push_back(random_matrix(hid, hid, rng, range));
    w.push_back(random_matrix(1, hid, rng, range));
  }
  return w;
}

// Independent GRU evaluation: plain index loops, no library kernels.
Matrix gru_oracle(const Matrix& x, const Matrix& h, const std::vector<Matrix>& w) {
  const int in = x.cols;
  const int hid = h.cols;
  auto gate = [&](const Matrix& W, const Matrix& U, const Matrix& b, const Matrix& hin) {
    std::vector<double> pre(static_cast<size_t>(hid));
    for (int j = 0; j < hid; ++j) {
      double s = b.a[static_cast<size_t>(j)];
      for (int i = 0; i < in; ++i) s += x.a[static_cast<size_t>(i)] * W(i, j);
      for (int i = 0; i < hid; ++i) s += hin.a[static_cast<size_t>(i)] * U(i, j);
      pre[static_cast<size_t>(j)] = s;
    }
    return pre;
  };
  const auto zp = gate(w[0], w[1], w[2], h);
  const auto rp = gate(w[3], w[4], w[5], h);
  Matrix out(1, hid);
  Matrix rh(1, hid);
  for (int j = 0; j < hid; ++j)
    rh.a[static_cast<size_t>(j)] =
        1.0 / (1.0 + std::exp(-rp[static_cast<size_t>(j)])) * h.a[static_cast<size_t>(j)];
  const auto hp = gate(w[6], w[7], w[8], rh);
  for (int j = 0; j < hid; ++j) {
    const double z = 1.0 / (1.0 + std::exp(-zp[static_cast<size_t>(j)]));
    const double hc = std::tanh(hp[static_cast<size_t>(j)]);
    out.a[static_cast<size_t>(j)] = (1.0 - z) * h.a[static_cast<size_t>(j)] + z * hc;
  }
  return out;
}

}  // namespace

TEST_CASE("gru_cell with zero weights halves the previous state") {
  std::vector<Matrix> w;
  for (int gate = 0; gate < 3; ++gate) {
    w.push_back(Matrix(3, 4));
    w.push_back(Matrix(4, 4));
    w.push_back(Matrix(1, 4));
  }
  const Matrix h0 = Matrix::row({0.8, -0.6, 0.2, 0.99});
  const Matrix h1 = gru_cell(Matrix::row({1.0, 2.0, 3.0}), h0, make_view(w));
  for (int j = 0; j < 4; ++j) CHECK(h1.a[j] == doctest::Approx(0.5 * h0.a[j]).epsilon(1e-15));
}

TEST_CASE("gru_cell from zero state with a neutral update gate stays within (-0.5, 0.5)") {
  // With h_prev = 0 and zero update-gate parameters, z = 0.5 exactly and the
  // output is 0.5 * tanh(...), strictly inside (-0.5, 0.5).
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = random_gru(3, 5, rng, 1.0);
    w[0].fill(0.0);  // Wz
    w[1].fill(0.0);  // Uz
    w[2].fill(0.0);  // bz
    const Matrix h = gru_cell(random_matrix(1, 3, rng, 1.0), Matrix(1, 5), make_view(w));
    for (double x : h.a) {
      CHECK(x > -0.5);
      CHECK(x < 0.5);
    }
  }
}

TEST_CASE("gru_cell matches the step-by-step formula oracle") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_gru(4, 6, rng, 1.5);
    const Matrix x = random_matrix(1, 4, rng, 2.0);
    const Matrix h = random_matrix(1, 6, rng, 0.9);
    const Matrix got = gru_cell(x, h, make_view(w));
    const Matrix want = gru_oracle(x, h, w);
    for (int j = 0; j < 6; ++j) CHECK(got.a[j] == doctest::Approx(want.a[j]).epsilon(1e-12));
  }
}

TEST_CASE("gru_cell keeps states inside (-1,1)") {
  // Weight and input scales are kept below tanh/sigmoid's floating point
  // saturation point (arguments stay well under ~19), where the interval is
  // genuinely open; saturated gates collapse to the closed endpoints.
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_gru(2, 4, rng, 1.5);
    Matrix h = random_matrix(1, 4, rng, 0.999);
    for (int step = 0; step < 10; ++step) {
      h = gru_cell(random_matrix(1, 2, rng, 1.5), h, make_view(w));
      for (double v : h.a) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
      }
    }
  }
  // Extreme weights may saturate to exactly +-1 but never escape [-1,1].
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = random_gru(2, 4, rng, 50.0);
    Matrix h = random_matrix(1, 4, rng, 0.999);
    for (int step = 0; step < 5; ++step) {
      h = gru_cell(random_matrix(1, 2, rng, 10.0), h, make_view(w));
      for (double v : h.a) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }
  std::vector<Matrix> bad;
  for (int gate = 0; gate < 3; ++gate) {
    bad.push_back(Matrix(9, 4));
    bad.push_back(Matrix(4, 4));
    bad.push_back(Matrix(1, 4));
  }
  CHECK_THROWS_AS(gru_cell(Matrix(1, 2), Matrix(1, 4), make_view(bad)), UsageError);
}

TEST_CASE("backward: square function and exact minimum") {
  {
    Graph g;
    const Var x = g.leaf(Matrix::row({3.0}));
    const Var loss = g.hadamard(x, x);
    g.backward(loss);
    CHECK(g.grad_of(x).a[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
  {
    Graph g;
    const Var x = g.leaf(Matrix::row({1.25}));
    const Var minus_c = g.constant(Matrix::row({-1.25}));
    const Var d = g.add(x, minus_c);
    const Var loss = g.hadamard(d, d);
    g.backward(loss);
    CHECK(std::abs(g.grad_of(x).a[0]) < 1e-8);
  }
}

namespace {

// Central finite differences of a scalar function of one ParamStore entry.
double fd_grad(ParamStore& ps, const std::string& name, int index,
               const std::function<double()>& f, double eps = 1e-5) {
  double& x = ps.param(name).a[static_cast<size_t>(index)];
  const double saved = x;
  x = saved + eps;
  const double up = f();
  x = saved - eps;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * eps);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("backward: composite GRU chain vs central finite differences") {
  Rng rng(17);
  ParamStore ps;
  const int in = 3, hid = 4, vocab = 5;
  for (const char* gate : {"z", "r", "h"}) {
    ps.add(std::string("g.W") + gate, random_matrix(in, hid, rng, 0.5));
    ps.add(std::string("g.U") + gate, random_matrix(hid, hid, rng, 0.5));
    ps.add(std::string("g.b") + gate, random_matrix(1, hid, rng, 0.5));
  }
  ps.add("proj", random_matrix(hid, vocab, rng, 0.5));
  const Matrix x1 = random_matrix(1, in, rng, 1.0);
  const Matrix x2 = random_matrix(1, in, rng, 1.0);

  auto loss_fn = [&]() {
    Graph g;
    Graph::GruVars w = g.gru_params(ps, "g");
    Var h = g.constant(Matrix(1, hid));
    h = g.gru(g.constant(x1), h, w);
    h = g.gru(g.constant(x2), h, w);
    const Var logits = g.matmul(h, g.param(ps, "proj"));
    const Var l1 = g.softmax_xent(logits, 2);
    const Var sm = g.softmax_row(logits);
    const Var l2 = g.dot(sm, sm);  // exercises the softmax backward too
    return g.scalar(g.sum({l1, l2}));
  };

  auto backward_fn = [&]() {
    Graph g;
    Graph::GruVars w = g.gru_params(ps, "g");
    Var h = g.constant(Matrix(1, hid));
    h = g.gru(g.constant(x1), h, w);
    h = g.gru(g.constant(x2), h, w);
    const Var logits = g.matmul(h, g.param(ps, "proj"));
    const Var l1 = g.softmax_xent(logits, 2);
    const Var sm = g.softmax_row(logits);
    const Var l2 = g.dot(sm, sm);
    const Var total = g.sum({l1, l2});
    g.backward(total);
  };

  ps.zero_grads();
  backward_fn();
  double max_err = 0.0;
  for (const std::string& name : ps.names()) {
    for (int i = 0; i < ps.param(name).size(); ++i) {
      const double numeric = fd_grad(ps, name, i, loss_fn);
      max_err = std::max(max_err, rel_err(ps.grad(name).a[static_cast<size_t>(i)], numeric));
    }
  }
  CHECK(max_err < 1e-4);
}

TEST_CASE("backward is deterministic for fixed inputs") {
  Rng rng(18);
  ParamStore ps;
  ps.add("m", random_matrix(3, 3, rng, 1.0));
  auto run = [&]() {
    ps.zero_grads();
    Graph g;
    const Var m = g.param(ps, "m");
    const Var v = g.constant(random_matrix(1, 3, rng, 1.0));
    g.backward(g.softmax_xent(g.matmul(v, m), 1));
  };
  Rng rng_a(99);
  rng = Rng(99);
  run();
  const Matrix first = ps.grad("m");
  rng = Rng(99);
  run();
  for (int i = 0; i < first.size(); ++i) CHECK(first.a[i] == ps.grad("m").a[i]);
}

TEST_CASE("adadelta: zero gradient leaves parameters unchanged") {
  ParamStore ps;
  ps.add("p", Matrix::row({1.0, -2.0, 3.0}));
  const Matrix before = ps.param("p");
  ps.adadelta_step(0.95, 1e-6);
  for (int i = 0; i < 3; ++i) CHECK(ps.param("p").a[i] == before.a[i]);
}

TEST_CASE("adadelta: first step from zero state matches the closed form") {
  const double rho = 0.9, eps = 1e-6, g = 0.7;
  ParamStore ps;
  ps.add("p", Matrix::row({2.0}));
  ps.grad("p").a[0] = g;
  ps.adadelta_step(rho, eps);
  const double expected_delta = -std::sqrt(eps) * g / std::sqrt((1.0 - rho) * g * g + eps);
  CHECK(ps.param("p").a[0] == doctest::Approx(2.0 + expected_delta).epsilon(1e-15));
  // Gradients are untouched; the caller clears them.
  CHECK(ps.grad("p").a[0] == g);
}

TEST_CASE("adadelta: minimizes x^2 and matches the scalar recursion oracle") {
  const double rho = 0.95, eps = 1e-6;
  ParamStore ps;
  ps.add("x", Matrix::row({5.0}));

  // Oracle: direct scalar recursion of the published update rule.
  double x = 5.0, eg2 = 0.0, ed2 = 0.0;
  bool converged = false;
  for (int step = 0; step < 10000; ++step) {
    const double g = 2.0 * ps.param("x").a[0];
    ps.grad("x").a[0] = g;
    ps.adadelta_step(rho, eps);
    ps.zero_grads();

    const double og = 2.0 * x;
    eg2 = rho * eg2 + (1.0 - rho) * og * og;
    const double d = -std::sqrt(ed2 + eps) / std::sqrt(eg2 + eps) * og;
    ed2 = rho * ed2 + (1.0 - rho) * d * d;
    x += d;

    CHECK(ps.param("x").a[0] == doctest::Approx(x).epsilon(1e-12));
    if (std::abs(ps.param("x").a[0]) < 0.5) {
      converged = true;
      break;
    }
  }
  CHECK(converged);
}

TEST_CASE("adadelta is bit-deterministic") {
  auto run = []() {
    Rng rng(7);
    ParamStore ps;
    ps.add("a", random_matrix(4, 3, rng, 1.0));
    ps.add("b", random_matrix(1, 6, rng, 1.0));
    for (int step = 0; step < 5; ++step) {
      for (const std::string& name : ps.names()) {
        Matrix& g = ps.grad(name);
        for (int i = 0; i < g.size(); ++i) g.a[i] = rng.uniform(-1.0, 1.0);
      }
      ps.adadelta_step(0.95, 1e-6);
      ps.zero_grads();
    }
    std::vector<double> out;
    for (const std::string& name : ps.names())
      for (double v : ps.param(name).a) out.push_back(v);
    return out;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("ParamStore rejects duplicates and mismatched access") {
  ParamStore ps;
  ps.add("w", Matrix(2, 2));
  CHECK_THROWS_AS(ps.add("w", Matrix(2, 2)), UsageError);
  CHECK_THROWS_AS(ps.param("missing"), UsageError);
  CHECK(ps.has("w"));
  CHECK(ps.value_count() == 4);
}

TEST_CASE("matrix kernels stay finite and validate shapes") {
  Rng rng(19);
  const Matrix a = random_matrix(3, 4, rng, 100.0);
  const Matrix b = random_matrix(4, 2, rng, 100.0);
  CHECK(matmul(a, b).all_finite());
  CHECK(sigmoid(a).all_finite());
  CHECK(tanh_map(a).all_finite());
  CHECK(softmax(random_matrix(1, 9, rng, 500.0)).all_finite());
  CHECK_THROWS_AS(matmul(b, a), UsageError);
  CHECK_THROWS_AS(add(a, b), UsageError);
}
