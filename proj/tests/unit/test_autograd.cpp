#include <doctest.h>

#include <cmath>

#include "saco/autograd/ops.hpp"
#include "saco/error.hpp"
#include "support.hpp"

using namespace saco;
using namespace saco::ad;
using testing_support::check_gradients;
using testing_support::random_matrix;

namespace {

constexpr double kGradTol = 1e-4;

// Nonlinear scalar readout giving every entry of x a distinct gradient.
struct Probe {
  Matrix weights;
  std::vector<int> cols;

  Probe(int in, std::mt19937_64& rng, int rows) : weights(random_matrix(in, 5, rng)) {
    for (int r = 0; r < rows; ++r) cols.push_back(r % 5);
  }
  Var operator()(Graph& g, Var x) const {
    return sum(pick(log_softmax_rows(matmul(x, g.constant(weights))), cols));
  }
};

struct Fixture {
  std::mt19937_64 rng{11};
  ParameterStore store;
};

}  // namespace

TEST_CASE("elementwise and matrix ops have exact forward values") {
  ParameterStore store;
  Graph g(store);
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  CHECK(matmul(g.constant(a), g.constant(b)).value() == a * b);
  CHECK(matmul_nt(g.constant(a), g.constant(b)).value() == a * b.transpose());
  CHECK(add(g.constant(a), g.constant(b)).value() == a + b);
  CHECK(sub(g.constant(a), g.constant(b)).value() == a - b);
  CHECK(scale(g.constant(a), -2.0).value() == -2.0 * a);
  CHECK(mean_rows(g.constant(a)).value()(0, 1) == 3.0);
  CHECK(sum(g.constant(a)).scalar() == 10.0);
  CHECK(mean(g.constant(a)).scalar() == 2.5);
  CHECK(slice_cols(g.constant(a), 1, 1).value()(1, 0) == 4.0);
  CHECK(slice_rows(g.constant(a), 1, 1).value()(0, 0) == 3.0);
  const std::vector<int> rows = {1, 1, 0};
  const auto gathered = gather_rows(g.constant(a), rows).value();
  CHECK(gathered.rows() == 3);
  CHECK(gathered(2, 1) == 2.0);
  const std::vector<int> cols = {1, -1};
  const auto picked = pick(g.constant(a), cols).value();
  CHECK(picked(0, 0) == 2.0);
  CHECK(picked(1, 0) == 0.0);
}

TEST_CASE("softmax rows sum to one and respect the additive mask") {
  ParameterStore store;
  Graph g(store);
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(4, 6, rng, 5.0);
  Matrix mask = Matrix::Zero(4, 6);
  mask(0, 0) = -std::numeric_limits<double>::infinity();
  const auto p = softmax_rows(g.constant(x), &mask).value();
  for (int r = 0; r < 4; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(0, 0) == 0.0);
  const auto lp = log_softmax_rows(g.constant(x)).value();
  for (int r = 0; r < 4; ++r) CHECK(lp.row(r).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log_softmax is stable for huge logits") {
  ParameterStore store;
  Graph g(store);
  Matrix x(1, 3);
  x << 1000.0, 0.0, -1000.0;
  const auto lp = log_softmax_rows(g.constant(x)).value();
  CHECK(std::isfinite(lp(0, 2)));
  CHECK(lp(0, 0) == doctest::Approx(0.0));
  CHECK(logsumexp_row(g.constant(x)).scalar() == doctest::Approx(1000.0));
}

TEST_CASE("cosine rejects zero vectors") {
  ParameterStore store;
  Graph g(store);
  const Matrix z = Matrix::Zero(1, 3);
  Matrix o(1, 3);
  o << 1, 0, 0;
  CHECK_THROWS_AS(cosine(g.constant(z), g.constant(o)), ValidationError);
  CHECK(cosine(g.constant(o), g.constant(o)).scalar() == doctest::Approx(1.0));
}

TEST_CASE("shape mismatches are rejected") {
  ParameterStore store;
  Graph g(store);
  const Matrix a = Matrix::Ones(2, 3);
  const Matrix b = Matrix::Ones(2, 2);
  CHECK_THROWS(matmul(g.constant(a), g.constant(a)));
  CHECK_THROWS(add(g.constant(a), g.constant(b)));
}

TEST_CASE("gradients of single ops match central differences") {
  Fixture f;
  const ParamId a = f.store.add("a", random_matrix(3, 8, f.rng));
  const ParamId b = f.store.add("b", random_matrix(8, 8, f.rng));
  const ParamId c = f.store.add("c", random_matrix(3, 8, f.rng));
  const ParamId row = f.store.add("row", random_matrix(1, 8, f.rng));
  const ParamId gain = f.store.add("gain", random_matrix(1, 8, f.rng));
  const ParamId bias = f.store.add("bias", random_matrix(1, 8, f.rng));
  const Probe probe(8, f.rng, 3);
  const Probe probe1(8, f.rng, 1);
  const Probe probe16(16, f.rng, 3);
  Matrix mask = Matrix::Zero(3, 8);
  mask(1, 2) = -1e9;

  struct Case {
    const char* name;
    std::function<Var(Graph&)> loss;
  };
  const std::vector<Case> cases = {
      {"matmul", [&](Graph& g) { return probe(g, matmul(g.param(a), g.param(b))); }},
      {"matmul_nt", [&](Graph& g) { return probe(g, matmul_nt(g.param(a), g.param(b))); }},
      {"add/sub", [&](Graph& g) { return probe(g, sub(add(g.param(a), g.param(c)), scale(g.param(a), 0.3))); }},
      {"add_row", [&](Graph& g) { return probe(g, add_row(g.param(a), g.param(row))); }},
      {"gelu", [&](Graph& g) { return probe(g, gelu(g.param(a))); }},
      {"softmax", [&](Graph& g) { return probe(g, softmax_rows(g.param(a), &mask)); }},
      {"layer_norm", [&](Graph& g) { return probe(g, layer_norm(g.param(a), g.param(gain), g.param(bias))); }},
      {"gather", [&](Graph& g) {
         const std::vector<int> idx = {2, 0, 2};
         return probe(g, gather_rows(g.param(a), idx));
       }},
      {"concat_cols", [&](Graph& g) { return probe16(g, concat_cols({g.param(a), g.param(c)})); }},
      {"concat_rows/slice", [&](Graph& g) {
         return probe(g, slice_rows(concat_rows({g.param(a), g.param(c)}), 2, 3));
       }},
      {"slice_cols", [&](Graph& g) {
         return probe(g, concat_cols({slice_cols(g.param(a), 4, 4), slice_cols(g.param(c), 0, 4)}));
       }},
      {"mean_rows", [&](Graph& g) { return probe1(g, mean_rows(g.param(a))); }},
      {"mean", [&](Graph& g) { return mean(gelu(g.param(a))); }},
      {"cosine", [&](Graph& g) { return cosine(g.param(row), slice_rows(g.param(a), 1, 1)); }},
      {"logsumexp", [&](Graph& g) { return logsumexp_row(slice_rows(g.param(a), 0, 1)); }},
  };
  for (const auto& tc : cases) {
    CAPTURE(tc.name);
    const auto rep = check_gradients(f.store, tc.loss);
    CHECK(rep.max_rel_error <= kGradTol);
  }
}

TEST_CASE("parameters used twice accumulate gradients") {
  Fixture f;
  const ParamId a = f.store.add("a", random_matrix(2, 8, f.rng));
  const auto rep = check_gradients(f.store, [&](Graph& g) {
    Var x = g.param(a);
    return sum(gelu(matmul_nt(x, x)));
  });
  CHECK(rep.max_rel_error <= kGradTol);
}

TEST_CASE("gradient buffers reduce and scale") {
  ParameterStore store;
  std::mt19937_64 rng(1);
  const ParamId a = store.add("a", random_matrix(2, 2, rng));
  store.add("b", random_matrix(2, 2, rng));
  GradientBuffer g1(store), g2(store);
  CHECK(g1.all_zero());
  g1.accumulate(a, Matrix::Ones(2, 2));
  g2.add_scaled(g1, 0.5);
  CHECK(g2[a](0, 0) == 0.5);
  CHECK(!g2.touched(1));
  g2.scale(4.0);
  CHECK(g2.squared_norm() == doctest::Approx(16.0));
  CHECK(!g2.all_zero());
  g2.clear();
  CHECK(g2.all_zero());
}

TEST_CASE("inference graphs record no backward closures") {
  ParameterStore store;
  std::mt19937_64 rng(1);
  const ParamId a = store.add("a", random_matrix(2, 2, rng));
  Graph g(store, false);
  Var y = gelu(g.param(a));
  CHECK(y.value().allFinite());
  CHECK(!g.recording());
}
