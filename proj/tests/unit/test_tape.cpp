#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "surt/dualpath.hpp"
#include "surt/numcore.hpp"
#include "surt/tape.hpp"

using namespace surt;

namespace {

using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

// Gradient check of sum(R * op(params)) for a fixed random R.
GradCheckReport check_op(const std::vector<Shape>& shapes, const Build& build, std::uint64_t seed = 5,
                         double scale = 1.0) {
  std::mt19937_64 rng(seed);
  ParamStore<double> store;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    store.add("p" + std::to_string(i), testutil::random_tensor<double>(shapes[i], rng, scale));
  }
  Tensor<double> weights;
  auto forward = [&](Tape<double>& tape) {
    std::vector<Var> vars;
    for (std::size_t i = 0; i < shapes.size(); ++i) vars.push_back(tape.param("p" + std::to_string(i)));
    Var out = build(tape, vars);
    if (weights.empty()) weights = testutil::random_tensor<double>(tape.value(out).shape(), rng);
    return tape.sum_all(tape.mul(out, tape.constant(weights)));
  };
  auto f = [&](ParamStore<double>& s) {
    Tape<double> tape(&s);
    return tape.value(forward(tape))[0];
  };
  auto g = [&](ParamStore<double>& s) {
    Tape<double> tape(&s);
    Var out = forward(tape);
    tape.backward(out);
    std::vector<Tensor<double>> grads;
    tape.accumulate_param_grads(grads);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.slots()[i].grad = i < grads.size() && !grads[i].empty() ? grads[i] : Tensor<double>(s.slots()[i].value.shape());
    }
  };
  return grad_check(f, g, store);
}

void expect_pass(const GradCheckReport& r) {
  CHECK_MESSAGE(r.max_rel_error < 1e-6, r.worst_param << "[" << r.worst_index << "] a=" << r.worst_analytic
                                                      << " n=" << r.worst_numeric);
}

}  // namespace

TEST_CASE("elementwise and linear ops") {
  expect_pass(check_op({{4, 3}, {3, 5}}, [](auto& t, const auto& v) { return t.matmul(v[0], v[1]); }));
  expect_pass(check_op({{4, 3}, {3}}, [](auto& t, const auto& v) { return t.add_bias(v[0], v[1]); }));
  expect_pass(check_op({{4, 3}, {4, 3}}, [](auto& t, const auto& v) { return t.add(v[0], v[1]); }));
  expect_pass(check_op({{4, 3}, {4, 3}}, [](auto& t, const auto& v) { return t.sub(v[0], v[1]); }));
  expect_pass(check_op({{4, 3}, {4, 3}}, [](auto& t, const auto& v) { return t.mul(v[0], v[1]); }));
  expect_pass(check_op({{4, 3}}, [](auto& t, const auto& v) { return t.scale(v[0], -2.5); }));
  expect_pass(check_op({{4, 3}}, [](auto& t, const auto& v) { return t.one_minus(v[0]); }));
  expect_pass(check_op({{4, 3}}, [](auto& t, const auto& v) {
    return t.add_const(v[0], Tensor<double>({4, 3}, 0.7));
  }));
  expect_pass(check_op({{4, 3}}, [](auto& t, const auto& v) { return t.sigmoid(v[0]); }));
  expect_pass(check_op({{4, 3}}, [](auto& t, const auto& v) { return t.tanh(v[0]); }));
  expect_pass(check_op({{2, 3}, {2, 4}}, [](auto& t, const auto& v) { return t.concat_cols(v[0], v[1]); }));
}

TEST_CASE("relu away from the kink") {
  Tensor<double> shift({5, 4}, 0.0);
  std::mt19937_64 rng(1);
  auto base = testutil::random_tensor<double>({5, 4}, rng);
  for (std::size_t i = 0; i < base.size(); ++i) shift[i] = base[i] > 0 ? 0.5 : -0.5;
  expect_pass(check_op({{5, 4}}, [&](auto& t, const auto& v) { return t.relu(t.add_const(v[0], shift)); }, 1, 0.1));
}

TEST_CASE("layer norm") {
  expect_pass(check_op({{6, 5}, {5}, {5}}, [](auto& t, const auto& v) { return t.layer_norm(v[0], v[1], v[2]); }));
}

TEST_CASE("causal window, gather, and overlap-add") {
  expect_pass(check_op({{7, 3}}, [](auto& t, const auto& v) { return t.causal_window(v[0], 3); }));
  expect_pass(check_op({{5, 3}}, [](auto& t, const auto& v) {
    return t.gather_rows(v[0], {4, -1, 0, 0, 2, -1, 3});
  }));
  expect_pass(check_op({{6, 2}}, [](auto& t, const auto& v) {
    return t.overlap_add(v[0], {0, 1, 2, 1, 2, -1}, 3);
  }));

  Tape<double> tape;
  Tensor<double> x({4, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const auto w = tape.value(tape.causal_window(tape.constant(x), 2));
  CHECK(w.shape() == Shape{4, 4});
  CHECK(w.at(0, 0) == 0.0);
  CHECK(w.at(0, 2) == 1.0);
  CHECK(w.at(2, 0) == 3.0);
  CHECK(w.at(2, 3) == 6.0);
  const auto m = tape.value(tape.overlap_add(tape.constant(x), {0, 1, 1, -1}, 2));
  CHECK(m.at(0, 1) == 2.0);
  CHECK(m.at(1, 0) == 4.0);  // (3 + 5) / 2
}

TEST_CASE("lstm forward, reverse, and batched sequences") {
  const std::vector<std::vector<std::size_t>> seqs{{0, 1, 2, 3}, {4, 5}, {7, 6}};
  for (bool reverse : {false, true}) {
    expect_pass(check_op({{8, 3}, {3, 16}, {4, 16}, {16}}, [&](auto& t, const auto& v) {
      return t.lstm(v[0], v[1], v[2], v[3], seqs, reverse);
    }));
  }
}

TEST_CASE("lstm matches a hand-rolled single step recurrence") {
  std::mt19937_64 rng(2);
  const std::size_t in = 3, hid = 2;
  const auto x = testutil::random_tensor<double>({3, in}, rng);
  const auto wx = testutil::random_tensor<double>({in, 4 * hid}, rng);
  const auto wh = testutil::random_tensor<double>({hid, 4 * hid}, rng);
  const auto b = testutil::random_tensor<double>({4 * hid}, rng);
  Tape<double> tape;
  const auto out = tape.value(tape.lstm(tape.constant(x), tape.constant(wx), tape.constant(wh), tape.constant(b), {{0, 1, 2}}));
  std::vector<double> h(hid, 0.0), c(hid, 0.0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> g(4 * hid);
    for (std::size_t j = 0; j < 4 * hid; ++j) {
      g[j] = b[j];
      for (std::size_t k = 0; k < in; ++k) g[j] += x.at(t, k) * wx.at(k, j);
      for (std::size_t k = 0; k < hid; ++k) g[j] += h[k] * wh.at(k, j);
    }
    for (std::size_t k = 0; k < hid; ++k) {
      c[k] = sig(g[hid + k]) * c[k] + sig(g[k]) * std::tanh(g[2 * hid + k]);
      h[k] = sig(g[3 * hid + k]) * std::tanh(c[k]);
      CHECK(out.at(t, k) == doctest::Approx(h[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sparse attention equals the dense masked reference and has correct gradients") {
  std::mt19937_64 rng(3);
  const std::size_t n = 10, d = 6, heads = 2, w = 3;
  auto nbrs = std::make_shared<const NeighborLists>(inter_neighbors(n, w, true));
  std::vector<bool> mask(n * n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : (*nbrs)[i]) mask[i * n + j] = true;
  }
  const auto q = testutil::random_tensor<double>({n, d}, rng);
  const auto k = testutil::random_tensor<double>({n, d}, rng);
  const auto v = testutil::random_tensor<double>({n, d}, rng);
  Tape<double> tape;
  const auto sparse = tape.value(tape.attention(tape.constant(q), tape.constant(k), tape.constant(v), heads, nbrs));
  const auto dense = dense_masked_attention(q, k, v, heads, mask);
  for (std::size_t i = 0; i < sparse.size(); ++i) CHECK(sparse[i] == doctest::Approx(dense[i]).epsilon(1e-12));

  auto intra = std::make_shared<const NeighborLists>(intra_neighbors(n, w));
  for (const auto& lists : {nbrs, intra}) {
    expect_pass(check_op({{n, d}, {n, d}, {n, d}}, [&](auto& t, const auto& vs) {
      return t.attention(vs[0], vs[1], vs[2], heads, lists);
    }));
  }
}

TEST_CASE("shape errors") {
  Tape<double> tape;
  Var a = tape.constant(Tensor<double>({2, 3}, 1.0));
  Var b = tape.constant(Tensor<double>({2, 2}, 1.0));
  CHECK_FAILS_WITH(tape.matmul(a, b), ErrorKind::ShapeMismatch);
  CHECK_FAILS_WITH(tape.add(a, b), ErrorKind::ShapeMismatch);
  CHECK_FAILS_WITH(tape.param("x"), ErrorKind::BadConfig);
}
