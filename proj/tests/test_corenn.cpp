#include <doctest.h>

#include <cmath>

#include "msh/nn.hpp"
#include "msh/rng.hpp"
#include "oracles.hpp"

using namespace msh;

namespace {

LstmParams random_lstm(int input, int hidden, std::uint64_t seed) {
  Rng rng(seed);
  LstmParams p;
  p.init(input, hidden, rng);
  // Nonzero biases exercise every gradient path.
  Rng brng(seed, "bias");
  for (auto& b : p.bias) b = brng.uniform(-0.2, 0.2);
  return p;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double range = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-range, range);
  return m;
}

}  // namespace

TEST_CASE("lstm_step with all-zero weights and state gives zero output") {
  LstmParams p;
  Rng rng(1);
  p.init(3, 4, rng);
  p.w_in.fill(0.0);
  p.w_rec.fill(0.0);

  Matrix x(2, 3, 0.7), h_prev(2, 4, 0.0), c_prev(2, 4, 0.0);
  Matrix h, c;
  lstm_step(p, x, h_prev, c_prev, h, c, nullptr);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(h.data()[i] == 0.0);  // gates sit at 0.5, candidate tanh(0) = 0
    CHECK(c.data()[i] == 0.0);
  }
}

TEST_CASE("lstm_step matches an independent scalar transcription") {
  oracles::ScalarLstm s{0.5, -0.3, 0.1, 0.2, 0.4, -0.2, -0.7, 0.6, 0.05, 0.9, -0.1, 0.3};
  LstmParams p;
  Rng rng(2);
  p.init(1, 1, rng);
  // Gate rows are [i f g o].
  p.w_in(0, 0) = s.wi_x;
  p.w_in(1, 0) = s.wf_x;
  p.w_in(2, 0) = s.wg_x;
  p.w_in(3, 0) = s.wo_x;
  p.w_rec(0, 0) = s.wi_h;
  p.w_rec(1, 0) = s.wf_h;
  p.w_rec(2, 0) = s.wg_h;
  p.w_rec(3, 0) = s.wo_h;
  p.bias = {s.bi, s.bf, s.bg, s.bo};

  double h_ref = 0.2, c_ref = -0.4;
  Matrix x(1, 1), h_prev(1, 1, h_ref), c_prev(1, 1, c_ref);
  const double inputs[] = {0.8, -1.2, 0.3};
  for (double xv : inputs) {
    x(0, 0) = xv;
    Matrix h, c;
    lstm_step(p, x, h_prev, c_prev, h, c, nullptr);
    const auto [h_exp, c_exp] = s.step(xv, h_ref, c_ref);
    CHECK(h(0, 0) == doctest::Approx(h_exp).epsilon(1e-12));
    CHECK(c(0, 0) == doctest::Approx(c_exp).epsilon(1e-12));
    h_ref = h_exp;
    c_ref = c_exp;
    h_prev = h;
    c_prev = c;
  }
}

TEST_CASE("lstm_step output shapes follow the hidden size") {
  LstmParams p = random_lstm(4, 8, 3);
  Matrix x = random_matrix(1, 4, 4);
  Matrix h_prev(1, 8, 0.0), c_prev(1, 8, 0.0);
  Matrix h, c;
  lstm_step(p, x, h_prev, c_prev, h, c, nullptr);
  CHECK(h.cols() == 8);
  CHECK(c.cols() == 8);

  Matrix bad(1, 5, 0.0);
  CHECK_THROWS_AS(lstm_step(p, bad, h_prev, c_prev, h, c, nullptr), ShapeError);
}

TEST_CASE("binarization follows sign with sign(0) = +1") {
  const double beta[] = {0.3, -0.2, 0.0};
  const Bitcode code = Bitcode::from_signs(beta, 3);
  CHECK(code.bit(0));
  CHECK_FALSE(code.bit(1));
  CHECK(code.bit(2));
  const auto signs = code.to_signs();
  CHECK(signs[0] == 1.0);
  CHECK(signs[1] == -1.0);
  CHECK(signs[2] == 1.0);
}

TEST_CASE("binary_lstm_step with zero parameters emits the all-ones code") {
  LstmParams p;
  Rng rng(5);
  p.init(4, 3, rng);
  p.w_in.fill(0.0);
  p.w_rec.fill(0.0);
  BatchNormState bn;
  bn.init(3);

  Matrix x(1, 4, 0.0), h_prev(1, 3, 0.0), c_prev(1, 3, 0.0);
  Matrix h, c, beta;
  binary_lstm_step(p, bn, BnMode::kInference, Binarize::kSign, nullptr, x, h_prev, c_prev,
                   h, c, beta, nullptr);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(beta(0, j) == 0.0);
    CHECK(h(0, j) == 1.0);
  }
}

TEST_CASE("binary_lstm_step output equals the sign of the exposed prebitcode") {
  LstmParams p = random_lstm(6, 5, 7);
  BatchNormState bn;
  bn.init(5);
  Rng rng(8);
  for (auto& v : bn.running_mean) v = rng.uniform(-0.5, 0.5);
  for (auto& v : bn.running_var) v = rng.uniform(0.2, 2.0);

  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = random_matrix(3, 6, 100 + trial, 2.0);
    Matrix h_prev(3, 5);
    for (std::size_t i = 0; i < h_prev.size(); ++i) {
      h_prev.data()[i] = (rng.next_u64() & 1) ? 1.0 : -1.0;
    }
    Matrix c_prev = random_matrix(3, 5, 200 + trial);
    Matrix h, c, beta;
    binary_lstm_step(p, bn, BnMode::kInference, Binarize::kSign, nullptr, x, h_prev, c_prev,
                     h, c, beta, nullptr);
    for (std::size_t i = 0; i < h.size(); ++i) {
      CHECK(h.data()[i] == (beta.data()[i] >= 0.0 ? 1.0 : -1.0));
    }
  }
}

TEST_CASE("inference-mode normalization is deterministic") {
  LstmParams p = random_lstm(4, 4, 11);
  BatchNormState bn;
  bn.init(4);
  Matrix x = random_matrix(2, 4, 12);
  Matrix h_prev(2, 4, 1.0), c_prev = random_matrix(2, 4, 13);
  Matrix h1, c1, b1, h2, c2, b2;
  binary_lstm_step(p, bn, BnMode::kInference, Binarize::kSign, nullptr, x, h_prev, c_prev,
                   h1, c1, b1, nullptr);
  binary_lstm_step(p, bn, BnMode::kInference, Binarize::kSign, nullptr, x, h_prev, c_prev,
                   h2, c2, b2, nullptr);
  CHECK(h1 == h2);
  CHECK(c1 == c2);
  CHECK(b1 == b2);
}

TEST_CASE("straight-through gradient is zero outside the clip region") {
  LstmParams p = random_lstm(3, 2, 14);
  BatchNormState bn;
  bn.init(2);
  Matrix x = random_matrix(2, 3, 15);
  Matrix h_prev(2, 2, 1.0), c_prev = random_matrix(2, 2, 16);
  Matrix h, c, beta;
  BinaryStepCache cache;
  binary_lstm_step(p, bn, BnMode::kInference, Binarize::kSign, nullptr, x, h_prev, c_prev,
                   h, c, beta, &cache);

  // The recurrence keeps |beta| < 1, so force the clipped case in the cache.
  cache.beta.fill(1.5);
  cache.ste.fill(0.0);

  LstmGrads g;
  g.init_like(p);
  Matrix dh(2, 2, 1.0), dc_in(2, 2, 0.0);
  Matrix dx(2, 3, 0.0), dh_prev(2, 2, 0.0), dc_prev(2, 2, 0.0);
  Matrix empty;
  binary_lstm_step_backward(p, bn, cache, dh, empty, dc_in, g, dx, dh_prev, dc_prev);
  for (std::size_t i = 0; i < g.w_in.size(); ++i) CHECK(g.w_in.data()[i] == 0.0);
  for (std::size_t i = 0; i < g.w_rec.size(); ++i) CHECK(g.w_rec.data()[i] == 0.0);
  for (double b : g.bias) CHECK(b == 0.0);
  for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx.data()[i] == 0.0);
}

TEST_CASE("zero loss gives zero gradients") {
  // L2 loss of an output against itself.
  Matrix pred = random_matrix(3, 4, 17);
  Matrix grad(3, 4, 0.0);
  const double loss = l2_norm_loss_rows(pred, pred, &grad);
  CHECK(loss == 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad.data()[i] == 0.0);
}

TEST_CASE("lstm gradients match central finite differences") {
  // Two stacked standard cells over 3 timesteps, loss = sum of row norms of
  // the last output against a fixed target. Every parameter is checked.
  LstmParams p1 = random_lstm(3, 4, 18);
  LstmParams p2 = random_lstm(4, 3, 19);
  const std::size_t batch = 2, t_steps = 3;
  std::vector<Matrix> inputs;
  for (std::size_t t = 0; t < t_steps; ++t) inputs.push_back(random_matrix(batch, 3, 20 + t));
  const Matrix target = random_matrix(batch, 3, 30);

  auto run_loss = [&](std::vector<LstmStepCache>* c1, std::vector<LstmStepCache>* c2,
                      Matrix* last_h) {
    Matrix h1(batch, 4, 0.0), c1m(batch, 4, 0.0);
    Matrix h2(batch, 3, 0.0), c2m(batch, 3, 0.0);
    for (std::size_t t = 0; t < t_steps; ++t) {
      Matrix h1n, c1n, h2n, c2n;
      lstm_step(p1, inputs[t], h1, c1m, h1n, c1n, c1 ? &(*c1)[t] : nullptr);
      lstm_step(p2, h1n, h2, c2m, h2n, c2n, c2 ? &(*c2)[t] : nullptr);
      h1 = std::move(h1n);
      c1m = std::move(c1n);
      h2 = std::move(h2n);
      c2m = std::move(c2n);
    }
    if (last_h) *last_h = h2;
    return l2_norm_loss_rows(h2, target, nullptr);
  };

  // Analytic gradients via backpropagation through time.
  std::vector<LstmStepCache> cache1(t_steps), cache2(t_steps);
  Matrix last_h;
  run_loss(&cache1, &cache2, &last_h);
  Matrix dh2(batch, 3, 0.0);
  l2_norm_loss_rows(last_h, target, &dh2);

  LstmGrads g1, g2;
  g1.init_like(p1);
  g2.init_like(p2);
  std::vector<Matrix> dx2(t_steps);
  Matrix dc2(batch, 3, 0.0);
  for (std::size_t t = t_steps; t-- > 0;) {
    dx2[t].resize(batch, 4, 0.0);
    Matrix dh_prev(batch, 3, 0.0), dc_prev(batch, 3, 0.0);
    lstm_step_backward(p2, cache2[t], dh2, dc2, g2, dx2[t], dh_prev, dc_prev);
    dh2 = std::move(dh_prev);
    dc2 = std::move(dc_prev);
  }
  Matrix dh1(batch, 4, 0.0), dc1(batch, 4, 0.0);
  for (std::size_t t = t_steps; t-- > 0;) {
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1.data()[i] += dx2[t].data()[i];
    Matrix dh_prev(batch, 4, 0.0), dc_prev(batch, 4, 0.0), dx_sink(batch, 3, 0.0);
    lstm_step_backward(p1, cache1[t], dh1, dc1, g1, dx_sink, dh_prev, dc_prev);
    dh1 = std::move(dh_prev);
    dc1 = std::move(dc_prev);
  }

  auto params = views(p1, "l1");
  auto params2 = views(p2, "l2");
  params.insert(params.end(), params2.begin(), params2.end());
  auto grads = views(g1, "l1");
  auto grads2 = views(g2, "l2");
  grads.insert(grads.end(), grads2.begin(), grads2.end());

  std::size_t total = 0;
  for (const auto& v : params) total += v.n;
  CHECK(total <= 500);

  const auto report = oracles::fd_check(
      params, grads, [&] { return run_loss(nullptr, nullptr, nullptr); });
  CHECK(report.checked == total);
  if (!report.ok()) {
    for (const auto& f : report.failures) {
      MESSAGE(f.param, "[", f.index, "] analytic=", f.analytic, " numeric=", f.numeric);
    }
  }
  CHECK(report.ok());
}

TEST_CASE("sgd_step basics") {
  SUBCASE("zero learning rate leaves parameters unchanged") {
    std::vector<double> p = {1.0, -2.0, 3.0};
    std::vector<double> g = {0.5, 0.5, 0.5};
    std::vector<SpanView> pv = {{p.data(), p.size(), "p"}};
    std::vector<SpanView> gv = {{g.data(), g.size(), "g"}};
    sgd_step(pv, gv, 0.0);
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  }
  SUBCASE("single scalar arithmetic") {
    std::vector<double> p = {1.0};
    std::vector<double> g = {2.0};
    std::vector<SpanView> pv = {{p.data(), 1, "p"}};
    std::vector<SpanView> gv = {{g.data(), 1, "g"}};
    sgd_step(pv, gv, 0.1);
    CHECK(p[0] == doctest::Approx(0.8));
  }
  SUBCASE("monotone descent on a quadratic") {
    // loss(p) = (p - 3)^2 has gradient 2 (p - 3); small steps only descend.
    double p = 0.0;
    double prev_loss = (p - 3.0) * (p - 3.0);
    for (int step = 0; step < 50; ++step) {
      double g = 2.0 * (p - 3.0);
      std::vector<SpanView> pv = {{&p, 1, "p"}};
      std::vector<SpanView> gv = {{&g, 1, "g"}};
      sgd_step(pv, gv, 0.05);
      const double loss = (p - 3.0) * (p - 3.0);
      CHECK(loss < prev_loss);
      prev_loss = loss;
    }
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  std::vector<double> g = {3.0, 4.0};  // norm 5
  std::vector<SpanView> gv = {{g.data(), g.size(), "g"}};
  clip_global_norm(gv, 5.0);
  CHECK(g[0] == doctest::Approx(3.0));
  clip_global_norm(gv, 2.5);
  CHECK(global_norm(gv) == doctest::Approx(2.5));
}

TEST_CASE("no NaN or Inf on bounded inputs") {
  for (int trial = 0; trial < 10; ++trial) {
    LstmParams p = random_lstm(5, 6, 40 + trial);
    BatchNormState bn;
    bn.init(6);
    Matrix x = random_matrix(3, 5, 50 + trial, 10.0);  // |x| <= 10
    Matrix h_prev(3, 6);
    Rng rng(60 + trial);
    for (std::size_t i = 0; i < h_prev.size(); ++i) {
      h_prev.data()[i] = (rng.next_u64() & 1) ? 1.0 : -1.0;
    }
    Matrix c_prev = random_matrix(3, 6, 70 + trial, 10.0);

    Matrix h, c, beta;
    BinaryStepCache cache;
    binary_lstm_step(p, bn, BnMode::kTrain, Binarize::kSign, &bn, x, h_prev, c_prev, h, c,
                     beta, &cache);
    CHECK(h.all_finite());
    CHECK(c.all_finite());
    CHECK(beta.all_finite());

    LstmGrads g;
    g.init_like(p);
    Matrix dh = random_matrix(3, 6, 80 + trial);
    Matrix dc_in(3, 6, 0.0), dx(3, 5, 0.0), dh_prev(3, 6, 0.0), dc_prev(3, 6, 0.0);
    Matrix empty;
    binary_lstm_step_backward(p, bn, cache, dh, empty, dc_in, g, dx, dh_prev, dc_prev);
    CHECK(g.w_in.all_finite());
    CHECK(g.w_rec.all_finite());
    CHECK(dx.all_finite());
    CHECK(dh_prev.all_finite());
    CHECK(dc_prev.all_finite());
  }
}
