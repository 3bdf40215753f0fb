#include "msh/nn.hpp"

#include <cmath>

#include "msh/kernels.hpp"

namespace msh {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// pre = x * w_in^T + h_prev * w_rec^T + bias, then split/squash the gates.
void gate_forward(const LstmParams& p, const Matrix& x, const Matrix& h_prev, Matrix& gi,
                  Matrix& gf, Matrix& gg, Matrix& go) {
  const std::size_t b = x.rows();
  const std::size_t h = static_cast<std::size_t>(p.hidden_size);
  Matrix pre(b, 4 * h, 0.0);
  kernels::mul_nt(x, p.w_in, pre);
  kernels::mul_nt(h_prev, p.w_rec, pre);
  kernels::add_row_broadcast(pre, p.bias);

  gi.resize(b, h);
  gf.resize(b, h);
  gg.resize(b, h);
  go.resize(b, h);
  for (std::size_t r = 0; r < b; ++r) {
    const double* pr = pre.row(r);
    for (std::size_t j = 0; j < h; ++j) {
      gi(r, j) = sigmoid(pr[j]);
      gf(r, j) = sigmoid(pr[h + j]);
      gg(r, j) = std::tanh(pr[2 * h + j]);
      go(r, j) = sigmoid(pr[3 * h + j]);
    }
  }
}

// Shared tail of both cells' backward passes: from gate gradients down to
// parameter and input gradients.
void gate_backward(const LstmParams& p, const Matrix& x, const Matrix& h_prev,
                   const Matrix& gi, const Matrix& gf, const Matrix& gg, const Matrix& go,
                   const Matrix& dgi, const Matrix& dgf, const Matrix& dgg,
                   const Matrix& dgo, LstmGrads& g, Matrix& dx, Matrix& dh_prev) {
  const std::size_t b = x.rows();
  const std::size_t h = static_cast<std::size_t>(p.hidden_size);
  Matrix dpre(b, 4 * h, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    double* dp = dpre.row(r);
    for (std::size_t j = 0; j < h; ++j) {
      const double i = gi(r, j), f = gf(r, j), gc = gg(r, j), o = go(r, j);
      dp[j] = dgi(r, j) * i * (1.0 - i);
      dp[h + j] = dgf(r, j) * f * (1.0 - f);
      dp[2 * h + j] = dgg(r, j) * (1.0 - gc * gc);
      dp[3 * h + j] = dgo(r, j) * o * (1.0 - o);
    }
  }
  kernels::mul_tn(dpre, x, g.w_in);
  kernels::mul_tn(dpre, h_prev, g.w_rec);
  kernels::col_sum_accum(dpre, g.bias);
  kernels::mul_nn(dpre, p.w_in, dx);
  kernels::mul_nn(dpre, p.w_rec, dh_prev);
}

}  // namespace

void LstmParams::init(int input, int hidden, Rng& rng) {
  input_size = input;
  hidden_size = hidden;
  const std::size_t h4 = 4 * static_cast<std::size_t>(hidden);
  w_in.resize(h4, input);
  w_rec.resize(h4, hidden);
  bias.assign(h4, 0.0);
  const double s_in = 1.0 / std::sqrt(static_cast<double>(input));
  const double s_rec = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t i = 0; i < w_in.size(); ++i) w_in.data()[i] = rng.uniform(-s_in, s_in);
  for (std::size_t i = 0; i < w_rec.size(); ++i) w_rec.data()[i] = rng.uniform(-s_rec, s_rec);
  // Forget gate opens at 1 so cell state survives early training.
  for (int j = 0; j < hidden; ++j) bias[hidden + j] = 1.0;
}

std::size_t LstmParams::param_count() const { return w_in.size() + w_rec.size() + bias.size(); }

void LstmGrads::init_like(const LstmParams& p) {
  w_in.resize(p.w_in.rows(), p.w_in.cols());
  w_rec.resize(p.w_rec.rows(), p.w_rec.cols());
  bias.assign(p.bias.size(), 0.0);
}

void LstmGrads::zero() {
  w_in.fill(0.0);
  w_rec.fill(0.0);
  bias.assign(bias.size(), 0.0);
}

void DenseParams::init(int input, int output, Rng& rng) {
  input_size = input;
  output_size = output;
  w.resize(output, input);
  bias.assign(output, 0.0);
  const double s = 1.0 / std::sqrt(static_cast<double>(input));
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-s, s);
}

std::size_t DenseParams::param_count() const { return w.size() + bias.size(); }

void DenseGrads::init_like(const DenseParams& p) {
  w.resize(p.w.rows(), p.w.cols());
  bias.assign(p.bias.size(), 0.0);
}

void DenseGrads::zero() {
  w.fill(0.0);
  bias.assign(bias.size(), 0.0);
}

void BatchNormState::init(int units) {
  running_mean.assign(units, 0.0);
  running_var.assign(units, 1.0);
}

void lstm_step(const LstmParams& p, const Matrix& x, const Matrix& h_prev,
               const Matrix& c_prev, Matrix& h, Matrix& c, LstmStepCache* cache) {
  const std::size_t b = x.rows();
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  if (x.cols() != static_cast<std::size_t>(p.input_size))
    throw ShapeError("lstm_step: input width does not match params");
  check_shape(h_prev, b, hs, "lstm_step h_prev");
  check_shape(c_prev, b, hs, "lstm_step c_prev");

  Matrix gi, gf, gg, go;
  gate_forward(p, x, h_prev, gi, gf, gg, go);

  c.resize(b, hs);
  h.resize(b, hs);
  Matrix tanh_c(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      const double cv = gf(r, j) * c_prev(r, j) + gi(r, j) * gg(r, j);
      c(r, j) = cv;
      const double t = std::tanh(cv);
      tanh_c(r, j) = t;
      h(r, j) = go(r, j) * t;
    }
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_g = std::move(gg);
    cache->gate_o = std::move(go);
    cache->c = c;
    cache->tanh_c = std::move(tanh_c);
  }
}

void lstm_step_backward(const LstmParams& p, const LstmStepCache& cache, const Matrix& dh,
                        const Matrix& dc_in, LstmGrads& g, Matrix& dx, Matrix& dh_prev,
                        Matrix& dc_prev) {
  const std::size_t b = cache.x.rows();
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  Matrix dgi(b, hs), dgf(b, hs), dgg(b, hs), dgo(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      const double t = cache.tanh_c(r, j);
      const double dc = dc_in(r, j) + dh(r, j) * cache.gate_o(r, j) * (1.0 - t * t);
      dgo(r, j) = dh(r, j) * t;
      dgi(r, j) = dc * cache.gate_g(r, j);
      dgg(r, j) = dc * cache.gate_i(r, j);
      dgf(r, j) = dc * cache.c_prev(r, j);
      dc_prev(r, j) += dc * cache.gate_f(r, j);
    }
  }
  gate_backward(p, cache.x, cache.h_prev, cache.gate_i, cache.gate_f, cache.gate_g,
                cache.gate_o, dgi, dgf, dgg, dgo, g, dx, dh_prev);
}

void binary_lstm_step(const LstmParams& p, const BatchNormState& bn, BnMode mode,
                      Binarize binarize, BatchNormState* bn_update, const Matrix& x,
                      const Matrix& h_prev, const Matrix& c_prev, Matrix& h, Matrix& c,
                      Matrix& beta, BinaryStepCache* cache) {
  const std::size_t b = x.rows();
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  if (x.cols() != static_cast<std::size_t>(p.input_size))
    throw ShapeError("binary_lstm_step: input width does not match params");
  check_shape(h_prev, b, hs, "binary_lstm_step h_prev");
  check_shape(c_prev, b, hs, "binary_lstm_step c_prev");
  if (bn.running_mean.size() != hs) throw ShapeError("binary_lstm_step: batch-norm width");

  Matrix gi, gf, gg, go;
  gate_forward(p, x, h_prev, gi, gf, gg, go);

  c.resize(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      c(r, j) = gf(r, j) * c_prev(r, j) + gi(r, j) * gg(r, j);
    }
  }

  // Batch statistics need more than one row; otherwise normalize with the
  // running stats so a single stream still carries signal.
  const bool batch_stats = (mode == BnMode::kTrain && b > 1);
  BnCache bncache;
  bncache.used_batch_stats = batch_stats;
  bncache.inv_std.assign(hs, 0.0);
  bncache.xhat.resize(b, hs);
  if (batch_stats) {
    for (std::size_t j = 0; j < hs; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < b; ++r) mean += c(r, j);
      mean /= static_cast<double>(b);
      double var = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        const double d = c(r, j) - mean;
        var += d * d;
      }
      var /= static_cast<double>(b);
      const double inv = 1.0 / std::sqrt(var + bn.epsilon);
      bncache.inv_std[j] = inv;
      for (std::size_t r = 0; r < b; ++r) bncache.xhat(r, j) = (c(r, j) - mean) * inv;
      if (bn_update != nullptr) {
        bn_update->running_mean[j] =
            bn.momentum * bn_update->running_mean[j] + (1.0 - bn.momentum) * mean;
        bn_update->running_var[j] =
            bn.momentum * bn_update->running_var[j] + (1.0 - bn.momentum) * var;
      }
    }
  } else {
    for (std::size_t j = 0; j < hs; ++j) {
      const double inv = 1.0 / std::sqrt(bn.running_var[j] + bn.epsilon);
      bncache.inv_std[j] = inv;
      for (std::size_t r = 0; r < b; ++r) {
        bncache.xhat(r, j) = (c(r, j) - bn.running_mean[j]) * inv;
      }
    }
  }

  beta.resize(b, hs);
  h.resize(b, hs);
  Matrix tanh_cn(b, hs);
  Matrix ste(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      const double t = std::tanh(bncache.xhat(r, j));
      tanh_cn(r, j) = t;
      const double bv = go(r, j) * t;
      beta(r, j) = bv;
      ste(r, j) = (std::fabs(bv) <= 1.0) ? 1.0 : 0.0;
      h(r, j) = (binarize == Binarize::kSign) ? (bv >= 0.0 ? 1.0 : -1.0) : bv;
    }
  }

  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_g = std::move(gg);
    cache->gate_o = std::move(go);
    cache->c = c;
    cache->bn = std::move(bncache);
    cache->tanh_cn = std::move(tanh_cn);
    cache->beta = beta;
    cache->ste = std::move(ste);
  }
}

void binary_lstm_step_backward(const LstmParams& p, const BatchNormState& bn,
                               const BinaryStepCache& cache, const Matrix& dh,
                               const Matrix& dbeta_direct, const Matrix& dc_in,
                               LstmGrads& g, Matrix& dx, Matrix& dh_prev, Matrix& dc_prev) {
  const std::size_t b = cache.x.rows();
  const std::size_t hs = static_cast<std::size_t>(p.hidden_size);
  const bool has_direct = dbeta_direct.size() > 0;

  Matrix dxhat(b, hs), dgo(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      double dbeta = dh(r, j) * cache.ste(r, j);
      if (has_direct) dbeta += dbeta_direct(r, j);
      const double t = cache.tanh_cn(r, j);
      dgo(r, j) = dbeta * t;
      dxhat(r, j) = dbeta * cache.gate_o(r, j) * (1.0 - t * t);
    }
  }

  // Backward through the normalization into the raw cell state.
  Matrix dc(b, hs);
  if (cache.bn.used_batch_stats) {
    const double invb = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < hs; ++j) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t r = 0; r < b; ++r) {
        sum_d += dxhat(r, j);
        sum_dx += dxhat(r, j) * cache.bn.xhat(r, j);
      }
      const double inv = cache.bn.inv_std[j];
      for (std::size_t r = 0; r < b; ++r) {
        dc(r, j) = inv * (dxhat(r, j) - invb * sum_d - invb * cache.bn.xhat(r, j) * sum_dx);
      }
    }
  } else {
    for (std::size_t j = 0; j < hs; ++j) {
      const double inv = cache.bn.inv_std[j];
      for (std::size_t r = 0; r < b; ++r) dc(r, j) = dxhat(r, j) * inv;
    }
  }
  (void)bn;

  Matrix dgi(b, hs), dgf(b, hs), dgg(b, hs);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < hs; ++j) {
      const double dcv = dc(r, j) + dc_in(r, j);
      dgi(r, j) = dcv * cache.gate_g(r, j);
      dgg(r, j) = dcv * cache.gate_i(r, j);
      dgf(r, j) = dcv * cache.c_prev(r, j);
      dc_prev(r, j) += dcv * cache.gate_f(r, j);
    }
  }
  gate_backward(p, cache.x, cache.h_prev, cache.gate_i, cache.gate_f, cache.gate_g,
                cache.gate_o, dgi, dgf, dgg, dgo, g, dx, dh_prev);
}

void dense_forward(const DenseParams& p, const Matrix& x, Matrix& y) {
  if (x.cols() != static_cast<std::size_t>(p.input_size))
    throw ShapeError("dense_forward: input width does not match params");
  y.resize(x.rows(), p.output_size, 0.0);
  kernels::mul_nt(x, p.w, y);
  kernels::add_row_broadcast(y, p.bias);
}

void dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy, DenseGrads& g,
                    Matrix& dx) {
  kernels::mul_tn(dy, x, g.w);
  kernels::col_sum_accum(dy, g.bias);
  kernels::mul_nn(dy, p.w, dx);
}

double l2_norm_loss_rows(const Matrix& pred, const Matrix& target, Matrix* dpred) {
  if (!pred.same_shape(target)) throw ShapeError("l2_norm_loss_rows: shape mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = pred(r, c) - target(r, c);
      sq += d * d;
    }
    const double norm = std::sqrt(sq);
    total += norm;
    if (dpred != nullptr && norm > 1e-12) {
      const double inv = 1.0 / norm;
      for (std::size_t c = 0; c < pred.cols(); ++c) {
        (*dpred)(r, c) += (pred(r, c) - target(r, c)) * inv;
      }
    }
  }
  return total;
}

double l2_squared_loss_rows(const Matrix& pred, const Matrix& target, Matrix* dpred) {
  if (!pred.same_shape(target)) throw ShapeError("l2_squared_loss_rows: shape mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < pred.rows(); ++r) {
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = pred(r, c) - target(r, c);
      total += d * d;
      if (dpred != nullptr) (*dpred)(r, c) += 2.0 * d;
    }
  }
  return total;
}

namespace {
SpanView view_of(Matrix& m, std::string name) { return SpanView{m.data(), m.size(), std::move(name)}; }
SpanView view_of(std::vector<double>& v, std::string name) {
  return SpanView{v.data(), v.size(), std::move(name)};
}
}  // namespace

std::vector<SpanView> views(LstmParams& p, const std::string& prefix) {
  return {view_of(p.w_in, prefix + ".w_in"), view_of(p.w_rec, prefix + ".w_rec"),
          view_of(p.bias, prefix + ".bias")};
}

std::vector<SpanView> views(LstmGrads& g, const std::string& prefix) {
  return {view_of(g.w_in, prefix + ".w_in"), view_of(g.w_rec, prefix + ".w_rec"),
          view_of(g.bias, prefix + ".bias")};
}

std::vector<SpanView> views(DenseParams& p, const std::string& prefix) {
  return {view_of(p.w, prefix + ".w"), view_of(p.bias, prefix + ".bias")};
}

std::vector<SpanView> views(DenseGrads& g, const std::string& prefix) {
  return {view_of(g.w, prefix + ".w"), view_of(g.bias, prefix + ".bias")};
}

double global_norm(const std::vector<SpanView>& grads) {
  double sq = 0.0;
  for (const auto& v : grads) {
    for (std::size_t i = 0; i < v.n; ++i) sq += v.data[i] * v.data[i];
  }
  return std::sqrt(sq);
}

void clip_global_norm(std::vector<SpanView>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& v : grads) {
    for (std::size_t i = 0; i < v.n; ++i) v.data[i] *= scale;
  }
}

void sgd_step(std::vector<SpanView>& params, const std::vector<SpanView>& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("sgd_step: view count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].n != grads[k].n) throw ShapeError("sgd_step: view size mismatch");
    for (std::size_t i = 0; i < params[k].n; ++i) {
      params[k].data[i] -= lr * grads[k].data[i];
    }
  }
}

}  // namespace msh
