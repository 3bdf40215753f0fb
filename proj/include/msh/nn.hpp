// Recurrent network kernel: dense affine maps, the LSTM cell, the binarized
// LSTM cell with cell-state batch normalization and straight-through sign,
// L2 losses and plain gradient descent. Every forward has a hand-derived
// backward; tests/oracles.hpp checks them against central finite differences.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msh/matrix.hpp"
#include "msh/rng.hpp"

namespace msh {

// Gate rows are stacked [input, forget, candidate, output], H rows each.
struct LstmParams {
  int input_size = 0;
  int hidden_size = 0;
  Matrix w_in;               // 4H x input_size
  Matrix w_rec;              // 4H x hidden_size
  std::vector<double> bias;  // 4H

  void init(int input, int hidden, Rng& rng);
  std::size_t param_count() const;
};

struct LstmGrads {
  Matrix w_in;
  Matrix w_rec;
  std::vector<double> bias;

  void init_like(const LstmParams& p);
  void zero();
};

// Output projection used by the decoders.
struct DenseParams {
  int input_size = 0;
  int output_size = 0;
  Matrix w;                  // output_size x input_size
  std::vector<double> bias;  // output_size

  void init(int input, int output, Rng& rng);
  std::size_t param_count() const;
};

struct DenseGrads {
  Matrix w;
  std::vector<double> bias;

  void init_like(const DenseParams& p);
  void zero();
};

// Running statistics of the binarized layer's cell state, one per unit.
// Normalization carries no learnable affine: output is (c - mean) / std.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  void init(int units);
};

enum class BnMode { kTrain, kInference };

// kSign is the production path. kPassthrough replaces sign with identity in
// the forward only; the backward is shared. On |beta| <= 1 the straight-
// through factor equals the identity's derivative, which is what makes the
// finite-difference suite exact for the full loss paths.
enum class Binarize { kSign, kPassthrough };

struct LstmStepCache {
  Matrix x, h_prev, c_prev;
  Matrix gate_i, gate_f, gate_g, gate_o;
  Matrix c, tanh_c;
};

struct BnCache {
  bool used_batch_stats = false;
  std::vector<double> inv_std;  // per unit
  Matrix xhat;
};

struct BinaryStepCache {
  Matrix x, h_prev, c_prev;
  Matrix gate_i, gate_f, gate_g, gate_o;
  Matrix c;
  BnCache bn;
  Matrix tanh_cn;
  Matrix beta;
  Matrix ste;  // 1 where |beta| <= 1
};

// Standard LSTM recurrence. All matrices are batch-major (rows = batch).
// cache may be null for inference.
void lstm_step(const LstmParams& p, const Matrix& x, const Matrix& h_prev,
               const Matrix& c_prev, Matrix& h, Matrix& c, LstmStepCache* cache);

// Accumulates parameter gradients into g and input-side gradients into
// dx/dh_prev/dc_prev (all +=; callers zero them at the right times).
void lstm_step_backward(const LstmParams& p, const LstmStepCache& cache, const Matrix& dh,
                        const Matrix& dc_in, LstmGrads& g, Matrix& dx, Matrix& dh_prev,
                        Matrix& dc_prev);

// Binarized LSTM step: cell state is batch-normalized, beta = o * tanh(bn(c))
// is the prebitcode, h = sign(beta) with sign(0) = +1. In kTrain mode with
// batch size 1 the batch statistics are degenerate, so normalization falls
// back to the running stats and no update happens. bn_update, when non-null,
// receives the momentum update of the running stats (training only).
void binary_lstm_step(const LstmParams& p, const BatchNormState& bn, BnMode mode,
                      Binarize binarize, BatchNormState* bn_update, const Matrix& x,
                      const Matrix& h_prev, const Matrix& c_prev, Matrix& h, Matrix& c,
                      Matrix& beta, BinaryStepCache* cache);

// dh is the gradient w.r.t. the binarized output (straight-through applies);
// dbeta_direct, when non-empty, adds a gradient that reaches beta without
// passing through the sign (the look-ahead bitcode loss needs this).
void binary_lstm_step_backward(const LstmParams& p, const BatchNormState& bn,
                               const BinaryStepCache& cache, const Matrix& dh,
                               const Matrix& dbeta_direct, const Matrix& dc_in,
                               LstmGrads& g, Matrix& dx, Matrix& dh_prev, Matrix& dc_prev);

// y = x * w^T + bias
void dense_forward(const DenseParams& p, const Matrix& x, Matrix& y);
void dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy, DenseGrads& g,
                    Matrix& dx);

// Sum over rows of the Euclidean norm ||pred_row - target_row||. When dpred
// is non-null the gradient is accumulated into it (zero residual rows get a
// zero subgradient).
double l2_norm_loss_rows(const Matrix& pred, const Matrix& target, Matrix* dpred);

// Sum over rows of the squared norm ||pred_row - target_row||^2; the
// gradient 2 (pred - target) scales with the residual, which is what the
// trainers descend.
double l2_squared_loss_rows(const Matrix& pred, const Matrix& target, Matrix* dpred);

// Flat views over parameter or gradient storage, in a stable order shared by
// the optimizer, the serializer and the gradient checker.
struct SpanView {
  double* data = nullptr;
  std::size_t n = 0;
  std::string name;
};

std::vector<SpanView> views(LstmParams& p, const std::string& prefix);
std::vector<SpanView> views(LstmGrads& g, const std::string& prefix);
std::vector<SpanView> views(DenseParams& p, const std::string& prefix);
std::vector<SpanView> views(DenseGrads& g, const std::string& prefix);

double global_norm(const std::vector<SpanView>& grads);

// Scales gradients in place so their global norm is at most max_norm.
void clip_global_norm(std::vector<SpanView>& grads, double max_norm);

// params <- params - lr * grads, pairwise over matching views.
void sgd_step(std::vector<SpanView>& params, const std::vector<SpanView>& grads, double lr);

}  // namespace msh
