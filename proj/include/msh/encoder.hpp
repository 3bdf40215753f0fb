// The stacked recurrent binary encoder, its twin reconstruction decoders,
// streaming state for clip-by-clip encoding, and model (de)serialization.
//
// Architecture: encoder layer 1 is a standard LSTM with 2*n_bits units,
// layer 2 a binarized LSTM with n_bits units whose hidden state is the
// bitcode. Each decoder branch has two LSTM layers (n_bits then 2*n_bits
// units) and a linear projection to the feature dimension; the bitcode is
// the input at every decoder step and initializes the first layer's hidden
// state.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msh/bitcode.hpp"
#include "msh/matrix.hpp"
#include "msh/nn.hpp"

namespace msh {

struct EncoderModel {
  int n_bits = 0;
  int n_f = 0;
  LstmParams layer1;  // n_f -> 2*n_bits
  LstmParams layer2;  // 2*n_bits -> n_bits, binarized
  BatchNormState bn;  // over layer-2 cell state

  void init(int bits, int feature_dim, std::uint64_t seed);
  std::vector<SpanView> param_views();  // weights only; running stats are not trained
};

struct DecoderBranch {
  LstmParams layer1;  // n_bits -> n_bits
  LstmParams layer2;  // n_bits -> 2*n_bits
  DenseParams proj;   // 2*n_bits -> n_f
};

struct DecoderModel {
  int n_bits = 0;
  int n_f = 0;
  DecoderBranch fwd;  // reconstructs the input order
  DecoderBranch rev;  // reconstructs the reversed order

  void init(int bits, int feature_dim, std::uint64_t seed);
  std::vector<SpanView> param_views();
};

struct EncoderGrads {
  LstmGrads layer1, layer2;
  void init_like(const EncoderModel& m);
  void zero();
  std::vector<SpanView> grad_views();
};

struct DecoderGrads {
  LstmGrads fwd_l1, fwd_l2, rev_l1, rev_l2;
  DenseGrads fwd_proj, rev_proj;
  void init_like(const DecoderModel& m);
  void zero();
  std::vector<SpanView> grad_views();
};

// Persistent per-stream recurrent state; one clip advances it by one step.
struct EncoderState {
  Matrix h1, c1;    // 1 x 2*n_bits
  Matrix h2, c2;    // 1 x n_bits; h2 holds the current bitcode as +-1
  Matrix beta;      // 1 x n_bits, prebitcode of the latest step
  std::uint32_t steps = 0;
};

EncoderState make_state(const EncoderModel& m);

// Advances one clip (inference-mode normalization) and returns the bitcode
// for the prefix seen so far. O(1) work per clip.
Bitcode encode_step(const EncoderModel& m, EncoderState& state, const double* clip,
                    std::size_t dim);

struct EncodeResult {
  Bitcode final;
  std::vector<Bitcode> per_step;
  std::vector<double> prebitcode;
};

// Runs a whole T x n_f clip matrix through a fresh state.
EncodeResult encode_sequence(const EncoderModel& m, const Matrix& clips);

// Runs both decoder branches for T steps from a bitcode. Returns
// (forward-order frames, reverse-order frames), each T x n_f.
std::pair<Matrix, Matrix> decode(const DecoderModel& d, const Bitcode& code, std::size_t t_steps);

// ---- batched forward/backward tapes (training and gradient checks) -------

class EncoderTape {
 public:
  // steps[t] is the B x n_f input at timestep t. bn_update, when non-null,
  // receives running-stat updates (primary training).
  void forward(const EncoderModel& m, const std::vector<Matrix>& steps, BnMode mode,
               Binarize binarize, BatchNormState* bn_update);

  const Matrix& bitcode() const { return bitcode_; }      // B x n_bits
  const Matrix& prebitcode() const { return prebitcode_; }  // B x n_bits

  // Either gradient may be empty when unused.
  void backward(const EncoderModel& m, const Matrix& d_bitcode, const Matrix& d_beta,
                EncoderGrads& grads) const;

 private:
  std::vector<LstmStepCache> l1_;
  std::vector<BinaryStepCache> l2_;
  Matrix bitcode_, prebitcode_;
  std::size_t batch_ = 0;
};

class DecoderTape {
 public:
  void forward(const DecoderModel& d, const Matrix& code, std::size_t t_steps);

  const std::vector<Matrix>& fwd_frames() const { return fwd_out_; }
  const std::vector<Matrix>& rev_frames() const { return rev_out_; }

  // d_code accumulates the gradient reaching the bitcode input.
  void backward(const DecoderModel& d, const std::vector<Matrix>& d_fwd,
                const std::vector<Matrix>& d_rev, DecoderGrads& grads, Matrix& d_code) const;

 private:
  struct BranchTape {
    std::vector<LstmStepCache> l1, l2;
    std::vector<Matrix> h2;  // projection inputs
  };
  void branch_forward(const DecoderBranch& b, const Matrix& code, std::size_t t_steps,
                      BranchTape& tape, std::vector<Matrix>& out) const;
  void branch_backward(const DecoderBranch& b, const BranchTape& tape,
                       const std::vector<Matrix>& d_out, LstmGrads& g1, LstmGrads& g2,
                       DenseGrads& gp, Matrix& d_code) const;

  BranchTape fwd_tape_, rev_tape_;
  std::vector<Matrix> fwd_out_, rev_out_;
  Matrix code_;
};

// ---- model files ----------------------------------------------------------
// Binary format, little-endian. Header: magic "MSH1", u32 content flags
// (bit 0 encoder, bit 1 decoders), u32 n_bits, u32 n_f, u32 layer1 units,
// u32 layer2 units. Payload: f32 blocks, row-major, in param_views() order,
// then the batch-norm running mean and variance for the encoder.

struct ModelFile {
  EncoderModel encoder;
  std::optional<DecoderModel> decoders;
};

void save_model(const std::string& path, const EncoderModel& enc, const DecoderModel* dec);
ModelFile load_model(const std::string& path);

}  // namespace msh
