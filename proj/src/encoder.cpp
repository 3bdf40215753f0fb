#include "msh/encoder.hpp"

#include <utility>

#include "binio.hpp"
#include "msh/rng.hpp"

namespace msh {

void EncoderModel::init(int bits, int feature_dim, std::uint64_t seed) {
  if (bits <= 0 || feature_dim <= 0) throw ConfigError("encoder sizes must be positive");
  n_bits = bits;
  n_f = feature_dim;
  Rng r1(seed, "encoder.layer1");
  Rng r2(seed, "encoder.layer2");
  layer1.init(n_f, 2 * n_bits, r1);
  layer2.init(2 * n_bits, n_bits, r2);
  bn.init(n_bits);
}

std::vector<SpanView> EncoderModel::param_views() {
  auto v = views(layer1, "enc.l1");
  auto v2 = views(layer2, "enc.l2");
  v.insert(v.end(), v2.begin(), v2.end());
  return v;
}

void DecoderModel::init(int bits, int feature_dim, std::uint64_t seed) {
  if (bits <= 0 || feature_dim <= 0) throw ConfigError("decoder sizes must be positive");
  n_bits = bits;
  n_f = feature_dim;
  Rng rf1(seed, "decoder.fwd.layer1");
  Rng rf2(seed, "decoder.fwd.layer2");
  Rng rfp(seed, "decoder.fwd.proj");
  Rng rr1(seed, "decoder.rev.layer1");
  Rng rr2(seed, "decoder.rev.layer2");
  Rng rrp(seed, "decoder.rev.proj");
  fwd.layer1.init(n_bits, n_bits, rf1);
  fwd.layer2.init(n_bits, 2 * n_bits, rf2);
  fwd.proj.init(2 * n_bits, n_f, rfp);
  rev.layer1.init(n_bits, n_bits, rr1);
  rev.layer2.init(n_bits, 2 * n_bits, rr2);
  rev.proj.init(2 * n_bits, n_f, rrp);
}

std::vector<SpanView> DecoderModel::param_views() {
  std::vector<SpanView> v;
  for (auto& part : {std::pair<DecoderBranch*, const char*>{&fwd, "dec.fwd"},
                     std::pair<DecoderBranch*, const char*>{&rev, "dec.rev"}}) {
    auto l1 = views(part.first->layer1, std::string(part.second) + ".l1");
    auto l2 = views(part.first->layer2, std::string(part.second) + ".l2");
    auto pr = views(part.first->proj, std::string(part.second) + ".proj");
    v.insert(v.end(), l1.begin(), l1.end());
    v.insert(v.end(), l2.begin(), l2.end());
    v.insert(v.end(), pr.begin(), pr.end());
  }
  return v;
}

void EncoderGrads::init_like(const EncoderModel& m) {
  layer1.init_like(m.layer1);
  layer2.init_like(m.layer2);
}

void EncoderGrads::zero() {
  layer1.zero();
  layer2.zero();
}

std::vector<SpanView> EncoderGrads::grad_views() {
  auto v = views(layer1, "enc.l1");
  auto v2 = views(layer2, "enc.l2");
  v.insert(v.end(), v2.begin(), v2.end());
  return v;
}

void DecoderGrads::init_like(const DecoderModel& m) {
  fwd_l1.init_like(m.fwd.layer1);
  fwd_l2.init_like(m.fwd.layer2);
  fwd_proj.init_like(m.fwd.proj);
  rev_l1.init_like(m.rev.layer1);
  rev_l2.init_like(m.rev.layer2);
  rev_proj.init_like(m.rev.proj);
}

void DecoderGrads::zero() {
  fwd_l1.zero();
  fwd_l2.zero();
  fwd_proj.zero();
  rev_l1.zero();
  rev_l2.zero();
  rev_proj.zero();
}

std::vector<SpanView> DecoderGrads::grad_views() {
  std::vector<SpanView> v;
  auto append = [&v](std::vector<SpanView> part) {
    v.insert(v.end(), part.begin(), part.end());
  };
  append(views(fwd_l1, "dec.fwd.l1"));
  append(views(fwd_l2, "dec.fwd.l2"));
  append(views(fwd_proj, "dec.fwd.proj"));
  append(views(rev_l1, "dec.rev.l1"));
  append(views(rev_l2, "dec.rev.l2"));
  append(views(rev_proj, "dec.rev.proj"));
  return v;
}

EncoderState make_state(const EncoderModel& m) {
  EncoderState s;
  s.h1.resize(1, 2 * m.n_bits, 0.0);
  s.c1.resize(1, 2 * m.n_bits, 0.0);
  s.h2.resize(1, m.n_bits, 0.0);
  s.c2.resize(1, m.n_bits, 0.0);
  s.beta.resize(1, m.n_bits, 0.0);
  s.steps = 0;
  return s;
}

Bitcode encode_step(const EncoderModel& m, EncoderState& state, const double* clip,
                    std::size_t dim) {
  if (dim != static_cast<std::size_t>(m.n_f)) {
    throw ShapeError("encode_step: clip dimension " + std::to_string(dim) +
                     " does not match model n_f " + std::to_string(m.n_f));
  }
  Matrix x(1, dim);
  for (std::size_t i = 0; i < dim; ++i) x(0, i) = clip[i];

  Matrix h1, c1;
  lstm_step(m.layer1, x, state.h1, state.c1, h1, c1, nullptr);
  Matrix h2, c2, beta;
  binary_lstm_step(m.layer2, m.bn, BnMode::kInference, Binarize::kSign, nullptr, h1,
                   state.h2, state.c2, h2, c2, beta, nullptr);

  state.h1 = std::move(h1);
  state.c1 = std::move(c1);
  state.h2 = std::move(h2);
  state.c2 = std::move(c2);
  state.beta = std::move(beta);
  state.steps += 1;
  return Bitcode::from_signs(state.h2.row(0), state.h2.cols());
}

EncodeResult encode_sequence(const EncoderModel& m, const Matrix& clips) {
  if (clips.rows() == 0) throw ShapeError("encode_sequence: empty sequence");
  EncoderState state = make_state(m);
  EncodeResult result;
  result.per_step.reserve(clips.rows());
  for (std::size_t t = 0; t < clips.rows(); ++t) {
    result.per_step.push_back(encode_step(m, state, clips.row(t), clips.cols()));
  }
  result.final = result.per_step.back();
  result.prebitcode.assign(state.beta.row(0), state.beta.row(0) + state.beta.cols());
  return result;
}

std::pair<Matrix, Matrix> decode(const DecoderModel& d, const Bitcode& code,
                                 std::size_t t_steps) {
  if (t_steps == 0) throw ShapeError("decode: need at least one step");
  if (code.n_bits() != static_cast<std::uint32_t>(d.n_bits)) {
    throw ShapeError("decode: bitcode width does not match decoder");
  }
  Matrix code_row(1, d.n_bits);
  const auto signs = code.to_signs();
  for (int i = 0; i < d.n_bits; ++i) code_row(0, i) = signs[i];

  DecoderTape tape;
  tape.forward(d, code_row, t_steps);
  Matrix fwd(t_steps, d.n_f), rev(t_steps, d.n_f);
  for (std::size_t t = 0; t < t_steps; ++t) {
    for (int c = 0; c < d.n_f; ++c) {
      fwd(t, c) = tape.fwd_frames()[t](0, c);
      rev(t, c) = tape.rev_frames()[t](0, c);
    }
  }
  return {std::move(fwd), std::move(rev)};
}

// ---- tapes -----------------------------------------------------------------

void EncoderTape::forward(const EncoderModel& m, const std::vector<Matrix>& steps,
                          BnMode mode, Binarize binarize, BatchNormState* bn_update) {
  if (steps.empty()) throw ShapeError("encoder forward: empty step list");
  const std::size_t b = steps[0].rows();
  batch_ = b;
  const std::size_t t_steps = steps.size();
  l1_.assign(t_steps, {});
  l2_.assign(t_steps, {});

  Matrix h1(b, 2 * m.n_bits, 0.0), c1(b, 2 * m.n_bits, 0.0);
  Matrix h2(b, m.n_bits, 0.0), c2(b, m.n_bits, 0.0);
  Matrix beta;
  for (std::size_t t = 0; t < t_steps; ++t) {
    Matrix h1n, c1n;
    lstm_step(m.layer1, steps[t], h1, c1, h1n, c1n, &l1_[t]);
    Matrix h2n, c2n;
    binary_lstm_step(m.layer2, m.bn, mode, binarize, bn_update, h1n, h2, c2, h2n, c2n,
                     beta, &l2_[t]);
    h1 = std::move(h1n);
    c1 = std::move(c1n);
    h2 = std::move(h2n);
    c2 = std::move(c2n);
  }
  bitcode_ = std::move(h2);
  prebitcode_ = std::move(beta);
}

void EncoderTape::backward(const EncoderModel& m, const Matrix& d_bitcode,
                           const Matrix& d_beta, EncoderGrads& grads) const {
  const std::size_t t_steps = l2_.size();
  const std::size_t b = batch_;
  const std::size_t h1u = static_cast<std::size_t>(2 * m.n_bits);
  const std::size_t h2u = static_cast<std::size_t>(m.n_bits);

  // Layer 2 walks time backwards first, collecting input gradients that then
  // seed layer 1's own backward walk.
  std::vector<Matrix> dx2(t_steps);
  Matrix dh2(b, h2u, 0.0), dc2(b, h2u, 0.0);
  if (d_bitcode.size() > 0) {
    check_shape(d_bitcode, b, h2u, "encoder backward d_bitcode");
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < h2u; ++j) dh2(r, j) += d_bitcode(r, j);
  }
  Matrix empty;
  for (std::size_t t = t_steps; t-- > 0;) {
    dx2[t].resize(b, h1u, 0.0);
    Matrix dh_prev(b, h2u, 0.0), dc_prev(b, h2u, 0.0);
    const Matrix& direct = (t == t_steps - 1) ? d_beta : empty;
    binary_lstm_step_backward(m.layer2, m.bn, l2_[t], dh2, direct, dc2, grads.layer2,
                              dx2[t], dh_prev, dc_prev);
    dh2 = std::move(dh_prev);
    dc2 = std::move(dc_prev);
  }

  Matrix dh1(b, h1u, 0.0), dc1(b, h1u, 0.0);
  Matrix dx_sink(b, l1_[0].x.cols(), 0.0);  // input features take no gradient
  for (std::size_t t = t_steps; t-- > 0;) {
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < h1u; ++j) dh1(r, j) += dx2[t](r, j);
    Matrix dh_prev(b, h1u, 0.0), dc_prev(b, h1u, 0.0);
    dx_sink.fill(0.0);
    lstm_step_backward(m.layer1, l1_[t], dh1, dc1, grads.layer1, dx_sink, dh_prev, dc_prev);
    dh1 = std::move(dh_prev);
    dc1 = std::move(dc_prev);
  }
}

void DecoderTape::branch_forward(const DecoderBranch& br, const Matrix& code,
                                 std::size_t t_steps, BranchTape& tape,
                                 std::vector<Matrix>& out) const {
  const std::size_t b = code.rows();
  tape.l1.assign(t_steps, {});
  tape.l2.assign(t_steps, {});
  tape.h2.assign(t_steps, {});
  out.assign(t_steps, {});

  Matrix h1 = code;  // bitcode seeds the first layer's hidden state
  Matrix c1(b, br.layer1.hidden_size, 0.0);
  Matrix h2(b, br.layer2.hidden_size, 0.0), c2(b, br.layer2.hidden_size, 0.0);
  for (std::size_t t = 0; t < t_steps; ++t) {
    Matrix h1n, c1n;
    lstm_step(br.layer1, code, h1, c1, h1n, c1n, &tape.l1[t]);
    Matrix h2n, c2n;
    lstm_step(br.layer2, h1n, h2, c2, h2n, c2n, &tape.l2[t]);
    dense_forward(br.proj, h2n, out[t]);
    tape.h2[t] = h2n;
    h1 = std::move(h1n);
    c1 = std::move(c1n);
    h2 = std::move(h2n);
    c2 = std::move(c2n);
  }
}

void DecoderTape::forward(const DecoderModel& d, const Matrix& code, std::size_t t_steps) {
  if (t_steps == 0) throw ShapeError("decoder forward: need at least one step");
  check_shape(code, code.rows(), static_cast<std::size_t>(d.n_bits), "decoder code");
  code_ = code;
  branch_forward(d.fwd, code, t_steps, fwd_tape_, fwd_out_);
  branch_forward(d.rev, code, t_steps, rev_tape_, rev_out_);
}

void DecoderTape::branch_backward(const DecoderBranch& br, const BranchTape& tape,
                                  const std::vector<Matrix>& d_out, LstmGrads& g1,
                                  LstmGrads& g2, DenseGrads& gp, Matrix& d_code) const {
  const std::size_t t_steps = tape.l1.size();
  const std::size_t b = code_.rows();
  const std::size_t u1 = tape.l1[0].gate_i.cols();
  const std::size_t u2 = tape.l2[0].gate_i.cols();

  std::vector<Matrix> dx2(t_steps);
  Matrix dh2(b, u2, 0.0), dc2(b, u2, 0.0);
  for (std::size_t t = t_steps; t-- > 0;) {
    Matrix dh_proj(b, u2, 0.0);
    dense_backward(br.proj, tape.h2[t], d_out[t], gp, dh_proj);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < u2; ++j) dh2(r, j) += dh_proj(r, j);
    dx2[t].resize(b, u1, 0.0);
    Matrix dh_prev(b, u2, 0.0), dc_prev(b, u2, 0.0);
    lstm_step_backward(br.layer2, tape.l2[t], dh2, dc2, g2, dx2[t], dh_prev, dc_prev);
    dh2 = std::move(dh_prev);
    dc2 = std::move(dc_prev);
  }

  Matrix dh1(b, u1, 0.0), dc1(b, u1, 0.0);
  for (std::size_t t = t_steps; t-- > 0;) {
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < u1; ++j) dh1(r, j) += dx2[t](r, j);
    Matrix dh_prev(b, u1, 0.0), dc_prev(b, u1, 0.0);
    lstm_step_backward(br.layer1, tape.l1[t], dh1, dc1, g1, d_code, dh_prev, dc_prev);
    dh1 = std::move(dh_prev);
    dc1 = std::move(dc_prev);
  }
  // The initial hidden state was the bitcode itself.
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < u1; ++j) d_code(r, j) += dh1(r, j);
}

void DecoderTape::backward(const DecoderModel& d, const std::vector<Matrix>& d_fwd,
                           const std::vector<Matrix>& d_rev, DecoderGrads& grads,
                           Matrix& d_code) const {
  branch_backward(d.fwd, fwd_tape_, d_fwd, grads.fwd_l1, grads.fwd_l2, grads.fwd_proj,
                  d_code);
  branch_backward(d.rev, rev_tape_, d_rev, grads.rev_l1, grads.rev_l2, grads.rev_proj,
                  d_code);
}

// ---- model files -----------------------------------------------------------

namespace {
constexpr char kModelMagic[4] = {'M', 'S', 'H', '1'};
constexpr std::uint32_t kHasEncoder = 1u;
constexpr std::uint32_t kHasDecoders = 2u;

void write_views(std::ostream& os, std::vector<SpanView> vs) {
  for (const auto& v : vs) io::write_f32_block(os, v.data, v.n);
}

void read_views(std::istream& is, std::vector<SpanView> vs, const char* what) {
  for (auto& v : vs) io::read_f32_block(is, v.data, v.n, what);
}
}  // namespace

void save_model(const std::string& path, const EncoderModel& enc, const DecoderModel* dec) {
  auto os = io::open_output(path, "model file");
  io::write_magic(os, kModelMagic);
  io::write_u32(os, kHasEncoder | (dec != nullptr ? kHasDecoders : 0u));
  io::write_u32(os, static_cast<std::uint32_t>(enc.n_bits));
  io::write_u32(os, static_cast<std::uint32_t>(enc.n_f));
  io::write_u32(os, static_cast<std::uint32_t>(2 * enc.n_bits));
  io::write_u32(os, static_cast<std::uint32_t>(enc.n_bits));
  write_views(os, const_cast<EncoderModel&>(enc).param_views());
  io::write_f32_block(os, enc.bn.running_mean.data(), enc.bn.running_mean.size());
  io::write_f32_block(os, enc.bn.running_var.data(), enc.bn.running_var.size());
  if (dec != nullptr) {
    write_views(os, const_cast<DecoderModel*>(dec)->param_views());
  }
  if (!os) throw IoError("failed writing model file: " + path);
}

ModelFile load_model(const std::string& path) {
  auto is = io::open_input(path, "model file");
  io::expect_magic(is, kModelMagic, "model file");
  const std::uint32_t flags = io::read_u32(is, "model flags");
  const std::uint32_t n_bits = io::read_u32(is, "model n_bits");
  const std::uint32_t n_f = io::read_u32(is, "model n_f");
  const std::uint32_t l1 = io::read_u32(is, "model layer1 units");
  const std::uint32_t l2 = io::read_u32(is, "model layer2 units");
  if (n_bits == 0 || n_f == 0 || l1 != 2 * n_bits || l2 != n_bits) {
    throw FormatError("model header is inconsistent");
  }
  if ((flags & kHasEncoder) == 0) throw FormatError("model file has no encoder section");

  ModelFile mf;
  mf.encoder.init(static_cast<int>(n_bits), static_cast<int>(n_f), 0);
  read_views(is, mf.encoder.param_views(), "encoder params");
  io::read_f32_block(is, mf.encoder.bn.running_mean.data(), n_bits, "running mean");
  io::read_f32_block(is, mf.encoder.bn.running_var.data(), n_bits, "running var");
  if (flags & kHasDecoders) {
    DecoderModel dec;
    dec.init(static_cast<int>(n_bits), static_cast<int>(n_f), 0);
    read_views(is, dec.param_views(), "decoder params");
    mf.decoders = std::move(dec);
  }
  return mf;
}

}  // namespace msh
