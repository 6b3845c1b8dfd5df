#pragma once

#include <optional>

#include "rnnt/container.hpp"
#include "rnnt/encoder.hpp"
#include "rnnt/model.hpp"
#include "rnnt/quant.hpp"

namespace rnnt {

// ===== inference engine =====
//
// Float32 inference over a model container whose matrices may be stored dense
// or 8-bit quantized.  Matrix products dispatch per-kernel; quantized kernels
// quantize the activation vector on the fly (weights-only storage, integer
// arithmetic at run time).  The dense path performs matvec in exactly the
// training forward pass's order, so dense-engine outputs are bit-identical to
// the float model's.

struct EngineScratch {
  std::vector<int8_t> qx;
  std::vector<int32_t> acc;
  Vector z;
  Vector tmp;
  Vector h_pre;
  Vector joint_h;
  Vector joint_p;
};

struct LinearKernel {
  enum class Kind { kDense, kQuantSym, kQuantAsym };
  Kind kind = Kind::kDense;
  Tensor2D dense;
  QuantizedTensor sym;
  AsymQuantizedTensor asym;

  int rows() const {
    switch (kind) {
      case Kind::kDense: return dense.rows;
      case Kind::kQuantSym: return sym.rows;
      case Kind::kQuantAsym: return asym.rows;
    }
    return 0;
  }
  int cols() const {
    switch (kind) {
      case Kind::kDense: return dense.cols;
      case Kind::kQuantSym: return sym.cols;
      case Kind::kQuantAsym: return asym.cols;
    }
    return 0;
  }

  void apply(const float* x, int n, float* out, EngineScratch& s) const {
    if (n != cols()) throw ConfigError("LinearKernel: width mismatch");
    switch (kind) {
      case Kind::kDense:
        matvec_into(dense, x, out);
        return;
      case Kind::kQuantSym: {
        s.qx.resize(n);
        s.acc.resize(sym.rows);
        const float theta_x = quantize_vec_into(x, n, s.qx.data());
        qmatvec_i32_into(sym, s.qx.data(), n, s.acc.data());
        const float inv = 1.0f / (sym.theta * theta_x);
        for (int r = 0; r < sym.rows; ++r) out[r] = static_cast<float>(s.acc[r]) * inv;
        return;
      }
      case Kind::kQuantAsym: {
        std::vector<float> xv(x, x + n);
        const AsymQuantizedTensor qx = quantize_asymmetric(xv, n, 1);
        s.acc.resize(asym.rows);
        qmatvec_asym_i32_into(asym, qx.values.data(), n, qx.zero_point, s.acc.data());
        const float inv = 1.0f / (asym.scale * qx.scale);
        for (int r = 0; r < asym.rows; ++r) out[r] = static_cast<float>(s.acc[r]) * inv;
        return;
      }
    }
  }

  void apply(const Vector& x, Vector& out, EngineScratch& s) const {
    out.resize(rows());
    apply(x.data(), static_cast<int>(x.size()), out.data(), s);
  }
};

namespace detail {

inline LinearKernel kernel_from_stored(const StoredTensor& t) {
  LinearKernel k;
  switch (t.dtype) {
    case TensorDtype::f32:
      k.kind = LinearKernel::Kind::kDense;
      k.dense = Tensor2D(t.rows, t.cols, t.f32);
      break;
    case TensorDtype::i8_sym:
      k.kind = LinearKernel::Kind::kQuantSym;
      k.sym = sym_from_stored(t);
      break;
    case TensorDtype::i8_asym:
      k.kind = LinearKernel::Kind::kQuantAsym;
      k.asym = asym_from_stored(t);
      break;
  }
  return k;
}

// Vectors (biases, norm parameters) always run in float at inference; stored
// 8-bit copies are expanded on load.
inline Vector vector_from_stored(const StoredTensor& t) {
  switch (t.dtype) {
    case TensorDtype::f32: return t.f32;
    case TensorDtype::i8_sym: return dequantize(sym_from_stored(t));
    case TensorDtype::i8_asym: return dequantize(asym_from_stored(t));
  }
  return {};
}

inline const StoredTensor& stored(const ModelContainer& mc, const std::string& name) {
  const StoredTensor* t = mc.find(name);
  if (!t) throw IoError("container missing tensor " + name);
  return *t;
}

}  // namespace detail

struct EngineLstm {
  LinearKernel w_in;
  LinearKernel w_rec;
  Vector bias;
  bool has_projection = false;
  LinearKernel proj;
  // Skeleton weights carrying the layer-norm parameters so the engine step
  // shares lstm_apply_ln/lstm_combine with the training forward pass.
  LstmWeights<float> norm;

  int num_units() const { return norm.num_units; }
  int input_dim() const { return w_in.cols(); }
  int output_dim() const { return has_projection ? proj.rows() : norm.num_units; }

  Vector step(const Vector& x, LstmState<float>& state, EngineScratch& s) const {
    check_width(x, input_dim(), "engine lstm input");
    check_width(state.c, num_units(), "engine lstm state.c");
    check_width(state.h, output_dim(), "engine lstm state.h");
    w_in.apply(x, s.z, s);
    w_rec.apply(state.h, s.tmp, s);
    add_inplace(s.z, s.tmp);
    add_inplace(s.z, bias);
    LstmStepCache<float>* no_cache = nullptr;
    if (norm.layer_norm) detail::lstm_apply_ln(s.z, norm, no_cache);
    Vector c_new;
    detail::lstm_combine(s.z, state.c, num_units(), c_new, s.h_pre, no_cache);
    state.c = std::move(c_new);
    if (has_projection) {
      Vector h(proj.rows());
      proj.apply(s.h_pre.data(), num_units(), h.data(), s);
      state.h = std::move(h);
    } else {
      state.h = s.h_pre;
    }
    return state.h;
  }
};

inline LstmState<float> zero_engine_state(const EngineLstm& l) {
  return LstmState<float>{Vector(l.num_units(), 0.0f), Vector(l.output_dim(), 0.0f)};
}

struct EngineModel {
  ModelConfig cfg;
  Tensor2D embed;  // float row lookup
  std::vector<EngineLstm> enc;
  std::vector<EngineLstm> pred;
  LinearKernel joint_enc;
  LinearKernel joint_pred;
  Vector joint_bias;
  LinearKernel out_w;
  Vector out_b;
  bool quantized = false;

  int enc_out_dim() const { return enc.back().output_dim(); }
  int pred_out_dim() const { return pred.back().output_dim(); }
};

namespace detail {

inline EngineLstm engine_lstm_from(const ModelContainer& mc, const std::string& prefix, int units,
                                   bool layer_norm, bool has_proj) {
  EngineLstm l;
  l.w_in = kernel_from_stored(stored(mc, prefix + ".w_in"));
  l.w_rec = kernel_from_stored(stored(mc, prefix + ".w_rec"));
  l.bias = vector_from_stored(stored(mc, prefix + ".bias"));
  l.has_projection = has_proj;
  if (has_proj) l.proj = kernel_from_stored(stored(mc, prefix + ".proj"));
  l.norm.num_units = units;
  l.norm.layer_norm = layer_norm;
  if (layer_norm) {
    l.norm.ln_gain = vector_from_stored(stored(mc, prefix + ".ln_gain"));
    l.norm.ln_bias = vector_from_stored(stored(mc, prefix + ".ln_bias"));
  }
  if (l.w_in.rows() != 4 * units || static_cast<int>(l.bias.size()) != 4 * units) {
    throw IoError(prefix + ": inconsistent shapes in container");
  }
  return l;
}

}  // namespace detail

inline EngineModel make_engine(const ModelContainer& mc) {
  EngineModel e;
  e.cfg = mc.cfg;
  const StoredTensor& emb = detail::stored(mc, "embed");
  e.embed = Tensor2D(emb.rows, emb.cols, detail::vector_from_stored(emb));
  const bool proj = mc.cfg.enc_proj > 0;
  const bool pproj = mc.cfg.pred_proj > 0;
  for (int i = 0; i < mc.cfg.enc_layers; ++i) {
    e.enc.push_back(detail::engine_lstm_from(mc, "enc" + std::to_string(i), mc.cfg.enc_units,
                                             mc.cfg.layer_norm, proj));
  }
  for (int i = 0; i < mc.cfg.pred_layers; ++i) {
    e.pred.push_back(detail::engine_lstm_from(mc, "pred" + std::to_string(i), mc.cfg.pred_units,
                                              mc.cfg.layer_norm, pproj));
  }
  e.joint_enc = detail::kernel_from_stored(detail::stored(mc, "joint_enc"));
  e.joint_pred = detail::kernel_from_stored(detail::stored(mc, "joint_pred"));
  e.joint_bias = detail::vector_from_stored(detail::stored(mc, "joint_bias"));
  e.out_w = detail::kernel_from_stored(detail::stored(mc, "out_w"));
  e.out_b = detail::vector_from_stored(detail::stored(mc, "out_b"));
  for (const auto& t : mc.tensors) {
    if (t.dtype != TensorDtype::f32) e.quantized = true;
  }
  return e;
}

inline EngineModel make_engine(RnntModel<float>& m) { return make_engine(to_container(m)); }

// Joint network over one (encoder frame, prediction output) pair; mirrors the
// training-side computation exactly in the dense case.
inline void engine_joint_into(const EngineModel& e, const float* enc_row, const float* pred_row,
                              float* out, EngineScratch& s) {
  const int j = e.cfg.joint_dim;
  s.joint_h.resize(j);
  e.joint_enc.apply(enc_row, e.joint_enc.cols(), s.joint_h.data(), s);
  s.joint_p.resize(j);
  e.joint_pred.apply(pred_row, e.joint_pred.cols(), s.joint_p.data(), s);
  for (int i = 0; i < j; ++i) s.joint_h[i] = std::tanh(s.joint_h[i] + s.joint_p[i] + e.joint_bias[i]);
  e.out_w.apply(s.joint_h.data(), j, out, s);
  for (int i = 0; i < e.out_w.rows(); ++i) out[i] += e.out_b[i];
}

inline Vector engine_joint(const EngineModel& e, const Vector& enc_row, const Vector& pred_row,
                           EngineScratch& s) {
  Vector out(e.cfg.alphabet());
  engine_joint_into(e, enc_row.data(), pred_row.data(), out.data(), s);
  return out;
}

// ===== streaming encoder =====
//
// The stack is split at the time-reduction layer: the lower half runs layers
// 1..k per input frame and emits one concatenated frame per N inputs; the
// upper half runs layers k+1..L per reduced frame.  The halves own disjoint
// state, so the runtime can drive them from different threads.

class EncoderLowerState {
 public:
  explicit EncoderLowerState(const EngineModel& e) : e_(&e) {
    for (int i = 0; i < e.cfg.reduction_after_layer; ++i) {
      states_.push_back(zero_engine_state(e.enc[i]));
    }
  }

  // Feeds one input frame; yields a reduced frame once N lower outputs are
  // buffered.
  std::optional<Vector> push(const float* frame, int dim) {
    const auto& cfg = e_->cfg;
    if (dim != cfg.feature_dim) throw ConfigError("encode_lower: feature width mismatch");
    Vector x(frame, frame + dim);
    for (size_t i = 0; i < states_.size(); ++i) x = e_->enc[i].step(x, states_[i], scratch_);
    pending_.push_back(std::move(x));
    if (static_cast<int>(pending_.size()) < cfg.reduction_factor) return std::nullopt;
    return take_pending();
  }

  // Emits the zero-padded partial group at end of stream, if any.
  std::optional<Vector> flush() {
    if (pending_.empty()) return std::nullopt;
    return take_pending();
  }

 private:
  Vector take_pending() {
    const int n = e_->cfg.reduction_factor;
    const int d = e_->enc[e_->cfg.reduction_after_layer - 1].output_dim();
    Vector out(static_cast<size_t>(n) * d, 0.0f);
    for (size_t i = 0; i < pending_.size(); ++i) {
      std::copy(pending_[i].begin(), pending_[i].end(), out.begin() + i * d);
    }
    pending_.clear();
    return out;
  }

  const EngineModel* e_;
  std::vector<LstmState<float>> states_;
  std::vector<Vector> pending_;
  EngineScratch scratch_;
};

class EncoderUpperState {
 public:
  explicit EncoderUpperState(const EngineModel& e) : e_(&e) {
    for (int i = e.cfg.reduction_after_layer; i < e.cfg.enc_layers; ++i) {
      states_.push_back(zero_engine_state(e.enc[i]));
    }
  }

  Vector push(const Vector& reduced) {
    Vector x = reduced;
    const int k = e_->cfg.reduction_after_layer;
    for (size_t i = 0; i < states_.size(); ++i) {
      x = e_->enc[k + static_cast<int>(i)].step(x, states_[i], scratch_);
    }
    return x;
  }

 private:
  const EngineModel* e_;
  std::vector<LstmState<float>> states_;
  EngineScratch scratch_;
};

// Whole-utterance encoder as one batch pass (the streaming oracle): lower
// layers over all frames, one time reduction, upper layers.
inline Tensor2D engine_encode_batch(const EngineModel& e, const Tensor2D& features) {
  if (features.cols != e.cfg.feature_dim) throw ConfigError("encode: feature width mismatch");
  EngineScratch s;
  Tensor2D cur = features;
  const int k = e.cfg.reduction_after_layer;
  for (int layer = 0; layer < e.cfg.enc_layers; ++layer) {
    if (layer == k) cur = time_reduce(cur, e.cfg.reduction_factor);
    const EngineLstm& l = e.enc[layer];
    LstmState<float> st = zero_engine_state(l);
    Tensor2D next(cur.rows, l.output_dim());
    for (int t = 0; t < cur.rows; ++t) {
      const Vector x(cur.row(t), cur.row(t) + cur.cols);
      const Vector h = l.step(x, st, s);
      std::copy(h.begin(), h.end(), next.row(t));
    }
    cur = std::move(next);
  }
  return cur;
}

// Streamed encoder over a whole utterance via the split halves.
inline Tensor2D engine_encode_streamed(const EngineModel& e, const Tensor2D& features) {
  EncoderLowerState lower(e);
  EncoderUpperState upper(e);
  std::vector<Vector> rows;
  for (int t = 0; t < features.rows; ++t) {
    if (auto red = lower.push(features.row(t), features.cols)) rows.push_back(upper.push(*red));
  }
  if (auto red = lower.flush()) rows.push_back(upper.push(*red));
  Tensor2D out(static_cast<int>(rows.size()), rows.empty() ? e.enc_out_dim() : static_cast<int>(rows[0].size()));
  for (size_t t = 0; t < rows.size(); ++t) std::copy(rows[t].begin(), rows[t].end(), out.row(static_cast<int>(t)));
  return out;
}

}  // namespace rnnt
