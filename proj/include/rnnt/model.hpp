#pragma once

#include <random>
#include <string>

#include "rnnt/encoder.hpp"
#include "rnnt/loss.hpp"

namespace rnnt {

// Full transducer shape: encoder stack (with time reduction), prediction
// network, and the feed-forward joint. Label IDs: 0 = blank; 1..num_labels
// are real units; the prediction network additionally uses embedding row 0
// as the start-of-sequence input.
struct ModelConfig {
  int feature_dim = 16;
  int num_labels = 8;      // |Z| excluding blank
  int embed_dim = 16;

  int enc_layers = 4;
  int enc_units = 32;
  int enc_proj = 0;
  int reduction_factor = 2;
  int reduction_after_layer = 2;

  int pred_layers = 1;
  int pred_units = 32;
  int pred_proj = 0;

  int joint_dim = 32;
  bool layer_norm = true;

  int alphabet() const { return num_labels + 1; }

  EncoderConfig encoder() const {
    EncoderConfig e;
    e.num_layers = enc_layers;
    e.units_per_layer = enc_units;
    e.projection_dim = enc_proj;
    e.reduction_factor = reduction_factor;
    e.reduction_after_layer = reduction_after_layer;
    e.layer_norm = layer_norm;
    return e;
  }

  void validate() const {
    if (feature_dim < 1 || num_labels < 1 || embed_dim < 1 || joint_dim < 1) {
      throw ConfigError("ModelConfig: dims must be positive");
    }
    if (pred_layers < 1 || pred_units < 1 || pred_proj < 0 || enc_proj < 0) {
      throw ConfigError("ModelConfig: bad prediction/projection shape");
    }
    encoder().validate();
  }
};

template <typename S>
struct RnntModel {
  ModelConfig cfg;
  Mat<S> embed;                     // (num_labels+1) x embed_dim, row 0 = <sos>
  std::vector<LstmWeights<S>> enc;  // cfg.enc_layers
  std::vector<LstmWeights<S>> pred;
  Mat<S> joint_enc;                 // joint_dim x enc_out_dim
  Mat<S> joint_pred;                // joint_dim x pred_out_dim
  Vec<S> joint_bias;
  Mat<S> out_w;                     // alphabet x joint_dim
  Vec<S> out_b;

  int enc_out_dim() const { return enc.back().output_dim(); }
  int pred_out_dim() const { return pred.back().output_dim(); }

  void validate() const {
    cfg.validate();
    if (static_cast<int>(enc.size()) != cfg.enc_layers) throw ConfigError("RnntModel: encoder layer count");
    if (static_cast<int>(pred.size()) != cfg.pred_layers) throw ConfigError("RnntModel: prediction layer count");
    for (const auto& l : enc) l.validate();
    for (const auto& l : pred) l.validate();
    if (embed.rows != cfg.num_labels + 1 || embed.cols != cfg.embed_dim) {
      throw ConfigError("RnntModel: embedding shape");
    }
    if (joint_enc.rows != cfg.joint_dim || joint_enc.cols != enc_out_dim()) throw ConfigError("RnntModel: joint_enc shape");
    if (joint_pred.rows != cfg.joint_dim || joint_pred.cols != pred_out_dim()) throw ConfigError("RnntModel: joint_pred shape");
    if (static_cast<int>(joint_bias.size()) != cfg.joint_dim) throw ConfigError("RnntModel: joint bias width");
    if (out_w.rows != cfg.alphabet() || out_w.cols != cfg.joint_dim) throw ConfigError("RnntModel: output shape");
    if (static_cast<int>(out_b.size()) != cfg.alphabet()) throw ConfigError("RnntModel: output bias width");
  }

  template <typename T>
  RnntModel<T> cast() const {
    RnntModel<T> o;
    o.cfg = cfg;
    o.embed = embed.template cast<T>();
    for (const auto& l : enc) o.enc.push_back(l.template cast<T>());
    for (const auto& l : pred) o.pred.push_back(l.template cast<T>());
    o.joint_enc = joint_enc.template cast<T>();
    o.joint_pred = joint_pred.template cast<T>();
    o.joint_bias = Vec<T>(joint_bias.begin(), joint_bias.end());
    o.out_w = out_w.template cast<T>();
    o.out_b = Vec<T>(out_b.begin(), out_b.end());
    return o;
  }
};

// Named view over every parameter blob, in a fixed order shared by the
// optimizer, the serializer, and the quantizer. `matrix` marks true weight
// matrices (quantization candidates with meaningful rows x cols).
template <typename S>
struct ParamRef {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool matrix = false;
  std::vector<S>* data = nullptr;
};

namespace detail {

template <typename S>
inline void lstm_param_refs(const std::string& prefix, LstmWeights<S>& w,
                            std::vector<ParamRef<S>>& out) {
  out.push_back({prefix + ".w_in", w.w_in.rows, w.w_in.cols, true, &w.w_in.v});
  out.push_back({prefix + ".w_rec", w.w_rec.rows, w.w_rec.cols, true, &w.w_rec.v});
  out.push_back({prefix + ".bias", static_cast<int>(w.bias.size()), 1, false, &w.bias});
  if (w.has_projection) {
    out.push_back({prefix + ".proj", w.proj.rows, w.proj.cols, true, &w.proj.v});
  }
  if (w.layer_norm) {
    out.push_back({prefix + ".ln_gain", static_cast<int>(w.ln_gain.size()), 1, false, &w.ln_gain});
    out.push_back({prefix + ".ln_bias", static_cast<int>(w.ln_bias.size()), 1, false, &w.ln_bias});
  }
}

}  // namespace detail

template <typename S>
inline std::vector<ParamRef<S>> param_refs(RnntModel<S>& m) {
  std::vector<ParamRef<S>> out;
  out.push_back({"embed", m.embed.rows, m.embed.cols, true, &m.embed.v});
  for (size_t i = 0; i < m.enc.size(); ++i) {
    detail::lstm_param_refs("enc" + std::to_string(i), m.enc[i], out);
  }
  for (size_t i = 0; i < m.pred.size(); ++i) {
    detail::lstm_param_refs("pred" + std::to_string(i), m.pred[i], out);
  }
  out.push_back({"joint_enc", m.joint_enc.rows, m.joint_enc.cols, true, &m.joint_enc.v});
  out.push_back({"joint_pred", m.joint_pred.rows, m.joint_pred.cols, true, &m.joint_pred.v});
  out.push_back({"joint_bias", static_cast<int>(m.joint_bias.size()), 1, false, &m.joint_bias});
  out.push_back({"out_w", m.out_w.rows, m.out_w.cols, true, &m.out_w.v});
  out.push_back({"out_b", static_cast<int>(m.out_b.size()), 1, false, &m.out_b});
  return out;
}

namespace detail {

template <typename S>
inline LstmWeights<S> make_lstm(int input_dim, int units, int proj, bool ln) {
  LstmWeights<S> w;
  w.input_dim = input_dim;
  w.num_units = units;
  w.has_projection = proj > 0;
  if (w.has_projection) w.proj = Mat<S>(proj, units);
  w.w_in = Mat<S>(4 * units, input_dim);
  w.w_rec = Mat<S>(4 * units, w.output_dim());
  w.bias = Vec<S>(4 * units, S(0));
  w.layer_norm = ln;
  if (ln) {
    w.ln_gain = Vec<S>(4 * units, S(1));
    w.ln_bias = Vec<S>(4 * units, S(0));
  }
  return w;
}

}  // namespace detail

// Allocates the model with all parameters zero (shapes only).
template <typename S>
inline RnntModel<S> make_model(const ModelConfig& cfg) {
  cfg.validate();
  RnntModel<S> m;
  m.cfg = cfg;
  m.embed = Mat<S>(cfg.num_labels + 1, cfg.embed_dim);

  int in_dim = cfg.feature_dim;
  for (int i = 0; i < cfg.enc_layers; ++i) {
    m.enc.push_back(detail::make_lstm<S>(in_dim, cfg.enc_units, cfg.enc_proj, cfg.layer_norm));
    in_dim = m.enc.back().output_dim();
    if (i + 1 == cfg.reduction_after_layer) in_dim *= cfg.reduction_factor;
  }
  in_dim = cfg.embed_dim;
  for (int i = 0; i < cfg.pred_layers; ++i) {
    m.pred.push_back(detail::make_lstm<S>(in_dim, cfg.pred_units, cfg.pred_proj, cfg.layer_norm));
    in_dim = m.pred.back().output_dim();
  }
  m.joint_enc = Mat<S>(cfg.joint_dim, m.enc_out_dim());
  m.joint_pred = Mat<S>(cfg.joint_dim, m.pred_out_dim());
  m.joint_bias = Vec<S>(cfg.joint_dim, S(0));
  m.out_w = Mat<S>(cfg.alphabet(), cfg.joint_dim);
  m.out_b = Vec<S>(cfg.alphabet(), S(0));
  m.validate();
  return m;
}

// Random initialization: per-matrix uniform(+-1/sqrt(fan_in)), forget-gate
// bias 1 to open the memory path early in training.
template <typename S>
inline RnntModel<S> init_model(const ModelConfig& cfg, uint64_t seed) {
  RnntModel<S> m = make_model<S>(cfg);
  std::mt19937_64 rng(seed);
  for (auto& p : param_refs(m)) {
    if (p.name.find(".ln_") != std::string::npos) continue;  // keep gain=1, bias=0
    const double fan_in = p.matrix ? p.cols : 1.0;
    const double r = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-r, r);
    if (p.name.find(".bias") != std::string::npos || p.name == "joint_bias" || p.name == "out_b") {
      for (auto& x : *p.data) x = S(0);
      continue;
    }
    for (auto& x : *p.data) x = static_cast<S>(dist(rng));
  }
  for (auto& layer : m.enc) {
    for (int i = 0; i < layer.num_units; ++i) layer.bias[kGateForget * layer.num_units + i] = S(1);
  }
  for (auto& layer : m.pred) {
    for (int i = 0; i < layer.num_units; ++i) layer.bias[kGateForget * layer.num_units + i] = S(1);
  }
  return m;
}

// ===== batch (whole-utterance) forward passes, training-grade =====

// Runs one LSTM layer over a frame sequence from a zero state.
template <typename S>
inline Mat<S> lstm_forward_seq(const LstmWeights<S>& w, const Mat<S>& in) {
  Mat<S> out(in.rows, w.output_dim());
  LstmState<S> st = zero_state(w);
  Vec<S> x(w.input_dim);
  for (int t = 0; t < in.rows; ++t) {
    x.assign(in.row(t), in.row(t) + in.cols);
    const Vec<S> h = lstm_step(x, st, w);
    std::copy(h.begin(), h.end(), out.row(t));
  }
  return out;
}

// Encoder over a whole utterance: lower layers, time reduction, upper layers.
template <typename S>
inline Mat<S> encoder_forward(const RnntModel<S>& m, const Mat<S>& features) {
  if (features.rows < 1) throw ConfigError("encoder_forward: empty utterance");
  if (features.cols != m.cfg.feature_dim) throw ConfigError("encoder_forward: feature width");
  Mat<S> cur = features;
  for (int i = 0; i < m.cfg.enc_layers; ++i) {
    cur = lstm_forward_seq(m.enc[i], cur);
    if (i + 1 == m.cfg.reduction_after_layer) cur = time_reduce(cur, m.cfg.reduction_factor);
  }
  return cur;
}

// Prediction network over <sos>, y_1 .. y_U; row u is the output after
// consuming u labels (used against lattice column u).
template <typename S>
inline Mat<S> pred_forward_seq(const RnntModel<S>& m, const Labels& y) {
  validate_labels(y, m.cfg.alphabet());
  const int u_len = static_cast<int>(y.size()) + 1;
  Mat<S> in(u_len, m.cfg.embed_dim);
  for (int u = 0; u < u_len; ++u) {
    const int row = u == 0 ? 0 : y[u - 1];
    std::copy(m.embed.row(row), m.embed.row(row) + m.cfg.embed_dim, in.row(u));
  }
  Mat<S> cur = in;
  for (const auto& layer : m.pred) cur = lstm_forward_seq(layer, cur);
  return cur;
}

// Joint network: logits = W_out tanh(W_e f + W_p g + b) + b_out.
template <typename S>
inline void joint_logits_into(const RnntModel<S>& m, const S* enc_row, const S* pred_row, S* out) {
  const int j = m.cfg.joint_dim;
  Vec<S> h(j);
  matvec_into(m.joint_enc, enc_row, h.data());
  Vec<S> hp(j);
  matvec_into(m.joint_pred, pred_row, hp.data());
  for (int i = 0; i < j; ++i) h[i] = std::tanh(h[i] + hp[i] + m.joint_bias[i]);
  matvec_into(m.out_w, h.data(), out);
  for (int i = 0; i < m.out_w.rows; ++i) out[i] += m.out_b[i];
}

template <typename S>
inline Vec<S> joint_logits(const RnntModel<S>& m, const Vec<S>& enc_row, const Vec<S>& pred_row) {
  check_width(enc_row, m.joint_enc.cols, "joint enc input");
  check_width(pred_row, m.joint_pred.cols, "joint pred input");
  Vec<S> out(m.cfg.alphabet());
  joint_logits_into(m, enc_row.data(), pred_row.data(), out.data());
  return out;
}

// Full training lattice for one (features, labels) pair.
template <typename S>
inline LogitLattice<S> build_lattice(const RnntModel<S>& m, const Mat<S>& features, const Labels& y) {
  const Mat<S> enc = encoder_forward(m, features);
  const Mat<S> pred = pred_forward_seq(m, y);
  LogitLattice<S> lat(enc.rows, static_cast<int>(y.size()), m.cfg.alphabet());
  for (int t = 0; t < enc.rows; ++t) {
    for (int u = 0; u < pred.rows; ++u) {
      joint_logits_into(m, enc.row(t), pred.row(u), lat.at(t, u));
    }
  }
  return lat;
}

}  // namespace rnnt
