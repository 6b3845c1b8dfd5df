#pragma once

#include "rnnt/tensor.hpp"

namespace rnnt {

template <typename S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Gate blocks within the fused 4U pre-activation vector, in storage order.
enum LstmGate { kGateInput = 0, kGateForget = 1, kGateCell = 2, kGateOutput = 3 };

// Weights for one LSTM layer: fused input/recurrent matrices over the four
// gates, optional output projection, optional per-gate layer norm applied to
// the gate pre-activations.
template <typename S>
struct LstmWeights {
  int input_dim = 0;
  int num_units = 0;
  Mat<S> w_in;    // (4*units) x input_dim
  Mat<S> w_rec;   // (4*units) x output_dim()
  Vec<S> bias;    // 4*units

  bool has_projection = false;
  Mat<S> proj;    // projection_dim x units

  bool layer_norm = false;
  Vec<S> ln_gain;  // 4*units
  Vec<S> ln_bias;  // 4*units
  S ln_epsilon = S(1e-5);

  int output_dim() const { return has_projection ? proj.rows : num_units; }

  void validate() const {
    if (input_dim <= 0 || num_units <= 0) throw ConfigError("LstmWeights: dims must be positive");
    if (w_in.rows != 4 * num_units || w_in.cols != input_dim) throw ConfigError("LstmWeights: w_in shape");
    if (w_rec.rows != 4 * num_units || w_rec.cols != output_dim()) throw ConfigError("LstmWeights: w_rec shape");
    if (static_cast<int>(bias.size()) != 4 * num_units) throw ConfigError("LstmWeights: bias width");
    if (has_projection && proj.cols != num_units) throw ConfigError("LstmWeights: proj shape");
    if (layer_norm &&
        (static_cast<int>(ln_gain.size()) != 4 * num_units ||
         static_cast<int>(ln_bias.size()) != 4 * num_units)) {
      throw ConfigError("LstmWeights: layer-norm param width");
    }
  }

  template <typename T>
  LstmWeights<T> cast() const {
    LstmWeights<T> o;
    o.input_dim = input_dim;
    o.num_units = num_units;
    o.w_in = w_in.template cast<T>();
    o.w_rec = w_rec.template cast<T>();
    o.bias = Vec<T>(bias.begin(), bias.end());
    o.has_projection = has_projection;
    o.proj = proj.template cast<T>();
    o.layer_norm = layer_norm;
    o.ln_gain = Vec<T>(ln_gain.begin(), ln_gain.end());
    o.ln_bias = Vec<T>(ln_bias.begin(), ln_bias.end());
    o.ln_epsilon = static_cast<T>(ln_epsilon);
    return o;
  }
};

// Per-stream recurrent state; h is post-projection width. Owned by exactly
// one stream at a time.
template <typename S>
struct LstmState {
  Vec<S> c;
  Vec<S> h;
};

template <typename S>
inline LstmState<S> zero_state(const LstmWeights<S>& w) {
  return LstmState<S>{Vec<S>(w.num_units, S(0)), Vec<S>(w.output_dim(), S(0))};
}

// Intermediates kept by the training forward pass for backprop.
template <typename S>
struct LstmStepCache {
  Vec<S> x;        // layer input
  Vec<S> c_prev;
  Vec<S> h_prev;
  Vec<S> ln_xhat;  // normalized pre-activations (4U), valid when layer_norm
  Vec<S> ln_inv_std;  // one per gate
  Vec<S> act;      // post-activation gates (4U): sigmoid i,f,o and tanh g
  Vec<S> c_new;
  Vec<S> tanh_c;
  Vec<S> h_pre;    // pre-projection output
};

namespace detail {

// Applies per-gate layer norm in place over the fused pre-activation vector.
template <typename S>
inline void lstm_apply_ln(Vec<S>& z, const LstmWeights<S>& w, LstmStepCache<S>* cache) {
  const int u = w.num_units;
  if (cache) {
    cache->ln_xhat.assign(4 * u, S(0));
    cache->ln_inv_std.assign(4, S(0));
  }
  for (int g = 0; g < 4; ++g) {
    S* zg = z.data() + g * u;
    S mu = S(0);
    for (int i = 0; i < u; ++i) mu += zg[i];
    mu /= static_cast<S>(u);
    S var = S(0);
    for (int i = 0; i < u; ++i) var += (zg[i] - mu) * (zg[i] - mu);
    var /= static_cast<S>(u);
    const S inv_std = S(1) / std::sqrt(var + w.ln_epsilon);
    for (int i = 0; i < u; ++i) {
      const S xhat = (zg[i] - mu) * inv_std;
      if (cache) cache->ln_xhat[g * u + i] = xhat;
      zg[i] = w.ln_gain[g * u + i] * xhat + w.ln_bias[g * u + i];
    }
    if (cache) cache->ln_inv_std[g] = inv_std;
  }
}

// Gate activations and cell update from the (normalized) pre-activations.
template <typename S>
inline void lstm_combine(const Vec<S>& z, const Vec<S>& c_prev, int units, Vec<S>& c_new,
                         Vec<S>& h_pre, LstmStepCache<S>* cache) {
  c_new.resize(units);
  h_pre.resize(units);
  if (cache) {
    cache->act.assign(4 * units, S(0));
    cache->tanh_c.assign(units, S(0));
  }
  for (int i = 0; i < units; ++i) {
    const S gi = sigmoid(z[kGateInput * units + i]);
    const S gf = sigmoid(z[kGateForget * units + i]);
    const S gg = std::tanh(z[kGateCell * units + i]);
    const S go = sigmoid(z[kGateOutput * units + i]);
    const S c = gf * c_prev[i] + gi * gg;
    const S tc = std::tanh(c);
    c_new[i] = c;
    h_pre[i] = go * tc;
    if (cache) {
      cache->act[kGateInput * units + i] = gi;
      cache->act[kGateForget * units + i] = gf;
      cache->act[kGateCell * units + i] = gg;
      cache->act[kGateOutput * units + i] = go;
      cache->tanh_c[i] = tc;
    }
  }
}

}  // namespace detail

// One LSTM step. Standard gate equations with optional per-gate layer norm and
// output projection. Pure function of (input, state, weights); the returned
// vector equals the new state.h.
template <typename S>
inline Vec<S> lstm_step(const Vec<S>& input, LstmState<S>& state, const LstmWeights<S>& w,
                        LstmStepCache<S>* cache = nullptr) {
  check_width(input, w.input_dim, "lstm_step input");
  check_width(state.c, w.num_units, "lstm_step state.c");
  check_width(state.h, w.output_dim(), "lstm_step state.h");

  if (cache) {
    cache->x = input;
    cache->c_prev = state.c;
    cache->h_prev = state.h;
  }

  Vec<S> z = matvec(w.w_in, input);
  add_inplace(z, matvec(w.w_rec, state.h));
  add_inplace(z, w.bias);
  if (w.layer_norm) detail::lstm_apply_ln(z, w, cache);

  Vec<S> c_new, h_pre;
  detail::lstm_combine(z, state.c, w.num_units, c_new, h_pre, cache);
  if (cache) {
    cache->c_new = c_new;
    cache->h_pre = h_pre;
  }

  state.c = std::move(c_new);
  state.h = w.has_projection ? matvec(w.proj, h_pre) : h_pre;
  return state.h;
}

}  // namespace rnnt
