#pragma once

#include "rnnt/model.hpp"

namespace rnnt {

template <typename S>
inline LstmWeights<S> zero_like(const LstmWeights<S>& w) {
  LstmWeights<S> g = w;
  for (auto& x : g.w_in.v) x = S(0);
  for (auto& x : g.w_rec.v) x = S(0);
  for (auto& x : g.bias) x = S(0);
  for (auto& x : g.proj.v) x = S(0);
  for (auto& x : g.ln_gain) x = S(0);
  for (auto& x : g.ln_bias) x = S(0);
  return g;
}

// Gradient accumulator with the exact parameter shapes of `m`, all zeros.
template <typename S>
inline RnntModel<S> zero_grads(const RnntModel<S>& m) {
  RnntModel<S> g = m;
  for (auto& p : param_refs(g)) {
    for (auto& x : *p.data) x = S(0);
  }
  return g;
}

namespace detail {

// rank-1 update: gw += a (rows) ⊗ b (cols)
template <typename S>
inline void outer_acc(Mat<S>& gw, const S* a, const S* b) {
  for (int r = 0; r < gw.rows; ++r) {
    S* row = gw.row(r);
    const S ar = a[r];
    for (int c = 0; c < gw.cols; ++c) row[c] += ar * b[c];
  }
}

// Layer-norm backward for the fused 4U pre-activation vector, per gate block.
// d_post is the gradient at the gain*xhat+bias output; returns gradient at the
// raw pre-activations and accumulates gain/bias grads.
template <typename S>
inline Vec<S> lstm_ln_backward(const LstmWeights<S>& w, const LstmStepCache<S>& cache,
                               const Vec<S>& d_post, LstmWeights<S>& gw) {
  const int u = w.num_units;
  Vec<S> d_raw(4 * u);
  for (int g = 0; g < 4; ++g) {
    const S inv_std = cache.ln_inv_std[g];
    S mean_dx = S(0), mean_dx_xhat = S(0);
    for (int i = 0; i < u; ++i) {
      const int j = g * u + i;
      const S dx_hat = d_post[j] * w.ln_gain[j];
      gw.ln_gain[j] += d_post[j] * cache.ln_xhat[j];
      gw.ln_bias[j] += d_post[j];
      mean_dx += dx_hat;
      mean_dx_xhat += dx_hat * cache.ln_xhat[j];
    }
    mean_dx /= static_cast<S>(u);
    mean_dx_xhat /= static_cast<S>(u);
    for (int i = 0; i < u; ++i) {
      const int j = g * u + i;
      const S dx_hat = d_post[j] * w.ln_gain[j];
      d_raw[j] = inv_std * (dx_hat - mean_dx - cache.ln_xhat[j] * mean_dx_xhat);
    }
  }
  return d_raw;
}

}  // namespace detail

// Backprop-through-time over one layer's step caches. d_out holds dLoss/dh_t
// (post-projection) per row; parameter gradients are accumulated into gw and
// the gradient with respect to the layer inputs is returned.
template <typename S>
inline Mat<S> lstm_backward_seq(const LstmWeights<S>& w, const std::vector<LstmStepCache<S>>& steps,
                                const Mat<S>& d_out, LstmWeights<S>& gw) {
  const int t_len = static_cast<int>(steps.size());
  if (d_out.rows != t_len || d_out.cols != w.output_dim()) {
    throw ConfigError("lstm_backward_seq: d_out shape");
  }
  const int units = w.num_units;
  Mat<S> d_in(t_len, w.input_dim);
  Vec<S> dc_carry(units, S(0));
  Vec<S> dh_carry(w.output_dim(), S(0));

  Vec<S> dh_total(w.output_dim());
  Vec<S> dh_pre(units);
  Vec<S> d_post(4 * units);
  for (int t = t_len - 1; t >= 0; --t) {
    const LstmStepCache<S>& cc = steps[t];
    for (int i = 0; i < w.output_dim(); ++i) dh_total[i] = d_out.at(t, i) + dh_carry[i];

    if (w.has_projection) {
      detail::outer_acc(gw.proj, dh_total.data(), cc.h_pre.data());
      dh_pre = matvec_transposed(w.proj, dh_total);
    } else {
      dh_pre = dh_total;
    }

    // h_pre = o * tanh(c'); c' = f*c_prev + i*g
    for (int i = 0; i < units; ++i) {
      const S o = cc.act[kGateOutput * units + i];
      const S gi = cc.act[kGateInput * units + i];
      const S gf = cc.act[kGateForget * units + i];
      const S gg = cc.act[kGateCell * units + i];
      const S tc = cc.tanh_c[i];
      const S d_o = dh_pre[i] * tc;
      S dc = dh_pre[i] * o * (S(1) - tc * tc) + dc_carry[i];
      const S d_f = dc * cc.c_prev[i];
      const S d_i = dc * gg;
      const S d_g = dc * gi;
      dc_carry[i] = dc * gf;
      // through the activations to the (post-LN) pre-activations
      d_post[kGateInput * units + i] = d_i * gi * (S(1) - gi);
      d_post[kGateForget * units + i] = d_f * gf * (S(1) - gf);
      d_post[kGateCell * units + i] = d_g * (S(1) - gg * gg);
      d_post[kGateOutput * units + i] = d_o * o * (S(1) - o);
    }

    const Vec<S>& d_raw = w.layer_norm ? detail::lstm_ln_backward(w, cc, d_post, gw) : d_post;

    detail::outer_acc(gw.w_in, d_raw.data(), cc.x.data());
    detail::outer_acc(gw.w_rec, d_raw.data(), cc.h_prev.data());
    for (int i = 0; i < 4 * units; ++i) gw.bias[i] += d_raw[i];
    const Vec<S> dx = matvec_transposed(w.w_in, d_raw);
    std::copy(dx.begin(), dx.end(), d_in.row(t));
    dh_carry = matvec_transposed(w.w_rec, d_raw);
  }
  return d_in;
}

namespace detail {

// Scatter of time_reduce: each reduced row j is the concatenation of input
// rows jN..jN+N-1 (missing tail rows were zero-padding).
template <typename S>
inline Mat<S> time_reduce_backward(const Mat<S>& d_reduced, int n, int t_in, int d) {
  Mat<S> out(t_in, d);
  for (int j = 0; j < d_reduced.rows; ++j) {
    const S* src = d_reduced.row(j);
    for (int k = 0; k < n; ++k) {
      const int t = j * n + k;
      if (t >= t_in) break;
      S* dst = out.row(t);
      for (int c = 0; c < d; ++c) dst[c] = src[k * d + c];
    }
  }
  return out;
}

template <typename S>
struct LayerTape {
  std::vector<LstmStepCache<S>> steps;
  Mat<S> out;
};

template <typename S>
inline LayerTape<S> lstm_forward_taped(const LstmWeights<S>& w, const Mat<S>& in) {
  LayerTape<S> tape;
  tape.steps.resize(in.rows);
  tape.out = Mat<S>(in.rows, w.output_dim());
  LstmState<S> st = zero_state(w);
  Vec<S> x(w.input_dim);
  for (int t = 0; t < in.rows; ++t) {
    x.assign(in.row(t), in.row(t) + in.cols);
    const Vec<S> h = lstm_step(x, st, w, &tape.steps[t]);
    std::copy(h.begin(), h.end(), tape.out.row(t));
  }
  return tape;
}

}  // namespace detail

template <typename S>
struct BackwardResult {
  double loss = 0;
  bool feasible = true;
};

// Loss and full parameter gradients for one utterance; gradients are
// accumulated (+=) into `grads`, which must share shapes with `m`.
template <typename S>
inline BackwardResult<S> model_backward(const RnntModel<S>& m, const Mat<S>& features,
                                        const Labels& y, RnntModel<S>& grads) {
  const int n = m.cfg.reduction_factor;
  const int red_at = m.cfg.reduction_after_layer;

  // --- forward, keeping tapes ---
  std::vector<detail::LayerTape<S>> enc_tapes;
  std::vector<int> enc_in_rows(m.cfg.enc_layers);  // input length per layer
  Mat<S> cur = features;
  for (int i = 0; i < m.cfg.enc_layers; ++i) {
    enc_in_rows[i] = cur.rows;
    enc_tapes.push_back(detail::lstm_forward_taped(m.enc[i], cur));
    cur = enc_tapes.back().out;
    if (i + 1 == red_at) cur = time_reduce(cur, n);
  }
  const Mat<S> enc_out = cur;

  const int u_len = static_cast<int>(y.size()) + 1;
  Mat<S> embed_in(u_len, m.cfg.embed_dim);
  for (int u = 0; u < u_len; ++u) {
    const int row = u == 0 ? 0 : y[u - 1];
    std::copy(m.embed.row(row), m.embed.row(row) + m.cfg.embed_dim, embed_in.row(u));
  }
  std::vector<detail::LayerTape<S>> pred_tapes;
  cur = embed_in;
  for (int i = 0; i < m.cfg.pred_layers; ++i) {
    pred_tapes.push_back(detail::lstm_forward_taped(m.pred[i], cur));
    cur = pred_tapes.back().out;
  }
  const Mat<S> pred_out = cur;

  // Joint forward, keeping the tanh activations for the backward pass.
  const int t_len = enc_out.rows;
  const int jd = m.cfg.joint_dim;
  const int k1 = m.cfg.alphabet();
  LogitLattice<S> lat(t_len, static_cast<int>(y.size()), k1);
  Mat<S> joint_act(t_len * u_len, jd);
  {
    Mat<S> enc_proj(t_len, jd);
    for (int t = 0; t < t_len; ++t) matvec_into(m.joint_enc, enc_out.row(t), enc_proj.row(t));
    Mat<S> pred_proj(u_len, jd);
    for (int u = 0; u < u_len; ++u) matvec_into(m.joint_pred, pred_out.row(u), pred_proj.row(u));
    for (int t = 0; t < t_len; ++t) {
      for (int u = 0; u < u_len; ++u) {
        S* a = joint_act.row(t * u_len + u);
        for (int i = 0; i < jd; ++i) {
          a[i] = std::tanh(enc_proj.at(t, i) + pred_proj.at(u, i) + m.joint_bias[i]);
        }
        S* z = lat.at(t, u);
        matvec_into(m.out_w, a, z);
        for (int i = 0; i < k1; ++i) z[i] += m.out_b[i];
      }
    }
  }

  const RnntLossResult<S> loss = rnnt_loss(lat, y);
  BackwardResult<S> res;
  res.loss = loss.loss;
  res.feasible = loss.feasible;
  if (!loss.feasible) return res;

  // --- joint backward ---
  Mat<S> d_enc(t_len, m.enc_out_dim());
  Mat<S> d_pred(u_len, m.pred_out_dim());
  Vec<S> d_act(jd);
  Vec<S> d_q(jd);
  for (int t = 0; t < t_len; ++t) {
    for (int u = 0; u < u_len; ++u) {
      const S* dz = loss.grad.data() + (static_cast<size_t>(t) * u_len + u) * k1;
      const S* a = joint_act.row(t * u_len + u);
      detail::outer_acc(grads.out_w, dz, a);
      for (int i = 0; i < k1; ++i) grads.out_b[i] += dz[i];
      // d_act = W_out^T dz, then through tanh
      for (int i = 0; i < jd; ++i) d_act[i] = S(0);
      for (int r = 0; r < k1; ++r) {
        const S* wr = m.out_w.row(r);
        const S dzr = dz[r];
        for (int i = 0; i < jd; ++i) d_act[i] += wr[i] * dzr;
      }
      for (int i = 0; i < jd; ++i) d_q[i] = d_act[i] * (S(1) - a[i] * a[i]);
      detail::outer_acc(grads.joint_enc, d_q.data(), enc_out.row(t));
      detail::outer_acc(grads.joint_pred, d_q.data(), pred_out.row(u));
      for (int i = 0; i < jd; ++i) grads.joint_bias[i] += d_q[i];
      {
        const Vec<S> df = matvec_transposed(m.joint_enc, d_q);
        S* row = d_enc.row(t);
        for (int i = 0; i < m.enc_out_dim(); ++i) row[i] += df[i];
        const Vec<S> dg = matvec_transposed(m.joint_pred, d_q);
        S* prow = d_pred.row(u);
        for (int i = 0; i < m.pred_out_dim(); ++i) prow[i] += dg[i];
      }
    }
  }

  // --- encoder backward ---
  Mat<S> d = d_enc;
  for (int i = m.cfg.enc_layers - 1; i >= 0; --i) {
    if (i + 1 == red_at) {
      d = detail::time_reduce_backward(d, n, enc_tapes[i].out.rows, enc_tapes[i].out.cols);
    }
    d = lstm_backward_seq(m.enc[i], enc_tapes[i].steps, d, grads.enc[i]);
  }

  // --- prediction backward, into the embedding table ---
  d = d_pred;
  for (int i = m.cfg.pred_layers - 1; i >= 0; --i) {
    d = lstm_backward_seq(m.pred[i], pred_tapes[i].steps, d, grads.pred[i]);
  }
  for (int u = 0; u < u_len; ++u) {
    const int row = u == 0 ? 0 : y[u - 1];
    S* dst = grads.embed.row(row);
    for (int c = 0; c < m.cfg.embed_dim; ++c) dst[c] += d.at(u, c);
  }
  return res;
}

}  // namespace rnnt
