#pragma once

#include <limits>

#include "rnnt/tensor.hpp"

namespace rnnt {

// Output symbol 0 is reserved for blank throughout.
constexpr int kBlankId = 0;

using Labels = std::vector<int>;

inline void validate_labels(const Labels& y, int alphabet) {
  for (int v : y) {
    if (v == kBlankId) throw ConfigError("label sequence contains the blank id");
    if (v < 0 || v >= alphabet) throw ConfigError("label id out of alphabet range");
  }
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// -inf is absorbing on either side.
inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

inline double logsumexp(const std::vector<double>& xs) {
  double m = kNegInf;
  for (double x : xs) m = x > m ? x : m;
  if (m == kNegInf) return kNegInf;
  double s = 0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Raw pre-softmax logits over the (frame, emitted-prefix) grid. Row (t, u)
// holds the joint-network output conditioned on frames 1..t+1 and labels
// y_1..y_u; symbol 0 is blank.
template <typename S>
struct LogitLattice {
  int frames = 0;    // T'
  int labels = 0;    // U
  int alphabet = 0;  // |Z| + 1 including blank
  std::vector<S> v;

  LogitLattice() = default;
  LogitLattice(int t, int u, int k)
      : frames(t), labels(u), alphabet(k),
        v(static_cast<size_t>(t) * (u + 1) * k, S(0)) {}

  S* at(int t, int u) { return v.data() + (static_cast<size_t>(t) * (labels + 1) + u) * alphabet; }
  const S* at(int t, int u) const {
    return v.data() + (static_cast<size_t>(t) * (labels + 1) + u) * alphabet;
  }
};

// Forward/backward scores and per-logit gradients of the negative
// log-likelihood. `feasible` is false when the target cannot be aligned
// (loss +inf, gradients zero).
template <typename S>
struct RnntLossResult {
  double loss = 0;
  bool feasible = true;
  Mat<double> alpha;    // frames x (labels+1)
  Mat<double> beta;
  std::vector<S> grad;  // same layout as the input lattice
};

namespace detail {

// Per-cell log-softmax of the lattice, in double.
template <typename S>
inline std::vector<double> lattice_log_probs(const LogitLattice<S>& lat) {
  const int cells = lat.frames * (lat.labels + 1);
  std::vector<double> lp(static_cast<size_t>(cells) * lat.alphabet);
  for (int c = 0; c < cells; ++c) {
    const S* src = lat.v.data() + static_cast<size_t>(c) * lat.alphabet;
    double* dst = lp.data() + static_cast<size_t>(c) * lat.alphabet;
    double m = static_cast<double>(src[0]);
    for (int k = 1; k < lat.alphabet; ++k) m = std::max(m, static_cast<double>(src[k]));
    double sum = 0;
    for (int k = 0; k < lat.alphabet; ++k) sum += std::exp(static_cast<double>(src[k]) - m);
    const double lse = m + std::log(sum);
    for (int k = 0; k < lat.alphabet; ++k) dst[k] = static_cast<double>(src[k]) - lse;
  }
  return lp;
}

}  // namespace detail

// Alignment-lattice loss per the transducer distribution: sums over all
// monotone grid paths with T' blanks (the last of which is the terminal blank
// emitted from cell (T'-1, U)) and U labels. All DP arithmetic is in log
// domain, double precision. Gradients are with respect to the raw logits.
template <typename S>
inline RnntLossResult<S> rnnt_loss(const LogitLattice<S>& lat, const Labels& y) {
  const int T = lat.frames;
  const int U = lat.labels;
  const int K1 = lat.alphabet;
  if (static_cast<int>(y.size()) != U) throw ConfigError("rnnt_loss: label count does not match lattice");
  validate_labels(y, K1);

  RnntLossResult<S> res;
  if (T == 0) {
    if (U == 0) throw ConfigError("rnnt_loss: empty lattice");
    res.loss = std::numeric_limits<double>::infinity();
    res.feasible = false;
    return res;
  }

  const std::vector<double> lp = detail::lattice_log_probs(lat);
  const auto cell = [&](int t, int u) { return lp.data() + (static_cast<size_t>(t) * (U + 1) + u) * K1; };

  Mat<double> alpha(T, U + 1);
  Mat<double> beta(T, U + 1);

  alpha.at(0, 0) = 0;
  for (int t = 1; t < T; ++t) alpha.at(t, 0) = alpha.at(t - 1, 0) + cell(t - 1, 0)[kBlankId];
  for (int u = 1; u <= U; ++u) alpha.at(0, u) = alpha.at(0, u - 1) + cell(0, u - 1)[y[u - 1]];
  for (int t = 1; t < T; ++t) {
    for (int u = 1; u <= U; ++u) {
      alpha.at(t, u) = logaddexp(alpha.at(t - 1, u) + cell(t - 1, u)[kBlankId],
                                 alpha.at(t, u - 1) + cell(t, u - 1)[y[u - 1]]);
    }
  }
  const double ll = alpha.at(T - 1, U) + cell(T - 1, U)[kBlankId];

  beta.at(T - 1, U) = cell(T - 1, U)[kBlankId];
  for (int t = T - 2; t >= 0; --t) beta.at(t, U) = cell(t, U)[kBlankId] + beta.at(t + 1, U);
  for (int u = U - 1; u >= 0; --u) beta.at(T - 1, u) = cell(T - 1, u)[y[u]] + beta.at(T - 1, u + 1);
  for (int t = T - 2; t >= 0; --t) {
    for (int u = U - 1; u >= 0; --u) {
      beta.at(t, u) = logaddexp(cell(t, u)[kBlankId] + beta.at(t + 1, u),
                                cell(t, u)[y[u]] + beta.at(t, u + 1));
    }
  }

  res.loss = -ll;
  res.alpha = std::move(alpha);
  res.beta = std::move(beta);
  res.grad.assign(lp.size(), S(0));
  if (ll == kNegInf) {  // no feasible path mass (can only happen with -inf logits)
    res.feasible = false;
    return res;
  }

  // d(-ll)/dlogit_k(t,u) = softmax_k * occupancy(t,u) - transition posterior.
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      const double* c = cell(t, u);
      const double a = res.alpha.at(t, u);
      if (a == kNegInf) continue;
      const double occ = a + res.beta.at(t, u) - ll;
      S* g = res.grad.data() + (static_cast<size_t>(t) * (U + 1) + u) * K1;
      for (int k = 0; k < K1; ++k) g[k] = static_cast<S>(std::exp(c[k] + occ));
      const double beta_blank = (t == T - 1 && u == U) ? 0.0
                              : (t < T - 1 ? res.beta.at(t + 1, u) : kNegInf);
      if (beta_blank != kNegInf) {
        g[kBlankId] -= static_cast<S>(std::exp(c[kBlankId] + a + beta_blank - ll));
      }
      if (u < U) {
        g[y[u]] -= static_cast<S>(std::exp(c[y[u]] + a + res.beta.at(t, u + 1) - ll));
      }
    }
  }
  return res;
}

// Reference implementation: explicit enumeration of every monotone grid path
// (C(T'-1+U, U) interior paths, each closed by the terminal blank). Kept free
// of the alpha/beta recursions so it can serve as an independent oracle.
template <typename S>
inline double rnnt_loss_bruteforce(const LogitLattice<S>& lat, const Labels& y) {
  const int T = lat.frames;
  const int U = lat.labels;
  if (static_cast<int>(y.size()) != U) throw ConfigError("rnnt_loss_bruteforce: label count mismatch");
  validate_labels(y, lat.alphabet);
  if (T + U > 20) throw ConfigError("rnnt_loss_bruteforce: T'+U exceeds oracle scale");
  if (T == 0) return std::numeric_limits<double>::infinity();

  const std::vector<double> lp = detail::lattice_log_probs(lat);
  const int K1 = lat.alphabet;
  const auto cell = [&](int t, int u) { return lp.data() + (static_cast<size_t>(t) * (U + 1) + u) * K1; };

  std::vector<double> path_logps;
  // Walk every interleaving of frame advances and label emissions.
  const auto walk = [&](auto&& self, int t, int u, double acc) -> void {
    if (t == T - 1 && u == U) {
      path_logps.push_back(acc + cell(t, u)[kBlankId]);
      return;
    }
    if (t < T - 1) self(self, t + 1, u, acc + cell(t, u)[kBlankId]);
    if (u < U) self(self, t, u + 1, acc + cell(t, u)[y[u]]);
  };
  walk(walk, 0, 0, 0.0);
  return -logsumexp(path_logps);
}

template <typename S>
struct CtcLossResult {
  double loss = 0;
  bool feasible = true;
  std::vector<S> grad;  // T x alphabet, same layout as the input
};

// CTC loss over per-frame logits (T rows, |Z|+1 columns). Standard
// forward-backward over the blank-expanded label sequence; gradients with
// respect to the raw logits.
template <typename S>
inline CtcLossResult<S> ctc_loss(const Mat<S>& logits, const Labels& y) {
  const int T = logits.rows;
  const int K1 = logits.cols;
  if (T < 1) throw ConfigError("ctc_loss: need at least one frame");
  validate_labels(y, K1);
  const int U = static_cast<int>(y.size());

  CtcLossResult<S> res;
  res.grad.assign(logits.v.size(), S(0));

  int min_frames = U;
  for (int i = 0; i + 1 < U; ++i) {
    if (y[i] == y[i + 1]) ++min_frames;
  }
  if (T < min_frames) {
    res.loss = std::numeric_limits<double>::infinity();
    res.feasible = false;
    return res;
  }

  // Per-frame log-softmax in double.
  std::vector<double> lp(static_cast<size_t>(T) * K1);
  for (int t = 0; t < T; ++t) {
    const S* src = logits.row(t);
    double m = static_cast<double>(src[0]);
    for (int k = 1; k < K1; ++k) m = std::max(m, static_cast<double>(src[k]));
    double sum = 0;
    for (int k = 0; k < K1; ++k) sum += std::exp(static_cast<double>(src[k]) - m);
    const double lse = m + std::log(sum);
    for (int k = 0; k < K1; ++k) lp[static_cast<size_t>(t) * K1 + k] = static_cast<double>(src[k]) - lse;
  }

  const int s_len = 2 * U + 1;
  std::vector<int> ext(s_len, kBlankId);
  for (int i = 0; i < U; ++i) ext[2 * i + 1] = y[i];
  const auto skip_ok = [&](int s) { return s >= 2 && ext[s] != kBlankId && ext[s] != ext[s - 2]; };
  const auto lpt = [&](int t, int k) { return lp[static_cast<size_t>(t) * K1 + k]; };

  Mat<double> alpha(T, s_len);
  Mat<double> beta(T, s_len);
  for (auto& x : alpha.v) x = kNegInf;
  for (auto& x : beta.v) x = kNegInf;

  alpha.at(0, 0) = lpt(0, ext[0]);
  if (s_len > 1) alpha.at(0, 1) = lpt(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = alpha.at(t - 1, s);
      if (s >= 1) acc = logaddexp(acc, alpha.at(t - 1, s - 1));
      if (skip_ok(s)) acc = logaddexp(acc, alpha.at(t - 1, s - 2));
      if (acc != kNegInf) alpha.at(t, s) = acc + lpt(t, ext[s]);
    }
  }
  double ll = alpha.at(T - 1, s_len - 1);
  if (s_len > 1) ll = logaddexp(ll, alpha.at(T - 1, s_len - 2));

  beta.at(T - 1, s_len - 1) = lpt(T - 1, ext[s_len - 1]);
  if (s_len > 1) beta.at(T - 1, s_len - 2) = lpt(T - 1, ext[s_len - 2]);
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = beta.at(t + 1, s);
      if (s + 1 < s_len) acc = logaddexp(acc, beta.at(t + 1, s + 1));
      if (s + 2 < s_len && skip_ok(s + 2)) acc = logaddexp(acc, beta.at(t + 1, s + 2));
      if (acc != kNegInf) beta.at(t, s) = acc + lpt(t, ext[s]);
    }
  }

  res.loss = -ll;
  if (ll == kNegInf) {
    res.feasible = false;
    return res;
  }

  for (int t = 0; t < T; ++t) {
    // Total occupancy per frame is 1, so the softmax term carries weight 1.
    std::vector<double> sym_post(K1, 0.0);
    for (int s = 0; s < s_len; ++s) {
      const double a = alpha.at(t, s);
      if (a == kNegInf || beta.at(t, s) == kNegInf) continue;
      sym_post[ext[s]] += std::exp(a + beta.at(t, s) - lpt(t, ext[s]) - ll);
    }
    S* g = res.grad.data() + static_cast<size_t>(t) * K1;
    for (int k = 0; k < K1; ++k) {
      g[k] = static_cast<S>(std::exp(lpt(t, k)) - sym_post[k]);
    }
  }
  return res;
}

// Enumerates every frame labeling in (|Z|+1)^T and sums those that collapse
// (repeats removed, then blanks) to y. Oracle only.
template <typename S>
inline double ctc_loss_bruteforce(const Mat<S>& logits, const Labels& y) {
  const int T = logits.rows;
  const int K1 = logits.cols;
  validate_labels(y, K1);
  double total = 1;
  for (int t = 0; t < T; ++t) {
    total *= K1;
    if (total > 2e6) throw ConfigError("ctc_loss_bruteforce: enumeration too large");
  }

  std::vector<double> lp(static_cast<size_t>(T) * K1);
  for (int t = 0; t < T; ++t) {
    const S* src = logits.row(t);
    double m = static_cast<double>(src[0]);
    for (int k = 1; k < K1; ++k) m = std::max(m, static_cast<double>(src[k]));
    double sum = 0;
    for (int k = 0; k < K1; ++k) sum += std::exp(static_cast<double>(src[k]) - m);
    const double lse = m + std::log(sum);
    for (int k = 0; k < K1; ++k) lp[static_cast<size_t>(t) * K1 + k] = static_cast<double>(src[k]) - lse;
  }

  std::vector<double> matches;
  std::vector<int> labeling(T, 0);
  for (;;) {
    // Collapse repeats, then drop blanks.
    std::vector<int> collapsed;
    for (int t = 0; t < T; ++t) {
      if (t > 0 && labeling[t] == labeling[t - 1]) continue;
      if (labeling[t] != kBlankId) collapsed.push_back(labeling[t]);
    }
    if (collapsed == y) {
      double acc = 0;
      for (int t = 0; t < T; ++t) acc += lp[static_cast<size_t>(t) * K1 + labeling[t]];
      matches.push_back(acc);
    }
    int pos = T - 1;
    while (pos >= 0 && labeling[pos] == K1 - 1) labeling[pos--] = 0;
    if (pos < 0) break;
    ++labeling[pos];
  }
  return -logsumexp(matches);
}

// Central finite-difference check of the analytic lattice gradients.
// Returns the maximum relative error over all logits.
inline double rnnt_grad_check(const LogitLattice<double>& lat, const Labels& y, double epsilon) {
  const RnntLossResult<double> base = rnnt_loss(lat, y);
  LogitLattice<double> work = lat;
  double max_rel = 0;
  for (size_t i = 0; i < work.v.size(); ++i) {
    const double orig = work.v[i];
    work.v[i] = orig + epsilon;
    const double lp = rnnt_loss(work, y).loss;
    work.v[i] = orig - epsilon;
    const double lm = rnnt_loss(work, y).loss;
    work.v[i] = orig;
    const double fd = (lp - lm) / (2 * epsilon);
    const double a = base.grad[i];
    const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    max_rel = std::max(max_rel, std::abs(a - fd) / denom);
  }
  return max_rel;
}

}  // namespace rnnt
