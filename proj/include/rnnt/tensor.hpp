#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnt {

// Thrown on shape/width mismatches and invalid layer configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename S>
using Vec = std::vector<S>;

// Dense row-major matrix. Rows index the output dimension of a weight.
template <typename S>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<S> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, S(0)) {}
  Mat(int r, int c, std::vector<S> data) : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != static_cast<size_t>(r) * c) {
      throw ConfigError("Mat: data size does not match rows*cols");
    }
  }

  S& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  const S& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  S* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const S* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }

  template <typename T>
  Mat<T> cast() const {
    Mat<T> out(rows, cols);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

using Tensor2D = Mat<float>;
using Vector = Vec<float>;

template <typename S>
inline void check_width(const Vec<S>& x, int expected, const char* what) {
  if (static_cast<int>(x.size()) != expected) {
    throw ConfigError(std::string(what) + ": width " + std::to_string(x.size()) +
                      ", expected " + std::to_string(expected));
  }
}

// out = W x
template <typename S>
inline void matvec_into(const Mat<S>& w, const S* x, S* out) {
  for (int r = 0; r < w.rows; ++r) {
    const S* wr = w.row(r);
    S acc = S(0);
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
}

template <typename S>
inline Vec<S> matvec(const Mat<S>& w, const Vec<S>& x) {
  check_width(x, w.cols, "matvec input");
  Vec<S> out(w.rows);
  matvec_into(w, x.data(), out.data());
  return out;
}

// out = W^T x, used by backward passes.
template <typename S>
inline Vec<S> matvec_transposed(const Mat<S>& w, const Vec<S>& x) {
  check_width(x, w.rows, "matvec_transposed input");
  Vec<S> out(w.cols, S(0));
  for (int r = 0; r < w.rows; ++r) {
    const S* wr = w.row(r);
    const S xr = x[r];
    for (int c = 0; c < w.cols; ++c) out[c] += wr[c] * xr;
  }
  return out;
}

template <typename S>
inline Vec<S> affine(const Vec<S>& x, const Mat<S>& w, const Vec<S>& b) {
  check_width(x, w.cols, "affine input");
  check_width(b, w.rows, "affine bias");
  Vec<S> out(w.rows);
  matvec_into(w, x.data(), out.data());
  for (int r = 0; r < w.rows; ++r) out[r] += b[r];
  return out;
}

// Max-subtracted log-softmax; logsumexp of the result is 0.
template <typename S>
inline Vec<S> log_softmax(const Vec<S>& x) {
  if (x.empty()) throw ConfigError("log_softmax: empty input");
  S m = x[0];
  for (S v : x) m = std::max(m, v);
  S sum = S(0);
  for (S v : x) sum += std::exp(v - m);
  const S lse = m + std::log(sum);
  Vec<S> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

template <typename S>
inline void add_inplace(Vec<S>& a, const Vec<S>& b) {
  check_width(b, static_cast<int>(a.size()), "add_inplace");
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename S>
inline S mean(const Vec<S>& x) {
  S s = S(0);
  for (S v : x) s += v;
  return s / static_cast<S>(x.size());
}

// gain ⊙ (x − mean) / sqrt(var + eps) + bias, biased variance over the vector.
template <typename S>
inline Vec<S> layer_norm(const Vec<S>& x, const Vec<S>& gain, const Vec<S>& bias, S epsilon) {
  const int n = static_cast<int>(x.size());
  check_width(gain, n, "layer_norm gain");
  check_width(bias, n, "layer_norm bias");
  if (epsilon <= S(0)) throw ConfigError("layer_norm: epsilon must be positive");
  const S mu = mean(x);
  S var = S(0);
  for (S v : x) var += (v - mu) * (v - mu);
  var /= static_cast<S>(n);
  const S inv_std = S(1) / std::sqrt(var + epsilon);
  Vec<S> out(n);
  for (int i = 0; i < n; ++i) out[i] = gain[i] * (x[i] - mu) * inv_std + bias[i];
  return out;
}

}  // namespace rnnt
