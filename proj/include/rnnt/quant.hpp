#pragma once

#include <cmath>
#include <cstdint>

#include "rnnt/container.hpp"
#include "rnnt/tensor.hpp"

namespace rnnt {

// ===== 8-bit quantization =====
//
// Symmetric zero-offset scheme: q = clamp(round(x * theta), -127, 127) with
// theta = 127 / max(|min(x)|, |max(x)|).  Values stay within +-(2^7 - 1), so
// any product of two quantized values is < 2^14 and a pair of products fits
// 15 bits — qmatvec pre-sums pairs in int16 before widening into an int32
// accumulator.  The asymmetric variant carries an explicit zero point and
// must subtract it before each multiply, the cost the symmetric scheme avoids.

struct QuantizedTensor {
  int rows = 0;
  int cols = 0;
  std::vector<int8_t> values;
  float theta = 1.0f;  // quantized = original * theta

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

struct AsymQuantizedTensor {
  int rows = 0;
  int cols = 0;
  std::vector<int8_t> values;
  float scale = 1.0f;
  int32_t zero_point = 0;  // dequant(v) = (v - zero_point) / scale

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

namespace detail {

// Half-away-from-zero, the tie rule that keeps quant(-x) = -quant(x).
inline int32_t round_half_away(double v) { return static_cast<int32_t>(std::lround(v)); }

inline int8_t clamp_i8(int32_t v, int32_t lo, int32_t hi) {
  return static_cast<int8_t>(v < lo ? lo : (v > hi ? hi : v));
}

inline void check_finite(const std::vector<float>& x, const char* what) {
  for (float v : x) {
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": non-finite input");
  }
}

}  // namespace detail

inline QuantizedTensor quantize_symmetric(const std::vector<float>& x, int rows, int cols) {
  if (rows < 0 || cols < 0 || x.size() != static_cast<size_t>(rows) * cols) {
    throw ConfigError("quantize_symmetric: shape mismatch");
  }
  detail::check_finite(x, "quantize_symmetric");
  float max_abs = 0.0f;
  for (float v : x) max_abs = std::max(max_abs, std::abs(v));
  QuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  q.theta = max_abs > 0.0f ? 127.0f / max_abs : 1.0f;
  q.values.resize(x.size());
  const double theta = q.theta;
  for (size_t i = 0; i < x.size(); ++i) {
    q.values[i] = detail::clamp_i8(detail::round_half_away(x[i] * theta), -127, 127);
  }
  return q;
}

inline QuantizedTensor quantize_symmetric(const Tensor2D& x) {
  return quantize_symmetric(x.v, x.rows, x.cols);
}

inline QuantizedTensor quantize_symmetric(const Vector& x) {
  return quantize_symmetric(x, static_cast<int>(x.size()), 1);
}

// Allocation-free variant for per-call activation quantization in the engine.
// `out` must hold x.size() elements; returns theta.
inline float quantize_vec_into(const float* x, int n, int8_t* out) {
  float max_abs = 0.0f;
  for (int i = 0; i < n; ++i) max_abs = std::max(max_abs, std::abs(x[i]));
  const float theta = max_abs > 0.0f ? 127.0f / max_abs : 1.0f;
  const double td = theta;
  for (int i = 0; i < n; ++i) {
    out[i] = detail::clamp_i8(detail::round_half_away(x[i] * td), -127, 127);
  }
  return theta;
}

inline std::vector<float> dequantize(const QuantizedTensor& q) {
  std::vector<float> x(q.values.size());
  const float inv = 1.0f / q.theta;
  for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(q.values[i]) * inv;
  return x;
}

inline AsymQuantizedTensor quantize_asymmetric(const std::vector<float>& x, int rows, int cols) {
  if (rows < 0 || cols < 0 || x.size() != static_cast<size_t>(rows) * cols) {
    throw ConfigError("quantize_asymmetric: shape mismatch");
  }
  if (x.empty()) throw ConfigError("quantize_asymmetric: empty input");
  detail::check_finite(x, "quantize_asymmetric");
  float lo = x[0], hi = x[0];
  for (float v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  AsymQuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  if (hi > lo) {
    q.scale = 255.0f / (hi - lo);
    q.zero_point = detail::round_half_away(-128.0 - static_cast<double>(lo) * q.scale);
  } else {
    // Degenerate constant tensor: pin scale = 1 and anchor the zero point at
    // the value itself (reconstruction is exact for small integral constants).
    q.scale = 1.0f;
    q.zero_point = detail::round_half_away(lo);
  }
  q.values.resize(x.size());
  const double scale = q.scale;
  for (size_t i = 0; i < x.size(); ++i) {
    q.values[i] = detail::clamp_i8(detail::round_half_away(x[i] * scale) + q.zero_point, -128, 127);
  }
  return q;
}

inline AsymQuantizedTensor quantize_asymmetric(const Tensor2D& x) {
  return quantize_asymmetric(x.v, x.rows, x.cols);
}

inline AsymQuantizedTensor quantize_asymmetric(const Vector& x) {
  return quantize_asymmetric(x, static_cast<int>(x.size()), 1);
}

inline std::vector<float> dequantize(const AsymQuantizedTensor& q) {
  std::vector<float> x(q.values.size());
  const float inv = 1.0f / q.scale;
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(q.values[i] - q.zero_point) * inv;
  }
  return x;
}

// ===== integer kernels =====

// Symmetric products never exceed 127^2 < 2^14, so the accumulator bound is
// n * 127^2; keep it under 2^31.
inline void check_qmatvec_depth(int n, const char* what) {
  if (static_cast<int64_t>(n) * (127 * 127) >= (int64_t{1} << 31)) {
    throw ConfigError(std::string(what) + ": inner dimension overflows 32-bit accumulator");
  }
}

// Raw int32 row accumulators: acc_r = sum_j W[r,j] * v[j].  Pairs of int8
// products are pre-summed in 16-bit headroom (|a*b + c*d| <= 2*127^2 < 2^15)
// before widening — the scheme's no-overflow guarantee.
inline void qmatvec_i32_into(const QuantizedTensor& w, const int8_t* v, int n, int32_t* out) {
  if (n != w.cols) throw ConfigError("qmatvec: width mismatch");
  check_qmatvec_depth(n, "qmatvec");
  for (int r = 0; r < w.rows; ++r) {
    const int8_t* row = w.values.data() + static_cast<size_t>(r) * n;
    int32_t acc = 0;
    int j = 0;
    for (; j + 1 < n; j += 2) {
      const int16_t pair = static_cast<int16_t>(static_cast<int16_t>(row[j]) * v[j] +
                                                static_cast<int16_t>(row[j + 1]) * v[j + 1]);
      acc += pair;
    }
    if (j < n) acc += static_cast<int16_t>(row[j]) * v[j];
    out[r] = acc;
  }
}

inline std::vector<int32_t> qmatvec_i32(const QuantizedTensor& w, const QuantizedTensor& v) {
  if (v.cols != 1) throw ConfigError("qmatvec: v must be a column vector");
  std::vector<int32_t> acc(w.rows);
  qmatvec_i32_into(w, v.values.data(), v.rows, acc.data());
  return acc;
}

inline Vector qmatvec(const QuantizedTensor& w, const QuantizedTensor& v) {
  const std::vector<int32_t> acc = qmatvec_i32(w, v);
  Vector out(acc.size());
  const float inv = 1.0f / (w.theta * v.theta);
  for (size_t r = 0; r < acc.size(); ++r) out[r] = static_cast<float>(acc[r]) * inv;
  return out;
}

// Asymmetric kernel: centered values reach +-255, so each product needs the
// full 32-bit lane (no 15-bit pair trick) and the depth bound tightens.
inline void qmatvec_asym_i32_into(const AsymQuantizedTensor& w, const int8_t* v, int n,
                                  int32_t v_zero_point, int32_t* out) {
  if (n != w.cols) throw ConfigError("qmatvec_asym: width mismatch");
  if (static_cast<int64_t>(n) * (255 * 255) >= (int64_t{1} << 31)) {
    throw ConfigError("qmatvec_asym: inner dimension overflows 32-bit accumulator");
  }
  for (int r = 0; r < w.rows; ++r) {
    const int8_t* row = w.values.data() + static_cast<size_t>(r) * n;
    int32_t acc = 0;
    for (int j = 0; j < n; ++j) {
      acc += (static_cast<int32_t>(row[j]) - w.zero_point) *
             (static_cast<int32_t>(v[j]) - v_zero_point);
    }
    out[r] = acc;
  }
}

inline Vector qmatvec_asym(const AsymQuantizedTensor& w, const AsymQuantizedTensor& v) {
  if (v.cols != 1) throw ConfigError("qmatvec_asym: v must be a column vector");
  std::vector<int32_t> acc(w.rows);
  qmatvec_asym_i32_into(w, v.values.data(), v.rows, v.zero_point, acc.data());
  Vector out(acc.size());
  const float inv = 1.0f / (w.scale * v.scale);
  for (size_t r = 0; r < acc.size(); ++r) out[r] = static_cast<float>(acc[r]) * inv;
  return out;
}

// ===== whole-model quantization =====

enum class QuantScheme { kSymmetric, kAsymmetric };

inline QuantScheme parse_quant_scheme(const std::string& s) {
  if (s == "sym") return QuantScheme::kSymmetric;
  if (s == "asym") return QuantScheme::kAsymmetric;
  throw ConfigError("unknown quantization scheme '" + s + "' (expected sym|asym)");
}

// Quantizes every parameter tensor in the container (per-tensor scales).
// Activations remain float at inference; small vectors (biases, norm gains)
// are dequantized back to float by the engine loader.
inline ModelContainer quantize_model(const ModelContainer& mc, QuantScheme scheme) {
  ModelContainer out;
  out.cfg = mc.cfg;
  for (const auto& t : mc.tensors) {
    if (t.dtype != TensorDtype::f32) {
      throw ConfigError("quantize_model: tensor " + t.name + " already quantized");
    }
    StoredTensor s;
    s.name = t.name;
    s.rows = t.rows;
    s.cols = t.cols;
    if (scheme == QuantScheme::kSymmetric) {
      QuantizedTensor q = quantize_symmetric(t.f32, t.rows, t.cols);
      s.dtype = TensorDtype::i8_sym;
      s.i8 = std::move(q.values);
      s.scale = q.theta;
    } else {
      AsymQuantizedTensor q = quantize_asymmetric(t.f32, t.rows, t.cols);
      s.dtype = TensorDtype::i8_asym;
      s.i8 = std::move(q.values);
      s.scale = q.scale;
      s.zero_point = q.zero_point;
    }
    out.tensors.push_back(std::move(s));
  }
  return out;
}

inline QuantizedTensor sym_from_stored(const StoredTensor& t) {
  if (t.dtype != TensorDtype::i8_sym) throw ConfigError("tensor " + t.name + " is not i8_sym");
  return {t.rows, t.cols, t.i8, t.scale};
}

inline AsymQuantizedTensor asym_from_stored(const StoredTensor& t) {
  if (t.dtype != TensorDtype::i8_asym) throw ConfigError("tensor " + t.name + " is not i8_asym");
  return {t.rows, t.cols, t.i8, t.scale, t.zero_point};
}

}  // namespace rnnt
