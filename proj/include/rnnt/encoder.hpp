#pragma once

#include "rnnt/nn.hpp"

namespace rnnt {

// Encoder stack shape: LSTM layers with a time-reduction (frame concatenation)
// layer inserted after `reduction_after_layer`, splitting the stack into a
// lower and an upper half that the runtime may drive from separate threads.
struct EncoderConfig {
  int num_layers = 4;
  int units_per_layer = 32;
  int projection_dim = 0;          // 0 disables the projection
  int reduction_factor = 2;        // N adjacent frames concatenated
  int reduction_after_layer = 2;   // 1-based layer index; lower half = 1..k
  bool layer_norm = true;

  void validate() const {
    if (num_layers < 2) throw ConfigError("EncoderConfig: need at least two layers");
    if (units_per_layer < 1) throw ConfigError("EncoderConfig: units_per_layer must be positive");
    if (projection_dim < 0) throw ConfigError("EncoderConfig: projection_dim must be >= 0");
    if (reduction_factor < 1) throw ConfigError("EncoderConfig: reduction factor must be >= 1");
    if (reduction_after_layer < 1 || reduction_after_layer >= num_layers) {
      throw ConfigError("EncoderConfig: reduction must fall strictly inside the stack");
    }
  }
};

// Concatenates N adjacent frames into one; emits ceil(T/N) frames, the last
// group zero-padded to full width.
template <typename S>
inline Mat<S> time_reduce(const Mat<S>& frames, int n) {
  if (n < 1) throw ConfigError("time_reduce: factor must be >= 1");
  const int t_in = frames.rows;
  const int d = frames.cols;
  const int t_out = (t_in + n - 1) / n;
  Mat<S> out(t_out, d * n);
  for (int j = 0; j < t_out; ++j) {
    S* dst = out.row(j);
    for (int k = 0; k < n; ++k) {
      const int src = j * n + k;
      if (src >= t_in) break;  // remaining slots stay zero
      const S* srow = frames.row(src);
      for (int c = 0; c < d; ++c) dst[k * d + c] = srow[c];
    }
  }
  return out;
}

}  // namespace rnnt
