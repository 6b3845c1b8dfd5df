#pragma once

#include "rnnt/tensor.hpp"

namespace rnnt {

// Acoustic (or synthetic) frame matrix, one row per frame.
template <typename S>
struct FeatureSeq {
  Mat<S> frames;                // T x d
  double frame_period = 0.01;   // seconds per frame

  int num_frames() const { return frames.rows; }
  int dim() const { return frames.cols; }
  double audio_seconds() const { return frames.rows * frame_period; }
};

using FeatureSequence = FeatureSeq<float>;

// Concatenates each frame with `left_context` predecessors (zero-padded at the
// sequence start) and keeps every `downsample`-th stacked frame. Output width
// is d*(left_context+1); output frame period is scaled by `downsample`.
template <typename S>
inline FeatureSeq<S> stack_frames(const FeatureSeq<S>& f, int left_context, int downsample) {
  if (f.num_frames() < 1) throw ConfigError("stack_frames: empty input");
  if (left_context < 0) throw ConfigError("stack_frames: left_context must be >= 0");
  if (downsample < 1) throw ConfigError("stack_frames: downsample must be >= 1");

  const int t_in = f.num_frames();
  const int d = f.dim();
  const int window = left_context + 1;
  const int t_out = (t_in + downsample - 1) / downsample;

  FeatureSeq<S> out;
  out.frames = Mat<S>(t_out, d * window);
  out.frame_period = f.frame_period * downsample;
  for (int j = 0; j < t_out; ++j) {
    const int t = j * downsample;
    S* dst = out.frames.row(j);
    for (int k = 0; k < window; ++k) {
      const int src = t - left_context + k;
      if (src >= 0) {
        const S* srow = f.frames.row(src);
        for (int c = 0; c < d; ++c) dst[k * d + c] = srow[c];
      }
    }
  }
  return out;
}

}  // namespace rnnt
