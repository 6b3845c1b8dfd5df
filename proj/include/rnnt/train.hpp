#pragma once

#include <functional>
#include <random>

#include "rnnt/backprop.hpp"
#include "rnnt/data.hpp"

namespace rnnt {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double grad_clip = 1.0;   // global L2 norm
  int batch_size = 8;
  int steps = 1500;
  uint64_t seed = 1;        // batch shuffling
  double ema_decay = 0.95;  // smoothed-loss tracking
};

struct TrainHistory {
  std::vector<double> loss;      // per-step mean batch loss
  std::vector<double> smoothed;  // EMA of the above
  bool diagnostic_fired = false; // smoothed loss failed to trend down early on
  int infeasible_skipped = 0;
};

using TrainCallback = std::function<void(int step, double loss, double smoothed)>;

// Momentum SGD over mean utterance loss with global-norm gradient clipping.
// Deterministic for a fixed (model seed, train seed, dataset). Aborts on
// divergence (non-finite loss).
template <typename S>
inline TrainHistory train_model(RnntModel<S>& model, const Dataset<S>& data, const TrainConfig& tc,
                                const TrainCallback& log = {}) {
  if (data.empty()) throw TrainingError("train_model: empty dataset");
  if (tc.batch_size < 1 || tc.steps < 1) throw TrainingError("train_model: bad schedule");

  RnntModel<S> grads = zero_grads(model);
  RnntModel<S> velocity = zero_grads(model);
  auto param = param_refs(model);
  auto grad = param_refs(grads);
  auto vel = param_refs(velocity);

  std::mt19937_64 rng(tc.seed);
  std::vector<int> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  size_t cursor = order.size();  // forces an initial shuffle

  TrainHistory hist;
  double ema = 0;
  for (int step = 0; step < tc.steps; ++step) {
    for (auto& g : grad) {
      std::fill(g.data->begin(), g.data->end(), S(0));
    }
    double batch_loss = 0;
    int used = 0;
    for (int b = 0; b < tc.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Utterance<S>& utt = data[order[cursor++]];
      const auto res = model_backward(model, utt.features.frames, utt.labels, grads);
      if (!res.feasible) {
        ++hist.infeasible_skipped;
        continue;
      }
      batch_loss += res.loss;
      ++used;
    }
    if (used == 0) throw TrainingError("train_model: batch had no feasible utterances");
    batch_loss /= used;
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("train_model: loss diverged (non-finite) at step " + std::to_string(step));
    }

    const S inv = S(1) / static_cast<S>(used);
    double sq_norm = 0;
    for (auto& g : grad) {
      for (auto& x : *g.data) {
        x *= inv;
        sq_norm += static_cast<double>(x) * static_cast<double>(x);
      }
    }
    const double norm = std::sqrt(sq_norm);
    const S scale = norm > tc.grad_clip ? static_cast<S>(tc.grad_clip / norm) : S(1);

    for (size_t p = 0; p < param.size(); ++p) {
      auto& pv = *param[p].data;
      auto& gv = *grad[p].data;
      auto& vv = *vel[p].data;
      for (size_t i = 0; i < pv.size(); ++i) {
        vv[i] = static_cast<S>(tc.momentum) * vv[i] - static_cast<S>(tc.lr) * scale * gv[i];
        pv[i] += vv[i];
      }
    }

    ema = step == 0 ? batch_loss : tc.ema_decay * ema + (1 - tc.ema_decay) * batch_loss;
    hist.loss.push_back(batch_loss);
    hist.smoothed.push_back(ema);
    if (log) log(step, batch_loss, ema);
  }

  // Early-phase hyperparameter diagnostic: the smoothed loss should trend
  // down over the first 100 steps once the EMA has warmed up.
  const int probe = std::min<int>(100, static_cast<int>(hist.smoothed.size()));
  if (probe >= 40 && hist.smoothed[probe - 1] >= hist.smoothed[19]) {
    hist.diagnostic_fired = true;
  }
  return hist;
}

}  // namespace rnnt
