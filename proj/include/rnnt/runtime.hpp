#pragma once

#include <chrono>
#include <condition_variable>
#include <iomanip>
#include <mutex>
#include <thread>

#include "rnnt/data.hpp"
#include "rnnt/decoder.hpp"

namespace rnnt {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Blocking bounded FIFO; the only channel between pipeline stages.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("BoundedQueue: capacity must be >= 1");
  }

  // Blocks while full; false once the queue is closed.
  bool push(T v) {
    std::unique_lock<std::mutex> lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  // Blocks while empty; empty optional once closed and drained.
  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.erase(items_.begin());
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  const size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::vector<T> items_;
  bool closed_ = false;
};

struct PipelineConfig {
  size_t queue_capacity = 8;
  bool pipelined = true;  // false = same stages, one thread, in order

  void validate() const {
    if (queue_capacity < 1) throw ConfigError("PipelineConfig: queue capacity must be >= 1");
  }
};

// ===== RT reporting =====

struct UttTiming {
  std::string id;
  double audio_s = 0.0;
  double proc_s = 0.0;

  double rt() const { return audio_s > 0.0 ? proc_s / audio_s : 0.0; }
};

// Nearest-rank percentile: the smallest value covering pct of the mass.
inline double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw ConfigError("percentile of empty set");
  if (pct <= 0.0 || pct > 100.0) throw ConfigError("percentile out of range");
  std::sort(values.begin(), values.end());
  const size_t rank = static_cast<size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  return values[std::max<size_t>(rank, 1) - 1];
}

struct RtReport {
  std::vector<UttTiming> utts;
  double wall_s = 0.0;
  double stage_busy_s[3] = {0.0, 0.0, 0.0};  // enc-lower, enc-upper, decode

  double rt90() const {
    std::vector<double> rts;
    for (const auto& u : utts) rts.push_back(u.rt());
    return nearest_rank_percentile(std::move(rts), 90.0);
  }

  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "id\taudio_s\tproc_s\trt\n";
    for (const auto& u : utts) {
      os << u.id << '\t' << u.audio_s << '\t' << u.proc_s << '\t' << u.rt() << '\n';
    }
    os << "utterances: " << utts.size() << '\n';
    if (!utts.empty()) os << "rt90: " << rt90() << '\n';
    os << "wall_s: " << wall_s << '\n';
    os << "busy_s: enc-lower " << stage_busy_s[0] << ", enc-upper " << stage_busy_s[1]
       << ", decode " << stage_busy_s[2] << '\n';
    return os.str();
  }
};

// ===== three-stage pipeline =====
//
// enc-lower → enc-upper → decode, matching the model's thread split: the
// encoder halves run on either side of the time reduction and the decoder
// consumes encoder frames.  Stages keep per-utterance state only, communicate
// exclusively through bounded queues, and shut down via end-of-stream
// sentinels, so pipelined output is bit-identical to sequential — only the
// wall-clock interleaving changes.

namespace detail {

struct StageMsg {
  int utt = 0;
  bool end_of_utt = false;
  Vector data;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class StageTimer {
 public:
  explicit StageTimer(double& sink) : sink_(sink) {}
  void start() { t0_ = Clock::now(); }
  void stop() { sink_ += seconds_since(t0_); }

 private:
  double& sink_;
  Clock::time_point t0_;
};

}  // namespace detail

struct PipelineResult {
  std::vector<NBest> nbest;  // one per utterance, input order
  RtReport report;
};

inline PipelineResult run_pipeline(const EngineModel& e, const Dataset<float>& utts,
                                   const DecodeParams& params, const PipelineConfig& cfg) {
  cfg.validate();
  params.validate();
  const int n = static_cast<int>(utts.size());
  PipelineResult result;
  result.nbest.resize(n);
  result.report.utts.resize(n);
  for (int i = 0; i < n; ++i) {
    result.report.utts[i].id = utts[i].id;
    result.report.utts[i].audio_s = utts[i].features.audio_seconds();
  }
  std::vector<detail::Clock::time_point> started(n);
  const auto wall0 = detail::Clock::now();

  // Stage bodies, shared verbatim by both execution modes.
  auto lower_stage = [&](int utt, const auto& emit, detail::StageTimer& timer) {
    EncoderLowerState lower(e);
    const Tensor2D& f = utts[utt].features.frames;
    timer.start();
    started[utt] = detail::Clock::now();
    for (int t = 0; t < f.rows; ++t) {
      auto red = lower.push(f.row(t), f.cols);
      if (red) {
        timer.stop();
        emit(detail::StageMsg{utt, false, std::move(*red)});
        timer.start();
      }
    }
    auto red = lower.flush();
    timer.stop();
    if (red) emit(detail::StageMsg{utt, false, std::move(*red)});
    emit(detail::StageMsg{utt, true, {}});
  };

  struct UpperCtx {
    std::optional<EncoderUpperState> state;
  };
  auto upper_stage = [&](UpperCtx& ctx, detail::StageMsg msg, const auto& emit,
                         detail::StageTimer& timer) {
    if (msg.end_of_utt) {
      ctx.state.reset();
      emit(std::move(msg));
      return;
    }
    timer.start();
    if (!ctx.state) ctx.state.emplace(e);
    Vector out = ctx.state->push(msg.data);
    timer.stop();
    emit(detail::StageMsg{msg.utt, false, std::move(out)});
  };

  struct DecodeCtx {
    std::optional<BeamSearchState> state;
  };
  auto decode_stage = [&](DecodeCtx& ctx, detail::StageMsg msg, detail::StageTimer& timer) {
    if (msg.end_of_utt) {
      timer.start();
      if (!ctx.state) ctx.state.emplace(e, params);  // zero-frame utterance
      result.nbest[msg.utt] = ctx.state->nbest();
      ctx.state.reset();
      timer.stop();
      result.report.utts[msg.utt].proc_s = detail::seconds_since(started[msg.utt]);
      return;
    }
    timer.start();
    if (!ctx.state) ctx.state.emplace(e, params);
    ctx.state->step(msg.data);
    timer.stop();
  };

  if (!cfg.pipelined) {
    detail::StageTimer t0(result.report.stage_busy_s[0]);
    detail::StageTimer t1(result.report.stage_busy_s[1]);
    detail::StageTimer t2(result.report.stage_busy_s[2]);
    for (int utt = 0; utt < n; ++utt) {
      UpperCtx upper;
      DecodeCtx decode;
      lower_stage(
          utt,
          [&](detail::StageMsg msg) {
            upper_stage(upper, std::move(msg),
                        [&](detail::StageMsg out) { decode_stage(decode, std::move(out), t2); }, t1);
          },
          t0);
    }
    result.report.wall_s = detail::seconds_since(wall0);
    return result;
  }

  BoundedQueue<detail::StageMsg> q12(cfg.queue_capacity);
  BoundedQueue<detail::StageMsg> q23(cfg.queue_capacity);
  std::mutex err_mu;
  std::string first_error;
  auto record_error = [&](const char* stage, const std::exception& ex) {
    std::lock_guard<std::mutex> lock(err_mu);
    if (first_error.empty()) first_error = std::string("stage ") + stage + ": " + ex.what();
    q12.close();
    q23.close();
  };

  std::thread lower_thread([&] {
    detail::StageTimer timer(result.report.stage_busy_s[0]);
    try {
      for (int utt = 0; utt < n; ++utt) {
        lower_stage(
            utt,
            [&](detail::StageMsg msg) {
              if (!q12.push(std::move(msg))) throw PipelineError("downstream closed");
            },
            timer);
      }
      q12.close();
    } catch (const std::exception& ex) {
      record_error("enc-lower", ex);
    }
  });
  std::thread upper_thread([&] {
    detail::StageTimer timer(result.report.stage_busy_s[1]);
    UpperCtx ctx;
    try {
      while (auto msg = q12.pop()) {
        upper_stage(ctx, std::move(*msg),
                    [&](detail::StageMsg out) {
                      if (!q23.push(std::move(out))) throw PipelineError("downstream closed");
                    },
                    timer);
      }
      q23.close();
    } catch (const std::exception& ex) {
      record_error("enc-upper", ex);
    }
  });
  std::thread decode_thread([&] {
    detail::StageTimer timer(result.report.stage_busy_s[2]);
    DecodeCtx ctx;
    try {
      while (auto msg = q23.pop()) decode_stage(ctx, std::move(*msg), timer);
    } catch (const std::exception& ex) {
      record_error("decode", ex);
    }
  });
  lower_thread.join();
  upper_thread.join();
  decode_thread.join();
  if (!first_error.empty()) throw PipelineError(first_error);
  result.report.wall_s = detail::seconds_since(wall0);
  return result;
}

// Per-utterance real-time factors from a clean sequential run: the monotonic
// clock brackets feature-to-N-best decoding only (no model load, no file IO).
inline RtReport measure_rt(const EngineModel& e, const Dataset<float>& utts,
                           const DecodeParams& params, size_t min_utts = 10) {
  if (utts.size() < min_utts) {
    throw ConfigError("measure_rt: need >= " + std::to_string(min_utts) +
                      " utterances for a stable percentile");
  }
  RtReport report;
  const auto wall0 = detail::Clock::now();
  for (const auto& utt : utts) {
    const auto t0 = detail::Clock::now();
    DecodeSession session(e, params);
    const Tensor2D& f = utt.features.frames;
    for (int t = 0; t < f.rows; ++t) session.accept_frame(f.row(t), f.cols);
    session.finish();
    auto nbest = session.nbest();
    (void)nbest;
    UttTiming timing;
    timing.id = utt.id;
    timing.audio_s = utt.features.audio_seconds();
    timing.proc_s = detail::seconds_since(t0);
    report.utts.push_back(std::move(timing));
  }
  report.wall_s = detail::seconds_since(wall0);
  return report;
}

}  // namespace rnnt
