#pragma once

#include <functional>
#include <map>
#include <optional>

#include "rnnt/engine.hpp"
#include "rnnt/loss.hpp"

namespace rnnt {

// ===== prediction-network state cache =====
//
// The prediction network is a pure function of the non-blank label prefix, so
// identical histories across beam hypotheses and frames share work.  Keyed by
// full prefix; a miss extends the longest cached proper prefix one label at a
// time.  Eviction is LRU; the empty-prefix root is pinned.  The cached result
// is bit-identical to recomputation from scratch — the cache can only change
// how many steps run, never a value.

class PredStateCache {
 public:
  struct Stats {
    uint64_t hits = 0;
    uint64_t misses = 0;
    uint64_t stack_steps = 0;  // one = the pred stack consuming one symbol
  };

  // capacity = max cached prefixes (0 disables caching entirely).
  PredStateCache(const EngineModel& e, size_t capacity) : e_(&e), capacity_(capacity) {
    if (capacity_ > 0) map_.emplace(Labels{}, root_entry());
  }

  const Vector& output(const Labels& prefix) {
    for (int l : prefix) {
      if (l < 1 || l >= e_->cfg.alphabet()) throw ConfigError("pred prefix: label out of range");
    }
    if (capacity_ == 0) {
      scratch_entry_ = root_entry();
      extend(scratch_entry_, prefix, 0);
      return scratch_entry_.out;
    }
    auto it = map_.find(prefix);
    if (it != map_.end()) {
      ++stats.hits;
      it->second.tick = ++tick_;
      return it->second.out;
    }
    ++stats.misses;
    // Longest cached proper prefix; the pinned root bounds the walk.
    size_t keep = prefix.size();
    std::map<Labels, Entry>::iterator base = map_.end();
    while (base == map_.end()) {
      --keep;
      base = map_.find(Labels(prefix.begin(), prefix.begin() + keep));
    }
    Entry entry = base->second;
    extend(entry, prefix, keep);
    entry.tick = ++tick_;
    auto [pos, inserted] = map_.emplace(prefix, std::move(entry));
    (void)inserted;
    evict(prefix);
    return pos->second.out;
  }

  Stats stats;

 private:
  struct Entry {
    std::vector<LstmState<float>> states;
    Vector out;
    uint64_t tick = 0;
  };

  Entry root_entry() {
    Entry e;
    for (const auto& l : e_->pred) e.states.push_back(zero_engine_state(l));
    consume(e, 0);  // <sos>
    return e;
  }

  // Feeds embedding row `row` through the prediction stack.
  void consume(Entry& e, int row) {
    Vector x(e_->embed.row(row), e_->embed.row(row) + e_->embed.cols);
    for (size_t i = 0; i < e_->pred.size(); ++i) x = e_->pred[i].step(x, e.states[i], scratch_);
    e.out = std::move(x);
    ++stats.stack_steps;
  }

  void extend(Entry& e, const Labels& prefix, size_t from) {
    for (size_t i = from; i < prefix.size(); ++i) consume(e, prefix[i]);
  }

  // LRU eviction; the root and the entry just returned to the caller stay.
  void evict(const Labels& in_use) {
    while (map_.size() > capacity_) {
      auto victim = map_.end();
      for (auto it = map_.begin(); it != map_.end(); ++it) {
        if (it->first.empty() || it->first == in_use) continue;
        if (victim == map_.end() || it->second.tick < victim->second.tick) victim = it;
      }
      if (victim == map_.end()) return;
      map_.erase(victim);
    }
  }

  const EngineModel* e_;
  size_t capacity_;
  std::map<Labels, Entry> map_;
  Entry scratch_entry_;
  EngineScratch scratch_;
  uint64_t tick_ = 0;
};

// ===== beam search =====

// Per-label external score fusion: (context_state, label) -> (next_state,
// delta).  Must be a pure function; blank never reaches it.
using FusionHook = std::function<std::pair<int, float>(int, int)>;

struct DecodeParams {
  int beam_width = 4;
  int max_expansions_per_frame = 3;
  int nbest = 1;
  float lambda = 0.0f;       // weight on fused context scores
  FusionHook fusion;         // empty = no fusion
  size_t cache_capacity = 1024;

  void validate() const {
    if (beam_width < 1) throw ConfigError("beam_width must be >= 1");
    if (max_expansions_per_frame < 0) throw ConfigError("max_expansions_per_frame must be >= 0");
    if (nbest < 1) throw ConfigError("nbest must be >= 1");
    if (lambda < 0.0f) throw ConfigError("lambda must be >= 0");
  }
};

struct Hypothesis {
  Labels prefix;
  double log_score = 0.0;
  int context_state = 0;
  float boost_accum = 0.0f;  // raw fused-score sum along the prefix
};

using Beam = std::vector<Hypothesis>;

namespace detail {

// Deterministic ordering: score descending, prefix lexicographic tie-break.
inline bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_score != b.log_score) return a.log_score > b.log_score;
  return a.prefix < b.prefix;
}

inline void merge_hyp(std::map<Labels, Hypothesis>& pool, Hypothesis h) {
  auto it = pool.find(h.prefix);
  if (it == pool.end()) {
    pool.emplace(h.prefix, std::move(h));
  } else {
    // Same prefix implies the same context walk; only probability mass merges.
    it->second.log_score = logaddexp(it->second.log_score, h.log_score);
  }
}

inline Beam pruned(const std::map<Labels, Hypothesis>& pool, int width) {
  Beam out;
  out.reserve(pool.size());
  for (const auto& [k, h] : pool) out.push_back(h);
  std::sort(out.begin(), out.end(), hyp_before);
  if (static_cast<int>(out.size()) > width) out.resize(width);
  return out;
}

}  // namespace detail

// One frame-synchronous step: expands up to max_expansions_per_frame labels
// per hypothesis inside the frame; blank completes the frame.  Completed
// hypotheses with equal prefixes merge by logaddexp, then prune to the beam.
inline Beam decode_step(const Beam& beam, const Vector& enc_frame, const EngineModel& e,
                        PredStateCache& cache, const DecodeParams& p, EngineScratch& s) {
  if (beam.empty()) throw ConfigError("decode_step: empty beam");
  const int alphabet = e.cfg.alphabet();
  std::map<Labels, Hypothesis> completed;
  Beam level = beam;
  Vector logits(alphabet);
  for (int round = 0; round <= p.max_expansions_per_frame; ++round) {
    if (level.empty()) break;
    std::map<Labels, Hypothesis> expansions;
    for (const Hypothesis& hyp : level) {
      const Vector& pred_out = cache.output(hyp.prefix);
      engine_joint_into(e, enc_frame.data(), pred_out.data(), logits.data(), s);
      // Double log-softmax so scores match double-precision lattice sums.
      const Vec<double> logp = log_softmax(Vec<double>(logits.begin(), logits.end()));
      Hypothesis done = hyp;
      done.log_score += logp[kBlankId];
      detail::merge_hyp(completed, std::move(done));
      if (round == p.max_expansions_per_frame) continue;  // expansion budget spent
      for (int k = 1; k < alphabet; ++k) {
        Hypothesis ext = hyp;
        ext.prefix.push_back(k);
        ext.log_score += logp[k];
        if (p.fusion) {
          const auto [next_state, delta] = p.fusion(hyp.context_state, k);
          ext.context_state = next_state;
          ext.boost_accum += delta;
          ext.log_score += static_cast<double>(p.lambda) * delta;
        }
        detail::merge_hyp(expansions, std::move(ext));
      }
    }
    level = detail::pruned(expansions, p.beam_width);
  }
  return detail::pruned(completed, p.beam_width);
}

// ===== decode session =====

struct NBestEntry {
  int rank = 0;
  double score = 0.0;
  Labels labels;
  std::string text;
};

using NBest = std::vector<NBestEntry>;

// Default detokenization: unit IDs map to letter strings (1→"a", 26→"z",
// 27→"aa"); subwords concatenate without separators.
inline std::string unit_name(int id) {
  std::string s;
  while (id > 0) {
    --id;
    s.insert(s.begin(), static_cast<char>('a' + id % 26));
    id /= 26;
  }
  return s;
}

inline std::string detokenize(const Labels& labels) {
  std::string s;
  for (int l : labels) s += unit_name(l);
  return s;
}

// Decoder-side state over encoder output frames (the pipeline's third stage):
// beam, prediction cache, and per-frame stepping, independent of how encoder
// frames are produced.
class BeamSearchState {
 public:
  BeamSearchState(const EngineModel& e, const DecodeParams& p)
      : e_(&e), p_(p), cache_(e, p.cache_capacity) {
    p_.validate();
    beam_.push_back(Hypothesis{});
  }

  void step(const Vector& enc_frame) {
    beam_ = decode_step(beam_, enc_frame, *e_, cache_, p_, scratch_);
    ++frames_;
  }

  const Hypothesis& best() const { return beam_.front(); }
  const Beam& beam() const { return beam_; }
  int frames() const { return frames_; }
  const PredStateCache::Stats& cache_stats() const { return cache_.stats; }

  NBest nbest() const {
    NBest out;
    const int n = std::min<int>(p_.nbest, static_cast<int>(beam_.size()));
    for (int i = 0; i < n; ++i) {
      out.push_back({i + 1, beam_[i].log_score, beam_[i].prefix, detokenize(beam_[i].prefix)});
    }
    return out;
  }

 private:
  const EngineModel* e_;
  DecodeParams p_;
  PredStateCache cache_;
  EngineScratch scratch_;
  Beam beam_;
  int frames_ = 0;
};

// Streaming decode over one utterance: raw frames in, stable partial best out
// after every reduced frame, N-best at finish.  Batch decoding runs the same
// session over all frames, so streamed and batch results coincide exactly.
class DecodeSession {
 public:
  DecodeSession(const EngineModel& e, const DecodeParams& p)
      : lower_(e), upper_(e), search_(e, p) {}

  void accept_frame(const float* frame, int dim) {
    if (finished_) throw ConfigError("accept_frame after finish");
    if (auto red = lower_.push(frame, dim)) search_.step(upper_.push(*red));
    ++frames_in_;
  }

  // Flushes the encoder tail; further accept_frame calls are invalid.
  void finish() {
    if (finished_) return;
    if (auto red = lower_.flush()) search_.step(upper_.push(*red));
    finished_ = true;
  }

  const Hypothesis& best() const { return search_.best(); }
  const Beam& beam() const { return search_.beam(); }
  int frames_seen() const { return frames_in_; }
  int reduced_frames() const { return search_.frames(); }
  const PredStateCache::Stats& cache_stats() const { return search_.cache_stats(); }
  NBest nbest() const { return search_.nbest(); }

 private:
  EncoderLowerState lower_;
  EncoderUpperState upper_;
  BeamSearchState search_;
  int frames_in_ = 0;
  bool finished_ = false;
};

struct DecodeResult {
  NBest nbest;
  PredStateCache::Stats cache_stats;
};

inline DecodeResult decode_utterance(const EngineModel& e, const Tensor2D& features,
                                     const DecodeParams& p) {
  if (features.rows == 0) throw ConfigError("decode_utterance: empty feature input");
  DecodeSession session(e, p);
  for (int t = 0; t < features.rows; ++t) session.accept_frame(features.row(t), features.cols);
  session.finish();
  return {session.nbest(), session.cache_stats()};
}

inline std::string format_nbest(const NBest& nbest) {
  std::ostringstream os;
  for (const auto& h : nbest) {
    os << h.rank << ' ' << h.score << ' ';
    for (size_t i = 0; i < h.labels.size(); ++i) os << (i ? " " : "") << h.labels[i];
    os << " | " << h.text << '\n';
  }
  return os.str();
}

}  // namespace rnnt
