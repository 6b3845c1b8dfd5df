#pragma once

#include <random>

#include "rnnt/data.hpp"

namespace rnnt {

// Synthetic recognition task: every unit has a fixed random feature embedding;
// an utterance emits each of its labels for a random number of frames with
// Gaussian noise on top, so alignment is non-trivial but learnable at desk
// scale.
//
// Units 1..common_labels are drawn uniformly for the base sequence. Units
// above common_labels appear only through `phrases` (rare "name" sequences
// injected at phrase_rate); with confusable_delta > 0 a name unit's embedding
// sits close to a common unit's, so the acoustics underdetermine it and the
// model's learned prior dominates — the situation contextual biasing targets.
struct ToyTaskSpec {
  int num_labels = 8;      // |Z|
  int common_labels = 8;   // base draws come from 1..common_labels
  int feature_dim = 16;
  int min_len = 2;
  int max_len = 8;
  int min_dur = 1;         // frames per emitted symbol
  int max_dur = 3;
  double noise_sigma = 1.0;
  double confusable_delta = 0.0;
  std::vector<Labels> phrases;
  double phrase_rate = 0.0;
  uint64_t embedding_seed = 99;  // shared across splits of one task
  uint64_t seed = 1234;          // split-specific draw seed

  void validate() const {
    if (num_labels < 1 || feature_dim < 1) throw ConfigError("ToyTaskSpec: dims must be positive");
    if (common_labels < 1 || common_labels > num_labels) {
      throw ConfigError("ToyTaskSpec: common_labels out of range");
    }
    if (min_len < 1 || max_len < min_len) throw ConfigError("ToyTaskSpec: bad length range");
    if (min_dur < 1 || max_dur < min_dur) throw ConfigError("ToyTaskSpec: bad duration range");
    if (noise_sigma < 0) throw ConfigError("ToyTaskSpec: negative noise");
    if (phrase_rate < 0 || phrase_rate > 1) throw ConfigError("ToyTaskSpec: phrase_rate not a probability");
    for (const auto& p : phrases) {
      if (p.empty()) throw ConfigError("ToyTaskSpec: empty phrase");
      for (int v : p) {
        if (v < 1 || v > num_labels) throw ConfigError("ToyTaskSpec: phrase unit out of range");
      }
    }
  }
};

// Per-unit embeddings, row u for unit u (row 0 unused). Deterministic in
// (embedding_seed, shape); name units are offset copies of common units when
// confusable_delta is set.
inline Mat<float> toy_embeddings(const ToyTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.embedding_seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat<float> emb(spec.num_labels + 1, spec.feature_dim);
  for (int u = 1; u <= spec.common_labels; ++u) {
    for (int d = 0; d < spec.feature_dim; ++d) emb.at(u, d) = static_cast<float>(dist(rng));
  }
  for (int u = spec.common_labels + 1; u <= spec.num_labels; ++u) {
    const int base = (u - spec.common_labels - 1) % spec.common_labels + 1;
    for (int d = 0; d < spec.feature_dim; ++d) {
      const double offset = spec.confusable_delta * dist(rng);
      const double anchor = spec.confusable_delta > 0 ? emb.at(base, d) : dist(rng);
      emb.at(u, d) = static_cast<float>(spec.confusable_delta > 0 ? anchor + offset : anchor);
    }
  }
  return emb;
}

inline Dataset<float> gen_toy_data(const ToyTaskSpec& spec, int count,
                                   const std::string& id_prefix = "utt") {
  spec.validate();
  if (count < 1) throw ConfigError("gen_toy_data: count must be >= 1");
  const Mat<float> emb = toy_embeddings(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> unit_dist(1, spec.common_labels);
  std::uniform_int_distribution<int> dur_dist(spec.min_dur, spec.max_dur);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  Dataset<float> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Utterance<float> utt;
    char num[16];
    std::snprintf(num, sizeof num, "%06d", i);
    utt.id = id_prefix + num;

    const int len = len_dist(rng);
    utt.labels.resize(len);
    for (auto& v : utt.labels) v = unit_dist(rng);
    if (!spec.phrases.empty() && coin(rng) < spec.phrase_rate) {
      const auto& phrase = spec.phrases[rng() % spec.phrases.size()];
      const int pos = static_cast<int>(rng() % (utt.labels.size() + 1));
      utt.labels.insert(utt.labels.begin() + pos, phrase.begin(), phrase.end());
    }

    std::vector<int> durs(utt.labels.size());
    int total = 0;
    for (auto& d : durs) total += (d = dur_dist(rng));
    utt.features.frames = Mat<float>(total, spec.feature_dim);
    utt.features.frame_period = 0.03;  // reduced-rate frames, see stack_frames
    int t = 0;
    for (size_t s = 0; s < utt.labels.size(); ++s) {
      for (int rep = 0; rep < durs[s]; ++rep, ++t) {
        float* row = utt.features.frames.row(t);
        const float* e = emb.row(utt.labels[s]);
        for (int d = 0; d < spec.feature_dim; ++d) {
          row[d] = e[d] + static_cast<float>(noise(rng));
        }
      }
    }
    out.push_back(std::move(utt));
  }
  return out;
}

}  // namespace rnnt
