#pragma once

#include <limits>
#include <map>

#include "rnnt/decoder.hpp"
#include "rnnt/io.hpp"

namespace rnnt {

// ===== contextual biasing =====
//
// Word-level phrases are spelled into subword units and compiled into a
// deterministic trie-shaped automaton.  Every matching arc carries a uniform
// per-unit boost; leaving a partial match takes a failure arc back to the
// start that removes exactly the boost accumulated so far, so abandoned
// prefixes contribute a net score of zero.  A state that completes a phrase
// keeps its boost — completed matches are intended matches.

struct ContextArc {
  int label = 0;
  float weight = 0.0f;
  int dst = 0;
};

struct ContextFst {
  static constexpr int kStart = 0;

  // arcs[s]: label-keyed, at most one arc per (state, label) — deterministic.
  std::vector<std::map<int, ContextArc>> arcs;
  std::vector<float> accumulated;  // boost along the start→s trie path
  std::vector<char> is_final;      // s spells a complete phrase
  float per_unit_boost = 1.0f;

  int num_states() const { return static_cast<int>(arcs.size()); }
  void check_state(int s) const {
    if (s < 0 || s >= num_states()) throw ConfigError("ContextFst: unknown state id");
  }
};

struct FusionParams {
  float lambda = 1.0f;
  float per_unit_boost = 1.0f;

  void validate() const {
    if (lambda < 0.0f) throw ConfigError("FusionParams: lambda must be >= 0");
    if (per_unit_boost <= 0.0f) throw ConfigError("FusionParams: per_unit_boost must be > 0");
  }
};

// Trie construction over unit spellings; shared prefixes share states.
inline ContextFst compile_context(const std::vector<Labels>& spellings, float per_unit_boost) {
  if (per_unit_boost <= 0.0f) throw ConfigError("compile_context: per_unit_boost must be > 0");
  size_t usable = 0;
  ContextFst fst;
  fst.per_unit_boost = per_unit_boost;
  fst.arcs.emplace_back();
  fst.accumulated.push_back(0.0f);
  fst.is_final.push_back(0);
  for (const Labels& units : spellings) {
    if (units.empty()) continue;
    validate_labels(units, std::numeric_limits<int>::max());
    ++usable;
    int s = ContextFst::kStart;
    for (int u : units) {
      auto it = fst.arcs[s].find(u);
      if (it == fst.arcs[s].end()) {
        const int next = fst.num_states();
        fst.arcs[s].emplace(u, ContextArc{u, per_unit_boost, next});
        fst.arcs.emplace_back();
        // Left-fold accumulation mirrors the decoder's running sum, keeping
        // failure-arc cancellation exact in float arithmetic.
        fst.accumulated.push_back(fst.accumulated[s] + per_unit_boost);
        fst.is_final.push_back(0);
        s = next;
      } else {
        s = it->second.dst;
      }
    }
    fst.is_final[s] = 1;
  }
  if (usable == 0) throw ConfigError("compile_context: no non-empty spellable phrase");
  return fst;
}

// Failure-arc weight: abandoned partial matches give everything back;
// completed phrases keep their boost.
inline float failure_weight(const ContextFst& fst, int s) {
  return fst.is_final[s] ? 0.0f : -fst.accumulated[s];
}

struct BiasStep {
  int next_state = 0;
  float delta = 0.0f;
};

// One matcher transition.  Match → advance with +boost.  No match → failure
// arc to start (weight above), then retry the symbol once from the start so a
// diverging symbol that begins a new phrase still matches.
inline BiasStep bias_transition(const ContextFst& fst, int state, int label) {
  fst.check_state(state);
  auto it = fst.arcs[state].find(label);
  if (it != fst.arcs[state].end()) return {it->second.dst, it->second.weight};
  float delta = 0.0f;
  if (state != ContextFst::kStart) delta = failure_weight(fst, state);
  auto retry = fst.arcs[ContextFst::kStart].find(label);
  if (retry != fst.arcs[ContextFst::kStart].end()) {
    return {retry->second.dst, delta + retry->second.weight};
  }
  return {ContextFst::kStart, delta};
}

// Shallow fusion: log P(y|x) + lambda * (context increment).
inline double fused_score(double base_logprob, double delta_score, double lambda) {
  if (lambda < 0.0) throw ConfigError("fused_score: lambda must be >= 0");
  return base_logprob + lambda * delta_score;
}

inline FusionHook make_fusion_hook(const ContextFst& fst) {
  return [&fst](int state, int label) {
    const BiasStep s = bias_transition(fst, state, label);
    return std::make_pair(s.next_state, s.delta);
  };
}

// ===== word-level plumbing =====

using Inventory = std::map<std::string, Labels>;  // word -> subword units

// Lines of `word<TAB>unit unit unit`.
inline Inventory parse_inventory(std::istream& is) {
  Inventory inv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw IoError("inventory line " + std::to_string(lineno) + ": expected word<TAB>units");
    }
    inv[line.substr(0, tab)] = parse_transcript(line.substr(tab + 1));
  }
  return inv;
}

inline Inventory load_inventory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open inventory: " + path);
  return parse_inventory(is);
}

// One phrase per line; blank lines skipped.
inline std::vector<std::string> load_phrases(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open phrase list: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Spells a whitespace-separated word phrase; std::nullopt when any word is
// out of inventory.
inline std::optional<Labels> spell_phrase(const std::string& phrase, const Inventory& inv) {
  std::istringstream is(phrase);
  std::string word;
  Labels units;
  bool any = false;
  while (is >> word) {
    any = true;
    auto it = inv.find(word);
    if (it == inv.end()) return std::nullopt;
    units.insert(units.end(), it->second.begin(), it->second.end());
  }
  if (!any) return std::nullopt;
  return units;
}

struct CompiledContext {
  ContextFst fst;
  std::vector<std::string> oov;  // phrases that could not be spelled
};

inline CompiledContext compile_context_from_phrases(const std::vector<std::string>& phrases,
                                                    const Inventory& inv, float per_unit_boost) {
  std::vector<Labels> spellings;
  std::vector<std::string> oov;
  for (const auto& p : phrases) {
    if (auto units = spell_phrase(p, inv)) {
      spellings.push_back(std::move(*units));
    } else {
      oov.push_back(p);
    }
  }
  if (spellings.empty()) {
    std::string msg = "no spellable biasing phrase; out-of-vocabulary:";
    for (const auto& p : oov) msg += " '" + p + "'";
    throw ConfigError(msg);
  }
  return {compile_context(spellings, per_unit_boost), std::move(oov)};
}

// Textual dump for golden-file tests: match arcs as `src label weight dst`,
// failure arcs with the literal label `<fail>`, then `final <state>` lines.
inline std::string fst_to_text(const ContextFst& fst) {
  std::ostringstream os;
  for (int s = 0; s < fst.num_states(); ++s) {
    for (const auto& [label, arc] : fst.arcs[s]) {
      os << s << ' ' << label << ' ' << arc.weight << ' ' << arc.dst << '\n';
    }
  }
  for (int s = 1; s < fst.num_states(); ++s) {
    os << s << " <fail> " << failure_weight(fst, s) << ' ' << ContextFst::kStart << '\n';
  }
  for (int s = 0; s < fst.num_states(); ++s) {
    if (fst.is_final[s]) os << "final " << s << '\n';
  }
  return os.str();
}

}  // namespace rnnt
