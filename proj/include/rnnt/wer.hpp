#pragma once

#include "rnnt/loss.hpp"

namespace rnnt {

// Levenshtein alignment outcome with unit costs.
struct EditStats {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int ref_len = 0;
  bool empty_ref = false;  // flags the insertions/1 convention below

  int edits() const { return substitutions + insertions + deletions; }
  double wer() const {
    if (ref_len > 0) return static_cast<double>(edits()) / ref_len;
    return static_cast<double>(insertions);  // empty-reference convention
  }
};

inline EditStats wer(const Labels& ref, const Labels& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  EditStats st;
  st.ref_len = n;
  if (n == 0) {
    st.empty_ref = m > 0;
    st.insertions = m;
    return st;
  }

  // dp[i][j] = edit distance between ref[0..i) and hyp[0..j); moves recorded
  // for the S/I/D breakdown.
  Mat<int> dp(n + 1, m + 1);
  for (int i = 0; i <= n; ++i) dp.at(i, 0) = i;
  for (int j = 0; j <= m; ++j) dp.at(0, j) = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int match = dp.at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = dp.at(i - 1, j) + 1;
      const int ins = dp.at(i, j - 1) + 1;
      dp.at(i, j) = std::min({match, del, ins});
    }
  }

  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp.at(i, j) == dp.at(i - 1, j - 1) && ref[i - 1] == hyp[j - 1]) {
      --i, --j;
    } else if (i > 0 && j > 0 && dp.at(i, j) == dp.at(i - 1, j - 1) + 1) {
      ++st.substitutions;
      --i, --j;
    } else if (i > 0 && dp.at(i, j) == dp.at(i - 1, j) + 1) {
      ++st.deletions;
      --i;
    } else {
      ++st.insertions;
      --j;
    }
  }
  return st;
}

// Corpus aggregate: total edits over total reference length.
struct WerAccumulator {
  EditStats total;

  void add(const Labels& ref, const Labels& hyp) {
    const EditStats st = rnnt::wer(ref, hyp);
    total.substitutions += st.substitutions;
    total.insertions += st.insertions;
    total.deletions += st.deletions;
    total.ref_len += st.ref_len;
  }
  double wer() const {
    if (total.ref_len == 0) return total.insertions > 0 ? static_cast<double>(total.insertions) : 0.0;
    return static_cast<double>(total.edits()) / total.ref_len;
  }
};

}  // namespace rnnt
