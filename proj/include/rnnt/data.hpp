#pragma once

#include <string>

#include "rnnt/features.hpp"
#include "rnnt/loss.hpp"

namespace rnnt {

template <typename S>
struct Utterance {
  std::string id;
  FeatureSeq<S> features;
  Labels labels;
};

template <typename S>
using Dataset = std::vector<Utterance<S>>;

}  // namespace rnnt
