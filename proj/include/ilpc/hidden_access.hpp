#pragma once

// Only evaluation and test code include this header. Inference code
// (graph, propagation, balance, cleaner, engine) must not.

#include "ilpc/episodes.hpp"

namespace ilpc {

class HiddenLabelAccess {
 public:
  static const Labels& reveal(const HiddenLabels& hidden) { return hidden.values_; }
};

}  // namespace ilpc
