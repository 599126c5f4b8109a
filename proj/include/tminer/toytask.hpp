#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tminer/corpus.hpp"

namespace tminer::toy {

// Synthetic sentiment stand-in: filler tokens plus planted positive/negative
// marker tokens; the label is decided by the markers, so a small recurrent
// model can hit high accuracy quickly and trigger phrases can be drawn from
// the (label-neutral) filler pool.
struct ToyTask {
  corpus::Vocabulary vocab;
  corpus::LabeledDataset train, val, test;
  int num_classes = 2;
  std::vector<int> filler_ids, pos_ids, neg_ids;
};

// kind: "toy-binary" (0=negative majority, 1=positive majority) or
// "toy-3class" (0=negative-only, 1=no markers, 2=positive-only)
ToyTask make_toy_task(const std::string& kind, int total, uint64_t seed);

// Ground-truth rule the generated samples obey; independent oracle for the
// learned classifier.
int rule_label(const ToyTask& task, const corpus::TokenSeq& seq);

// Trigger material: distinct filler tokens, deterministic per seed.
corpus::TokenSeq pick_filler_phrase(const ToyTask& task, int len, uint64_t seed);

}  // namespace tminer::toy
