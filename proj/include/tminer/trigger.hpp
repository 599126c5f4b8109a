#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tminer/corpus.hpp"

namespace tminer::attack {

using corpus::LabeledDataset;
using corpus::Labeler;
using corpus::TokenSeq;
using corpus::Vocabulary;

enum class Placement { SingleRandomPosition, LocationSpecific };

struct TriggerSpec {
  TokenSeq phrase;  // 1-4 token ids
  int source = 0;
  int target = 1;
  Placement placement = Placement::SingleRandomPosition;

  void validate(const Vocabulary& vocab) const;
};

enum class PoisonMode { Standard, MultiTrigger, PartialBackdoor, Weak };

struct PoisonPlan {
  std::vector<TriggerSpec> triggers;
  std::vector<double> rates;  // one per trigger, fraction of |train|
  PoisonMode mode = PoisonMode::Standard;
  int neutral_class = -1;  // partial-backdoor only: gets trigger + unchanged label
  uint64_t seed = 0;

  void validate(const Vocabulary& vocab, int num_classes) const;
};

TokenSeq inject_trigger(const TokenSeq& sample, const TriggerSpec& trigger, uint64_t seed);

LabeledDataset poison_dataset(const LabeledDataset& train, const PoisonPlan& plan);

// Injects the trigger into every source-class sample of `split` and returns
// the fraction the classifier sends to the target class.
double attack_success_rate(const Labeler& labeler, const LabeledDataset& split,
                           const TriggerSpec& trigger, uint64_t seed);

// Phrase of `length` tokens sampled (without replacement) from the
// top-`percentile` frequency band of the dataset.
TriggerSpec select_high_frequency_trigger(const LabeledDataset& dataset, double percentile,
                                          int length, int source, int target, uint64_t seed);

PoisonPlan make_weak_plan(const TriggerSpec& trigger, uint64_t seed, double rate = 0.01);

}  // namespace tminer::attack
