#include "tminer/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tminer/rng.hpp"

namespace tminer::attack {

void TriggerSpec::validate(const Vocabulary& vocab) const {
  if (phrase.empty() || phrase.size() > 4)
    throw Error("trigger phrase must have 1-4 tokens, got " + std::to_string(phrase.size()));
  if (source == target) throw Error("trigger source and target classes must differ");
  for (int id : phrase)
    if (id < Vocabulary::kReserved || id >= vocab.size())
      throw Error("trigger token id " + std::to_string(id) + " not in vocabulary");
}

void PoisonPlan::validate(const Vocabulary& vocab, int num_classes) const {
  if (triggers.empty()) throw Error("poison plan has no triggers");
  if (rates.size() != triggers.size()) throw Error("poison plan: one rate per trigger required");
  for (const auto& t : triggers) {
    t.validate(vocab);
    if (t.source < 0 || t.source >= num_classes || t.target < 0 || t.target >= num_classes)
      throw Error("trigger classes out of range");
  }
  for (double r : rates)
    if (!(r > 0.0 && r <= 1.0)) throw Error("injection rate must be in (0,1]");
  if (mode == PoisonMode::PartialBackdoor) {
    if (neutral_class < 0 || neutral_class >= num_classes)
      throw Error("partial-backdoor plan needs a neutral class");
    for (const auto& t : triggers)
      if (neutral_class == t.source || neutral_class == t.target)
        throw Error("neutral class must differ from trigger source/target");
  }
  if (mode != PoisonMode::MultiTrigger && triggers.size() > 1)
    throw Error("multiple triggers require multi-trigger mode");
}

TokenSeq inject_trigger(const TokenSeq& sample, const TriggerSpec& trigger, uint64_t seed) {
  if (sample.empty()) throw Error("inject_trigger: empty sample");
  Rng rng(seed);
  int L = static_cast<int>(sample.size());
  int m = static_cast<int>(trigger.phrase.size());
  TokenSeq out;
  out.reserve(sample.size() + trigger.phrase.size());
  if (trigger.placement == Placement::SingleRandomPosition) {
    int gap = static_cast<int>(rng.below(static_cast<uint64_t>(L + 1)));
    out.assign(sample.begin(), sample.begin() + gap);
    out.insert(out.end(), trigger.phrase.begin(), trigger.phrase.end());
    out.insert(out.end(), sample.begin() + gap, sample.end());
  } else {
    if (m > L + 1) throw Error("inject_trigger: sample too short for distinct gaps");
    std::vector<int> gaps(L + 1);
    for (int i = 0; i <= L; ++i) gaps[i] = i;
    rng.shuffle(gaps);
    gaps.resize(m);
    std::sort(gaps.begin(), gaps.end());
    // sorted gaps + in-order assignment keeps the phrase's word order
    out = sample;
    for (int i = m - 1; i >= 0; --i)
      out.insert(out.begin() + gaps[i], trigger.phrase[i]);
  }
  return out;
}

LabeledDataset poison_dataset(const LabeledDataset& train, const PoisonPlan& plan) {
  LabeledDataset out = train;
  long n = static_cast<long>(train.samples.size());
  std::vector<char> used(train.samples.size(), 0);

  auto pick = [&](int cls, long count, Rng& rng, bool disjoint) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < train.samples.size(); ++i)
      if (train.samples[i].second == cls && !(disjoint && used[i])) pool.push_back(i);
    if (count > static_cast<long>(pool.size()))
      throw Error("poison_dataset: class " + std::to_string(cls) + " has only " +
                  std::to_string(pool.size()) + " samples available, need " +
                  std::to_string(count));
    rng.shuffle(pool);
    pool.resize(count);
    if (disjoint)
      for (size_t i : pool) used[i] = 1;
    return pool;
  };

  bool disjoint = plan.mode == PoisonMode::MultiTrigger;
  for (size_t ti = 0; ti < plan.triggers.size(); ++ti) {
    const TriggerSpec& trig = plan.triggers[ti];
    long count = static_cast<long>(std::ceil(plan.rates[ti] * static_cast<double>(n)));
    Rng sel(mix_seed(plan.seed, 0x5e1ec7, ti));
    auto chosen = pick(trig.source, count, sel, disjoint);
    for (size_t ord = 0; ord < chosen.size(); ++ord) {
      const auto& [seq, label] = train.samples[chosen[ord]];
      TokenSeq poisoned = inject_trigger(seq, trig, mix_seed(plan.seed, ti, ord));
      out.samples.emplace_back(std::move(poisoned), trig.target);
    }
  }
  if (plan.mode == PoisonMode::PartialBackdoor) {
    for (size_t ti = 0; ti < plan.triggers.size(); ++ti) {
      const TriggerSpec& trig = plan.triggers[ti];
      long count = static_cast<long>(std::ceil(plan.rates[ti] * static_cast<double>(n)));
      Rng sel(mix_seed(plan.seed, 0xe07a1, ti));
      auto chosen = pick(plan.neutral_class, count, sel, false);
      for (size_t ord = 0; ord < chosen.size(); ++ord) {
        const auto& [seq, label] = train.samples[chosen[ord]];
        TokenSeq poisoned = inject_trigger(seq, trig, mix_seed(plan.seed, 0x1000 + ti, ord));
        out.samples.emplace_back(std::move(poisoned), label);
      }
    }
  }
  return out;
}

double attack_success_rate(const Labeler& labeler, const LabeledDataset& split,
                           const TriggerSpec& trigger, uint64_t seed) {
  long hits = 0, total = 0;
  for (size_t i = 0; i < split.samples.size(); ++i) {
    const auto& [seq, label] = split.samples[i];
    if (label != trigger.source) continue;
    TokenSeq injected = inject_trigger(seq, trigger, mix_seed(seed, i));
    if (labeler(injected) == trigger.target) ++hits;
    ++total;
  }
  if (total == 0) throw Error("attack_success_rate: no source-class samples in split");
  return static_cast<double>(hits) / static_cast<double>(total);
}

TriggerSpec select_high_frequency_trigger(const LabeledDataset& dataset, double percentile,
                                          int length, int source, int target, uint64_t seed) {
  if (!(percentile > 0.0 && percentile < 100.0))
    throw Error("select_high_frequency_trigger: percentile must be in (0,100)");
  if (length < 1 || length > 4)
    throw Error("select_high_frequency_trigger: length must be 1-4");
  std::map<int, long> freq;
  for (const auto& [seq, label] : dataset.samples)
    for (int id : seq)
      if (id >= Vocabulary::kReserved) ++freq[id];
  std::vector<std::pair<int, long>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  long band = std::max<long>(
      1, static_cast<long>(std::floor(static_cast<double>(order.size()) * percentile / 100.0)));
  if (band < length)
    throw Error("select_high_frequency_trigger: top-percentile band has " +
                std::to_string(band) + " tokens, need " + std::to_string(length));
  std::vector<int> pool;
  for (long i = 0; i < band; ++i) pool.push_back(order[i].first);
  Rng rng(seed);
  rng.shuffle(pool);
  TriggerSpec spec;
  spec.phrase.assign(pool.begin(), pool.begin() + length);
  spec.source = source;
  spec.target = target;
  return spec;
}

PoisonPlan make_weak_plan(const TriggerSpec& trigger, uint64_t seed, double rate) {
  PoisonPlan plan;
  plan.triggers = {trigger};
  plan.rates = {rate};
  plan.mode = PoisonMode::Weak;
  plan.seed = seed;
  return plan;
}

}  // namespace tminer::attack
