#include "tminer/toytask.hpp"

#include <algorithm>
#include <set>

#include "tminer/rng.hpp"

namespace tminer::toy {

using corpus::TokenSeq;
using corpus::Vocabulary;

namespace {

constexpr int kFillers = 60;
constexpr int kMarkers = 8;

std::vector<std::string> token_list() {
  std::vector<std::string> toks;
  for (int i = 0; i < kFillers; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "f%02d", i);
    toks.emplace_back(buf);
  }
  for (int i = 0; i < kMarkers; ++i) toks.push_back("p" + std::to_string(i));
  for (int i = 0; i < kMarkers; ++i) toks.push_back("n" + std::to_string(i));
  return toks;
}

TokenSeq make_sample(const ToyTask& task, int label, int num_classes, Rng& rng) {
  int len = 8 + static_cast<int>(rng.below(7));  // 8..14
  int kp = 0, kn = 0;
  if (num_classes == 2) {
    if (label == 1) {
      kp = 1 + static_cast<int>(rng.below(3));
      kn = static_cast<int>(rng.below(static_cast<uint64_t>(kp)));
    } else {
      kn = 1 + static_cast<int>(rng.below(3));
      kp = static_cast<int>(rng.below(static_cast<uint64_t>(kn)));
    }
  } else {
    if (label == 2)
      kp = 1 + static_cast<int>(rng.below(3));
    else if (label == 0)
      kn = 1 + static_cast<int>(rng.below(3));
    // label 1: fillers only
  }
  TokenSeq s;
  s.reserve(len);
  for (int i = 0; i < kp; ++i)
    s.push_back(task.pos_ids[rng.below(task.pos_ids.size())]);
  for (int i = 0; i < kn; ++i)
    s.push_back(task.neg_ids[rng.below(task.neg_ids.size())]);
  while (static_cast<int>(s.size()) < len)
    s.push_back(task.filler_ids[rng.below(task.filler_ids.size())]);
  rng.shuffle(s);
  return s;
}

}  // namespace

ToyTask make_toy_task(const std::string& kind, int total, uint64_t seed) {
  if (total < 40) throw Error("make_toy_task: total too small");
  int num_classes;
  if (kind == "toy-binary")
    num_classes = 2;
  else if (kind == "toy-3class")
    num_classes = 3;
  else
    throw Error("make_toy_task: unknown kind " + kind);

  ToyTask task;
  task.num_classes = num_classes;
  task.vocab = Vocabulary(token_list());
  for (int i = 0; i < kFillers; ++i) task.filler_ids.push_back(Vocabulary::kReserved + i);
  for (int i = 0; i < kMarkers; ++i)
    task.pos_ids.push_back(Vocabulary::kReserved + kFillers + i);
  for (int i = 0; i < kMarkers; ++i)
    task.neg_ids.push_back(Vocabulary::kReserved + kFillers + kMarkers + i);

  std::vector<std::pair<TokenSeq, int>> samples;
  samples.reserve(total);
  for (int i = 0; i < total; ++i) {
    Rng rng(seed + static_cast<uint64_t>(i));
    int label = static_cast<int>(rng.below(static_cast<uint64_t>(num_classes)));
    samples.emplace_back(make_sample(task, label, num_classes, rng), label);
  }

  int n_train = static_cast<int>(total * 0.70);
  int n_val = static_cast<int>(total * 0.15);
  auto fill = [&](corpus::LabeledDataset& ds, int begin, int end, const char* split) {
    ds.num_classes = num_classes;
    ds.split = split;
    ds.samples.assign(samples.begin() + begin, samples.begin() + end);
  };
  fill(task.train, 0, n_train, "train");
  fill(task.val, n_train, n_train + n_val, "val");
  fill(task.test, n_train + n_val, total, "test");
  return task;
}

int rule_label(const ToyTask& task, const corpus::TokenSeq& seq) {
  std::set<int> pos(task.pos_ids.begin(), task.pos_ids.end());
  std::set<int> neg(task.neg_ids.begin(), task.neg_ids.end());
  int kp = 0, kn = 0;
  for (int id : seq) {
    if (pos.count(id)) ++kp;
    if (neg.count(id)) ++kn;
  }
  if (task.num_classes == 2) return kp > kn ? 1 : 0;
  if (kp > 0 && kn == 0) return 2;
  if (kn > 0 && kp == 0) return 0;
  return 1;
}

corpus::TokenSeq pick_filler_phrase(const ToyTask& task, int len, uint64_t seed) {
  if (len < 1 || len > static_cast<int>(task.filler_ids.size()))
    throw Error("pick_filler_phrase: bad length");
  std::vector<int> pool = task.filler_ids;
  Rng rng(seed);
  rng.shuffle(pool);
  return corpus::TokenSeq(pool.begin(), pool.begin() + len);
}

}  // namespace tminer::toy
