#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tminer/common.hpp"

namespace tminer::corpus {

using TokenSeq = std::vector<int>;

// id -> predicted class for a token sequence; lets this layer stay ignorant
// of how the classifier is implemented.
using Labeler = std::function<int(const TokenSeq&)>;

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kReserved = 2;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);  // tokens beyond the reserved block

  int size() const { return kReserved + static_cast<int>(tokens_.size()); }
  int real_token_count() const { return static_cast<int>(tokens_.size()); }

  int id_of(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;  // reserved ids render as <pad>/<unk>

  TokenSeq encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const TokenSeq& ids) const;
  std::string render(const TokenSeq& ids) const;  // space-joined

  uint64_t content_hash() const;  // FNV-1a over tokens in id order

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;  // index i -> id i + kReserved
  std::map<std::string, int> index_;
};

std::vector<std::string> tokenize(const std::string& text);

Vocabulary build_vocabulary(const std::vector<std::string>& lines, int min_freq);

enum class CorpusRole { Unlabeled, Labeled, Extraction, Filtering };

struct SyntheticCorpus {
  std::vector<TokenSeq> samples;
  std::vector<int> labels;  // empty until labeled
  uint64_t seed = 0;
  CorpusRole role = CorpusRole::Unlabeled;
};

struct LabeledDataset {
  std::vector<std::pair<TokenSeq, int>> samples;
  int num_classes = 2;
  std::string split;  // train/val/test, or empty
};

SyntheticCorpus sample_unlabeled_corpus(const Vocabulary& vocab, int n, int k, uint64_t seed);

// Labels every sample with argmax of the classifier; returns per-class counts.
std::vector<int> label_corpus(SyntheticCorpus& corpus, const Labeler& labeler, int num_classes);

// Samples, labels, then keeps drawing (continuing the same seed stream) until
// every class reaches `floor` samples or the draw budget (budget_factor * n)
// runs out. A class still empty at that point is an error.
SyntheticCorpus build_labeled_corpus(const Vocabulary& vocab, int n, int k, uint64_t seed,
                                     const Labeler& labeler, int num_classes, int floor,
                                     int budget_factor = 20);

// Empirical length histogram: length -> weight (unnormalized).
using LengthHistogram = std::map<int, double>;

LengthHistogram length_histogram(const std::vector<TokenSeq>& seqs);

// Rejection sampling: random phrases with lengths drawn from the histogram,
// keeping only those the classifier sends to `target`.
std::vector<TokenSeq> sample_auxiliary_phrases(const Vocabulary& vocab,
                                               const LengthHistogram& hist,
                                               const Labeler& labeler, int target, int n,
                                               uint64_t seed, int budget_factor = 100);

LabeledDataset load_dataset(const std::string& path, const Vocabulary& vocab, int num_classes);
void save_dataset(const LabeledDataset& ds, const std::string& path, const Vocabulary& vocab);

}  // namespace tminer::corpus
