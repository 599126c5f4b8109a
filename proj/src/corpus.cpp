#include "tminer/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "tminer/rng.hpp"

namespace tminer::corpus {

namespace {
const std::string kPadStr = "<pad>";
const std::string kUnkStr = "<unk>";

// Per-sample generators partition the stream as base_seed + sample_index so
// parallel workers can reproduce any single sample.
Rng sample_rng(uint64_t base, uint64_t index) { return Rng(base + index); }

int draw_token(const Vocabulary& vocab, Rng& rng) {
  return Vocabulary::kReserved +
         static_cast<int>(rng.below(static_cast<uint64_t>(vocab.real_token_count())));
}
}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw Error("empty vocabulary token");
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i) + kReserved);
    if (!inserted) throw Error("duplicate vocabulary token: " + tokens_[i]);
  }
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) != 0; }

const std::string& Vocabulary::token_of(int id) const {
  if (id == kPad) return kPadStr;
  if (id == kUnk) return kUnkStr;
  int i = id - kReserved;
  if (i < 0 || i >= static_cast<int>(tokens_.size()))
    throw Error("token id out of range: " + std::to_string(id));
  return tokens_[i];
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_of(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const TokenSeq& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token_of(id));
  return out;
}

std::string Vocabulary::render(const TokenSeq& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_of(ids[i]);
  }
  return out;
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = fnv1a64("vocab");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) os << t << "\n";
  if (!os) throw IoError("vocabulary write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read vocabulary: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> tokenize(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char ch : text) {
    if (std::isalnum(ch))
      cleaned += static_cast<char>(std::tolower(ch));
    else if (std::isspace(ch))
      cleaned += ' ';
    // punctuation dropped
  }
  return split_ws(cleaned);
}

Vocabulary build_vocabulary(const std::vector<std::string>& lines, int min_freq) {
  if (lines.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, long> freq;
  for (const auto& line : lines)
    for (const auto& tok : tokenize(line)) ++freq[tok];
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, f] : freq)
    if (f >= min_freq) kept.emplace_back(tok, f);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, f] : kept) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

SyntheticCorpus sample_unlabeled_corpus(const Vocabulary& vocab, int n, int k, uint64_t seed) {
  if (n <= 0) throw Error("sample_unlabeled_corpus: n must be positive");
  if (k < 1) throw Error("sample_unlabeled_corpus: k must be >= 1");
  if (vocab.real_token_count() <= 0) throw Error("sample_unlabeled_corpus: empty vocabulary");
  SyntheticCorpus out;
  out.seed = seed;
  out.role = CorpusRole::Unlabeled;
  out.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = sample_rng(seed, static_cast<uint64_t>(i));
    TokenSeq s(k);
    for (int j = 0; j < k; ++j) s[j] = draw_token(vocab, rng);
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<int> label_corpus(SyntheticCorpus& corpus, const Labeler& labeler, int num_classes) {
  std::vector<int> counts(num_classes, 0);
  corpus.labels.resize(corpus.samples.size());
  for (size_t i = 0; i < corpus.samples.size(); ++i) {
    int y = labeler(corpus.samples[i]);
    if (y < 0 || y >= num_classes)
      throw Error("label_corpus: classifier produced class " + std::to_string(y));
    corpus.labels[i] = y;
    ++counts[y];
  }
  corpus.role = CorpusRole::Labeled;
  return counts;
}

SyntheticCorpus build_labeled_corpus(const Vocabulary& vocab, int n, int k, uint64_t seed,
                                     const Labeler& labeler, int num_classes, int floor,
                                     int budget_factor) {
  SyntheticCorpus out = sample_unlabeled_corpus(vocab, n, k, seed);
  std::vector<int> counts = label_corpus(out, labeler, num_classes);
  long budget = static_cast<long>(budget_factor) * n;
  long draws = n;
  auto lacking = [&]() {
    for (int c = 0; c < num_classes; ++c)
      if (counts[c] < floor) return c;
    return -1;
  };
  while (lacking() >= 0 && draws < budget) {
    Rng rng = sample_rng(seed, static_cast<uint64_t>(draws));
    ++draws;
    TokenSeq s(k);
    for (int j = 0; j < k; ++j) s[j] = draw_token(vocab, rng);
    int y = labeler(s);
    if (y < 0 || y >= num_classes)
      throw Error("build_labeled_corpus: classifier produced class " + std::to_string(y));
    if (counts[y] < floor) {
      out.samples.push_back(std::move(s));
      out.labels.push_back(y);
      ++counts[y];
    }
  }
  for (int c = 0; c < num_classes; ++c)
    if (counts[c] == 0)
      throw Error("build_labeled_corpus: class " + std::to_string(c) +
                  " unreachable within resampling budget");
  return out;
}

LengthHistogram length_histogram(const std::vector<TokenSeq>& seqs) {
  LengthHistogram h;
  for (const auto& s : seqs) h[static_cast<int>(s.size())] += 1.0;
  return h;
}

std::vector<TokenSeq> sample_auxiliary_phrases(const Vocabulary& vocab,
                                               const LengthHistogram& hist,
                                               const Labeler& labeler, int target, int n,
                                               uint64_t seed, int budget_factor) {
  if (hist.empty()) throw Error("sample_auxiliary_phrases: empty length histogram");
  if (n < 1) throw Error("sample_auxiliary_phrases: n must be >= 1");
  double total = 0;
  for (const auto& [len, w] : hist) {
    if (len < 1 || w < 0) throw Error("sample_auxiliary_phrases: bad histogram entry");
    total += w;
  }
  if (total <= 0) throw Error("sample_auxiliary_phrases: histogram has no mass");
  std::vector<TokenSeq> out;
  long budget = static_cast<long>(budget_factor) * n;
  for (long draw = 0; draw < budget && static_cast<int>(out.size()) < n; ++draw) {
    Rng rng = sample_rng(seed, static_cast<uint64_t>(draw));
    double u = rng.uniform() * total;
    int k = hist.rbegin()->first;
    double acc = 0;
    for (const auto& [len, w] : hist) {
      acc += w;
      if (u < acc) {
        k = len;
        break;
      }
    }
    TokenSeq s(k);
    for (int j = 0; j < k; ++j) s[j] = draw_token(vocab, rng);
    if (labeler(s) == target) out.push_back(std::move(s));
  }
  if (static_cast<int>(out.size()) < n)
    throw Error("sample_auxiliary_phrases: budget exhausted at " +
                std::to_string(out.size()) + "/" + std::to_string(n) + " phrases");
  return out;
}

LabeledDataset load_dataset(const std::string& path, const Vocabulary& vocab, int num_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read dataset: " + path);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError("dataset line " + std::to_string(line_no) + ": missing tab");
    int label;
    try {
      size_t used = 0;
      label = std::stoi(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IoError("dataset line " + std::to_string(line_no) + ": bad label");
    }
    if (label < 0 || label >= num_classes)
      throw IoError("dataset line " + std::to_string(line_no) + ": label out of range");
    auto toks = split_ws(line.substr(tab + 1));
    if (toks.empty())
      throw IoError("dataset line " + std::to_string(line_no) + ": empty sample");
    ds.samples.emplace_back(vocab.encode(toks), label);
  }
  if (ds.samples.empty()) throw IoError("dataset is empty: " + path);
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::string& path, const Vocabulary& vocab) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write dataset: " + path);
  for (const auto& [seq, label] : ds.samples) os << label << "\t" << vocab.render(seq) << "\n";
  if (!os) throw IoError("dataset write failed: " + path);
}

}  // namespace tminer::corpus
