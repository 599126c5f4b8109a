#pragma once

// Suspect classifiers: three families (stacked LSTM, bidirectional LSTM,
// self-attention) sharing one training loop, one file format, and the
// introspection taps the detection pipeline needs (soft-input forward for
// generator feedback, last-hidden-layer representations for clustering).

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tminer/adam.hpp"
#include "tminer/corpus.hpp"
#include "tminer/graph.hpp"
#include "tminer/layers.hpp"
#include "tminer/params.hpp"
#include "tminer/rng.hpp"

namespace tminer::cls {

using corpus::LabeledDataset;
using corpus::TokenSeq;
using corpus::Vocabulary;
using nc::Graph;
using nc::GradientMap;
using nc::Init;
using nc::NodeId;
using nc::ParameterSet;
using nc::Shape;
using nc::Tensor;

struct ArchSpec {
  std::string family = "lstm";  // lstm | bilstm | attention
  int embed = 32;
  int hidden = 32;
  int dense = 16;
  int heads = 2;
  int classes = 2;
  int max_len = 32;  // positional table rows (attention family)
  double dropout_keep = 1.0;

  void validate() const {
    if (family != "lstm" && family != "bilstm" && family != "attention")
      throw Error("unknown classifier family: " + family);
    if (classes < 2) throw Error("classifier needs >= 2 classes");
    if (embed < 1 || hidden < 1 || dense < 1) throw Error("bad classifier dims");
    if (family == "attention" && (heads < 1 || embed % heads != 0))
      throw Error("attention: heads must divide the model dim");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw Error("bad dropout keep prob");
  }
};

struct TrainHyper {
  int epochs = 30;
  int patience = 3;
  int batch = 32;
  double lr = 3e-3;
};

struct TrainLog {
  std::vector<double> train_loss;    // per epoch, mean batch loss
  std::vector<double> val_accuracy;  // per epoch
  std::vector<double> penalty;       // per epoch, mean representation penalty
  int best_epoch = -1;
  int epochs_ran = 0;
};

namespace detail {

struct PaddedBatch {
  int B = 0, T = 0;
  std::vector<std::vector<int>> step_ids;      // T vectors of B ids (pad = 0)
  std::vector<std::vector<double>> step_mask;  // T vectors of B 0/1 flags
};

inline PaddedBatch pad_batch(const std::vector<TokenSeq>& seqs) {
  PaddedBatch pb;
  pb.B = static_cast<int>(seqs.size());
  for (const auto& s : seqs) pb.T = std::max(pb.T, static_cast<int>(s.size()));
  pb.step_ids.assign(pb.T, std::vector<int>(pb.B, Vocabulary::kPad));
  pb.step_mask.assign(pb.T, std::vector<double>(pb.B, 0.0));
  for (int b = 0; b < pb.B; ++b)
    for (int t = 0; t < static_cast<int>(seqs[b].size()); ++t) {
      pb.step_ids[t][b] = seqs[b][t];
      pb.step_mask[t][b] = 1.0;
    }
  return pb;
}

template <class Real>
Tensor<Real> mask_tensor(const std::vector<double>& mask) {
  Tensor<Real> t(Shape{static_cast<int>(mask.size()), 1});
  for (size_t i = 0; i < mask.size(); ++i) t.data[i] = static_cast<Real>(mask[i]);
  return t;
}

}  // namespace detail

template <class Real>
class Classifier {
 public:
  struct Tap {
    NodeId logits = -1;  // [B, C] (recurrent) or [1, C] (attention, per sample)
    NodeId rep = -1;     // [B, dense] / [1, dense]
  };

  Classifier(ArchSpec spec, int vocab_size, uint64_t vocab_hash, uint64_t seed)
      : spec_(std::move(spec)),
        vocab_size_(vocab_size),
        vocab_hash_(vocab_hash),
        seed_(seed),
        params_(seed) {
    spec_.validate();
    if (vocab_size_ < Vocabulary::kReserved + 1) throw Error("classifier: vocabulary too small");
    define_params();
  }

  const ArchSpec& spec() const { return spec_; }
  const ParameterSet<Real>& params() const { return params_; }
  ParameterSet<Real>& params() { return params_; }
  int vocab_size() const { return vocab_size_; }
  uint64_t vocab_hash() const { return vocab_hash_; }
  uint64_t seed() const { return seed_; }
  double val_accuracy() const { return val_accuracy_; }
  int epochs_trained() const { return epochs_trained_; }
  int rep_dim() const { return spec_.dense; }

  // ---- graph builders ------------------------------------------------------

  // Hard (token-id) forward. Recurrent families batch; attention is
  // per-sample (call with one sequence at a time or use the loops below).
  Tap build_hard(Graph<Real>& g, const std::vector<TokenSeq>& seqs, bool training = false,
                 Rng* rng = nullptr) const {
    check_ids(seqs);
    if (spec_.family == "attention") {
      if (seqs.size() != 1) throw Error("attention family builds one sample per tap");
      NodeId X = g.gather_rows(g.param("emb.table", params_.get("emb.table")), seqs[0]);
      return build_attention(g, X, training, rng);
    }
    return build_recurrent(g, embed_hard(g, seqs), detail::pad_batch(seqs), training, rng);
  }

  // Soft forward: steps[t] is a [B, V] distribution node. All sequences share
  // one length (the generator's fixed decode length).
  Tap build_soft(Graph<Real>& g, const std::vector<NodeId>& steps) const {
    if (steps.empty()) throw Error("build_soft: no steps");
    int B = g.shape(steps[0]).rows;
    for (NodeId s : steps)
      if (g.shape(s).rows != B || g.shape(s).cols != vocab_size_)
        throw ShapeError("build_soft: step shape mismatch");
    std::vector<NodeId> emb;
    emb.reserve(steps.size());
    NodeId table = g.param("emb.table", params_.get("emb.table"));
    for (NodeId s : steps) emb.push_back(g.matmul(s, table));
    if (spec_.family == "attention") {
      if (B != 1) throw ShapeError("attention family takes soft batches of 1");
      // stack T rows of [1, embed] into [T, embed]
      std::vector<NodeId> cols;
      for (NodeId e : emb) cols.push_back(g.transpose(e));
      NodeId X = g.transpose(g.concat_cols(cols));
      return build_attention(g, X, false, nullptr);
    }
    detail::PaddedBatch pb;
    pb.B = B;
    pb.T = static_cast<int>(steps.size());
    pb.step_mask.assign(pb.T, std::vector<double>(B, 1.0));
    return build_recurrent(g, emb, pb, false, nullptr);
  }

  // ---- introspection -------------------------------------------------------

  std::vector<double> predict_proba(const TokenSeq& seq) const {
    Graph<Real> g;
    Tap tap = forward_one(g, seq);
    NodeId probs = g.softmax_rows(tap.logits);
    std::vector<double> out(spec_.classes);
    for (int j = 0; j < spec_.classes; ++j) out[j] = static_cast<double>(g.value(probs).at(0, j));
    return out;
  }

  int predict(const TokenSeq& seq) const {
    auto p = predict_proba(seq);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }

  std::vector<int> predict_batch(const std::vector<TokenSeq>& seqs) const {
    std::vector<int> out;
    out.reserve(seqs.size());
    if (spec_.family == "attention") {
      for (const auto& s : seqs) out.push_back(predict(s));
      return out;
    }
    constexpr size_t kChunk = 64;
    for (size_t at = 0; at < seqs.size(); at += kChunk) {
      std::vector<TokenSeq> chunk(seqs.begin() + at,
                                  seqs.begin() + std::min(seqs.size(), at + kChunk));
      Graph<Real> g;
      Tap tap = build_hard(g, chunk);
      const auto& logits = g.value(tap.logits);
      for (int b = 0; b < logits.rows(); ++b) {
        int arg = 0;
        for (int j = 1; j < spec_.classes; ++j)
          if (logits.at(b, j) > logits.at(b, arg)) arg = j;
        out.push_back(arg);
      }
    }
    return out;
  }

  double evaluate_accuracy(const LabeledDataset& split) const {
    if (split.samples.empty()) throw Error("evaluate_accuracy: empty split");
    std::vector<TokenSeq> seqs;
    seqs.reserve(split.samples.size());
    for (const auto& [s, y] : split.samples) seqs.push_back(s);
    auto pred = predict_batch(seqs);
    long ok = 0;
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == split.samples[i].second) ++ok;
    return static_cast<double>(ok) / static_cast<double>(pred.size());
  }

  // Standalone soft forward for diagnostics: one sequence of per-step
  // distributions over the vocabulary.
  std::vector<double> soft_forward(const std::vector<std::vector<Real>>& soft_steps) const {
    if (soft_steps.empty()) throw Error("soft_forward: empty sequence");
    Graph<Real> g;
    std::vector<NodeId> steps;
    for (const auto& dist : soft_steps) {
      if (static_cast<int>(dist.size()) != vocab_size_)
        throw ShapeError("soft_forward: distribution size mismatch");
      Real sum = 0;
      for (Real v : dist) sum += v;
      if (std::fabs(static_cast<double>(sum) - 1.0) > 1e-6)
        throw Error("soft_forward: step distribution does not sum to 1");
      steps.push_back(g.input(Tensor<Real>(Shape{1, vocab_size_}, dist)));
    }
    Tap tap = build_soft(g, steps);
    NodeId probs = g.softmax_rows(tap.logits);
    std::vector<double> out(spec_.classes);
    for (int j = 0; j < spec_.classes; ++j) out[j] = static_cast<double>(g.value(probs).at(0, j));
    return out;
  }

  Eigen::RowVectorXd last_hidden(const TokenSeq& seq) const {
    Graph<Real> g;
    Tap tap = forward_one(g, seq);
    Eigen::RowVectorXd rep(spec_.dense);
    for (int j = 0; j < spec_.dense; ++j) rep(j) = static_cast<double>(g.value(tap.rep).at(0, j));
    return rep;
  }

  Eigen::MatrixXd representations(const std::vector<TokenSeq>& seqs) const {
    Eigen::MatrixXd out(static_cast<long>(seqs.size()), spec_.dense);
    if (spec_.family == "attention") {
      for (size_t i = 0; i < seqs.size(); ++i) out.row(static_cast<long>(i)) = last_hidden(seqs[i]);
      return out;
    }
    constexpr size_t kChunk = 64;
    for (size_t at = 0; at < seqs.size(); at += kChunk) {
      std::vector<TokenSeq> chunk(seqs.begin() + at,
                                  seqs.begin() + std::min(seqs.size(), at + kChunk));
      Graph<Real> g;
      Tap tap = build_hard(g, chunk);
      for (size_t b = 0; b < chunk.size(); ++b)
        for (int j = 0; j < spec_.dense; ++j)
          out(static_cast<long>(at + b), j) = static_cast<double>(g.value(tap.rep).at((int)b, j));
    }
    return out;
  }

  corpus::Labeler labeler() const {
    return [this](const TokenSeq& s) { return this->predict(s); };
  }

  // ---- training ------------------------------------------------------------

  static Classifier train(const LabeledDataset& train_split, const LabeledDataset& val_split,
                          ArchSpec spec, TrainHyper hyper, int vocab_size, uint64_t vocab_hash,
                          uint64_t seed, TrainLog* log = nullptr) {
    return train_impl(train_split, val_split, {}, {}, 0.0, std::move(spec), hyper, vocab_size,
                      vocab_hash, seed, log);
  }

  // Adds lambda * |R(aux) - R(tp)|^2 to the objective, R = mean last-hidden
  // representation over the phrase set. lambda = 0 takes the exact same code
  // path (and RNG stream) as plain training.
  static Classifier train_with_outlier_suppression(
      const LabeledDataset& train_split, const LabeledDataset& val_split,
      const std::vector<TokenSeq>& trigger_perturbations, const std::vector<TokenSeq>& aux,
      double lambda, ArchSpec spec, TrainHyper hyper, int vocab_size, uint64_t vocab_hash,
      uint64_t seed, TrainLog* log = nullptr) {
    if (lambda != 0.0 && (trigger_perturbations.empty() || aux.empty()))
      throw Error("outlier suppression needs nonempty phrase sets");
    return train_impl(train_split, val_split, trigger_perturbations, aux, lambda,
                      std::move(spec), hyper, vocab_size, vocab_hash, seed, log);
  }

  // ---- persistence ---------------------------------------------------------

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write model: " + path);
    os << "tminer-classifier " << kVersionTag << "\n";
    os << "family " << spec_.family << "\n";
    os << "embed " << spec_.embed << "\n";
    os << "hidden " << spec_.hidden << "\n";
    os << "dense " << spec_.dense << "\n";
    os << "heads " << spec_.heads << "\n";
    os << "classes " << spec_.classes << "\n";
    os << "max_len " << spec_.max_len << "\n";
    os << "dropout_keep " << spec_.dropout_keep << "\n";
    os << "vocab_size " << vocab_size_ << "\n";
    os << "vocab_hash " << hex64(vocab_hash_) << "\n";
    os << "seed " << seed_ << "\n";
    os << "epochs_trained " << epochs_trained_ << "\n";
    os << "val_accuracy " << val_accuracy_ << "\n";
    os << "params\n";
    params_.save(os);
  }

  // expected_vocab_hash != 0 enforces the vocabulary pairing.
  static Classifier load(const std::string& path, uint64_t expected_vocab_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read model: " + path);
    auto next = [&is, &path](const char* key) {
      std::string line;
      if (!std::getline(is, line)) throw IoError(path + ": truncated at " + key);
      auto tok = split_ws(line);
      if (tok.size() < 2 || tok[0] != key)
        throw IoError(path + ": expected '" + key + "' line, got '" + line + "'");
      return tok[1];
    };
    {
      std::string line;
      if (!std::getline(is, line) ||
          trim(line) != std::string("tminer-classifier ") + kVersionTag)
        throw IoError(path + ": bad model header");
    }
    ArchSpec spec;
    spec.family = next("family");
    spec.embed = std::stoi(next("embed"));
    spec.hidden = std::stoi(next("hidden"));
    spec.dense = std::stoi(next("dense"));
    spec.heads = std::stoi(next("heads"));
    spec.classes = std::stoi(next("classes"));
    spec.max_len = std::stoi(next("max_len"));
    spec.dropout_keep = std::stod(next("dropout_keep"));
    int vocab_size = std::stoi(next("vocab_size"));
    uint64_t vocab_hash = std::stoull(next("vocab_hash"), nullptr, 16);
    uint64_t seed = std::stoull(next("seed"));
    int epochs = std::stoi(next("epochs_trained"));
    double val_acc = std::stod(next("val_accuracy"));
    std::string line;
    if (!std::getline(is, line) || trim(line) != "params")
      throw IoError(path + ": missing params marker");
    if (expected_vocab_hash != 0 && vocab_hash != expected_vocab_hash)
      throw IoError(path + ": vocabulary hash mismatch (model " + hex64(vocab_hash) +
                    ", expected " + hex64(expected_vocab_hash) + ")");
    Classifier model(spec, vocab_size, vocab_hash, seed);
    model.params_ = ParameterSet<Real>::load(is);
    model.epochs_trained_ = epochs;
    model.val_accuracy_ = val_acc;
    return model;
  }

 private:
  ArchSpec spec_;
  int vocab_size_;
  uint64_t vocab_hash_;
  uint64_t seed_;
  ParameterSet<Real> params_;
  double val_accuracy_ = 0.0;
  int epochs_trained_ = 0;

  void check_ids(const std::vector<TokenSeq>& seqs) const {
    for (const auto& s : seqs) {
      if (s.empty()) throw Error("classifier: empty sequence");
      for (int id : s)
        if (id < 0 || id >= vocab_size_)
          throw Error("classifier: token id " + std::to_string(id) + " outside vocabulary");
    }
  }

  void define_params() {
    ParameterSet<Real>& ps = params_;
    nc::Embedding<Real>{"emb", vocab_size_, spec_.embed}.define(ps);
    if (spec_.family == "lstm") {
      nc::Lstm<Real>{"l1", spec_.embed, spec_.hidden}.define(ps);
      nc::Lstm<Real>{"l2", spec_.hidden, spec_.hidden}.define(ps);
      nc::Dense<Real>{"fc", spec_.hidden, spec_.dense}.define(ps);
    } else if (spec_.family == "bilstm") {
      nc::Lstm<Real>{"fw", spec_.embed, spec_.hidden}.define(ps);
      nc::Lstm<Real>{"bw", spec_.embed, spec_.hidden}.define(ps);
      nc::Dense<Real>{"fc", 2 * spec_.hidden, spec_.dense}.define(ps);
    } else {
      ps.add("pos.table", spec_.max_len, spec_.embed, Init::Glorot);
      int dh = spec_.embed / spec_.heads;
      for (int h = 0; h < spec_.heads; ++h) {
        std::string p = "att.h" + std::to_string(h);
        ps.add(p + ".Wq", spec_.embed, dh, Init::Glorot);
        ps.add(p + ".Wk", spec_.embed, dh, Init::Glorot);
        ps.add(p + ".Wv", spec_.embed, dh, Init::Glorot);
      }
      nc::Dense<Real>{"att.out", spec_.embed, spec_.embed}.define(ps);
      nc::Dense<Real>{"ff", spec_.embed, spec_.embed}.define(ps);
      nc::Dense<Real>{"fc", spec_.embed, spec_.dense}.define(ps);
    }
    nc::Dense<Real>{"out", spec_.dense, spec_.classes}.define(ps);
  }

  // per-step embedded inputs for hard ids (recurrent families)
  std::vector<NodeId> embed_hard(Graph<Real>& g, const std::vector<TokenSeq>& seqs) const {
    nc::Embedding<Real> emb{"emb", vocab_size_, spec_.embed};
    auto pb = detail::pad_batch(seqs);
    std::vector<NodeId> steps;
    steps.reserve(pb.T);
    for (int t = 0; t < pb.T; ++t) steps.push_back(emb.lookup(g, params_, pb.step_ids[t]));
    return steps;
  }

  Tap build_recurrent(Graph<Real>& g, const std::vector<NodeId>& emb_steps,
                      const detail::PaddedBatch& pb, bool training, Rng* rng) const {
    int B = pb.B, T = pb.T;
    std::vector<NodeId> x = emb_steps;
    if (training && spec_.dropout_keep < 1.0) {
      if (!rng) throw Error("training forward needs an rng for dropout");
      for (auto& n : x) n = g.dropout(n, static_cast<Real>(spec_.dropout_keep), *rng);
    }

    NodeId rep_in;
    if (spec_.family == "lstm") {
      nc::Lstm<Real> l1{"l1", spec_.embed, spec_.hidden};
      nc::Lstm<Real> l2{"l2", spec_.hidden, spec_.hidden};
      NodeId h1 = g.input(Tensor<Real>(Shape{B, spec_.hidden}));
      NodeId c1 = h1, h2 = h1, c2 = h1;
      for (int t = 0; t < T; ++t) {
        Tensor<Real> m = detail::mask_tensor<Real>(pb.step_mask[t]);
        auto [nh1, nc1] = l1.step(g, params_, x[t], h1, c1);
        h1 = g.mask_mix(nh1, h1, m);
        c1 = g.mask_mix(nc1, c1, m);
        auto [nh2, nc2] = l2.step(g, params_, h1, h2, c2);
        h2 = g.mask_mix(nh2, h2, m);
        c2 = g.mask_mix(nc2, c2, m);
      }
      rep_in = h2;
    } else {  // bilstm
      nc::Lstm<Real> fw{"fw", spec_.embed, spec_.hidden};
      nc::Lstm<Real> bw{"bw", spec_.embed, spec_.hidden};
      NodeId zero = g.input(Tensor<Real>(Shape{B, spec_.hidden}));
      NodeId hf = zero, cf = zero;
      for (int t = 0; t < T; ++t) {
        Tensor<Real> m = detail::mask_tensor<Real>(pb.step_mask[t]);
        auto [nh, ncs] = fw.step(g, params_, x[t], hf, cf);
        hf = g.mask_mix(nh, hf, m);
        cf = g.mask_mix(ncs, cf, m);
      }
      NodeId hb = zero, cb = zero;
      for (int t = T - 1; t >= 0; --t) {
        Tensor<Real> m = detail::mask_tensor<Real>(pb.step_mask[t]);
        auto [nh, ncs] = bw.step(g, params_, x[t], hb, cb);
        hb = g.mask_mix(nh, hb, m);
        cb = g.mask_mix(ncs, cb, m);
      }
      rep_in = g.concat_cols({hf, hb});
    }
    nc::Dense<Real> fc{"fc", spec_.family == "bilstm" ? 2 * spec_.hidden : spec_.hidden,
                       spec_.dense};
    NodeId rep = g.tanh(fc.apply(g, params_, rep_in));
    if (training && spec_.dropout_keep < 1.0)
      rep = g.dropout(rep, static_cast<Real>(spec_.dropout_keep), *rng);
    nc::Dense<Real> out{"out", spec_.dense, spec_.classes};
    return Tap{out.apply(g, params_, rep), rep};
  }

  // one sample: tokens is [T, embed]
  Tap build_attention(Graph<Real>& g, NodeId tokens, bool training, Rng* rng) const {
    int T = g.shape(tokens).rows;
    if (T > spec_.max_len)
      throw Error("attention: sequence length " + std::to_string(T) + " exceeds max_len");
    std::vector<int> pos_ids(T);
    for (int t = 0; t < T; ++t) pos_ids[t] = t;
    NodeId X = g.add(tokens,
                     g.gather_rows(g.param("pos.table", params_.get("pos.table")), pos_ids));
    if (training && spec_.dropout_keep < 1.0) {
      if (!rng) throw Error("training forward needs an rng for dropout");
      X = g.dropout(X, static_cast<Real>(spec_.dropout_keep), *rng);
    }
    int dh = spec_.embed / spec_.heads;
    std::vector<NodeId> heads;
    for (int h = 0; h < spec_.heads; ++h) {
      std::string p = "att.h" + std::to_string(h);
      NodeId Q = g.matmul(X, g.param(p + ".Wq", params_.get(p + ".Wq")));
      NodeId K = g.matmul(X, g.param(p + ".Wk", params_.get(p + ".Wk")));
      NodeId V = g.matmul(X, g.param(p + ".Wv", params_.get(p + ".Wv")));
      NodeId scores = g.scale(g.matmul(Q, g.transpose(K)),
                              static_cast<Real>(1.0 / std::sqrt(double(dh))));
      heads.push_back(g.matmul(g.softmax_rows(scores), V));
    }
    nc::Dense<Real> att_out{"att.out", spec_.embed, spec_.embed};
    NodeId mh = att_out.apply(g, params_, g.concat_cols(heads));
    NodeId block_in = g.add(X, mh);  // residual
    nc::Dense<Real> ff{"ff", spec_.embed, spec_.embed};
    NodeId block = g.tanh(ff.apply(g, params_, block_in));
    // mean pool over steps
    NodeId pooled = g.scale(g.col_sum(block), static_cast<Real>(1.0 / T));
    nc::Dense<Real> fc{"fc", spec_.embed, spec_.dense};
    NodeId rep = g.tanh(fc.apply(g, params_, pooled));
    if (training && spec_.dropout_keep < 1.0)
      rep = g.dropout(rep, static_cast<Real>(spec_.dropout_keep), *rng);
    nc::Dense<Real> out{"out", spec_.dense, spec_.classes};
    return Tap{out.apply(g, params_, rep), rep};
  }

  Tap forward_one(Graph<Real>& g, const TokenSeq& seq) const {
    return build_hard(g, {seq});
  }

  // mean representation over a phrase set, inside the caller's graph
  NodeId mean_rep(Graph<Real>& g, const std::vector<TokenSeq>& phrases) const {
    std::vector<NodeId> reps;
    if (spec_.family == "attention") {
      for (const auto& ph : phrases) reps.push_back(build_hard(g, {ph}).rep);
    } else {
      Tap tap = build_hard(g, phrases);
      for (size_t i = 0; i < phrases.size(); ++i)
        reps.push_back(g.slice_rows(tap.rep, static_cast<int>(i), static_cast<int>(i) + 1));
    }
    NodeId acc = reps[0];
    for (size_t i = 1; i < reps.size(); ++i) acc = g.add(acc, reps[i]);
    return g.scale(acc, static_cast<Real>(1.0 / double(phrases.size())));
  }

  struct BatchLoss {
    NodeId loss = -1;
    NodeId penalty = -1;  // -1 when disabled
  };

  BatchLoss batch_loss(Graph<Real>& g, const std::vector<TokenSeq>& seqs,
                       const std::vector<int>& targets, const std::vector<TokenSeq>& tp,
                       const std::vector<TokenSeq>& aux, double lambda, Rng& rng) const {
    bool training = spec_.dropout_keep < 1.0;
    NodeId ce;
    if (spec_.family == "attention") {
      NodeId acc = -1;
      for (size_t i = 0; i < seqs.size(); ++i) {
        Tap tap = build_hard(g, {seqs[i]}, training, &rng);
        NodeId one = g.softmax_ce(tap.logits, {targets[i]});
        acc = acc < 0 ? one : g.add(acc, one);
      }
      ce = g.scale(acc, static_cast<Real>(1.0 / double(seqs.size())));
    } else {
      Tap tap = build_hard(g, seqs, training, &rng);
      ce = g.softmax_ce(tap.logits, targets);
    }
    BatchLoss out;
    if (lambda != 0.0) {
      NodeId r_aux = mean_rep(g, aux);
      NodeId r_tp = mean_rep(g, tp);
      out.penalty = g.sum_all(g.square(g.sub(r_aux, r_tp)));
      out.loss = g.add(ce, g.scale(out.penalty, static_cast<Real>(lambda)));
    } else {
      out.loss = ce;
    }
    return out;
  }

  static Classifier train_impl(const LabeledDataset& train_split, const LabeledDataset& val_split,
                               const std::vector<TokenSeq>& tp, const std::vector<TokenSeq>& aux,
                               double lambda, ArchSpec spec, TrainHyper hyper, int vocab_size,
                               uint64_t vocab_hash, uint64_t seed, TrainLog* log) {
    if (train_split.samples.empty() || val_split.samples.empty())
      throw Error("train: empty split");
    if (train_split.num_classes != spec.classes)
      throw Error("train: dataset classes != spec classes");
    Classifier model(spec, vocab_size, vocab_hash, seed);
    nc::Adam<Real> opt(nc::AdamHyper<Real>{static_cast<Real>(hyper.lr), Real(0.9), Real(0.999),
                                           Real(1e-8)});
    std::vector<size_t> order(train_split.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_acc = -1.0;
    int best_epoch = -1;
    std::optional<ParameterSet<Real>> best_params;
    int since_best = 0;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
      Rng shuffle_rng(mix_seed(seed, 0xba7c4, static_cast<uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0, penalty_sum = 0.0;
      int batches = 0;
      for (size_t at = 0; at < order.size(); at += hyper.batch) {
        std::vector<TokenSeq> seqs;
        std::vector<int> targets;
        for (size_t i = at; i < std::min(order.size(), at + hyper.batch); ++i) {
          seqs.push_back(train_split.samples[order[i]].first);
          targets.push_back(train_split.samples[order[i]].second);
        }
        Rng batch_rng(mix_seed(seed, 0xd209, static_cast<uint64_t>(epoch) * 100000 + batches));
        Graph<Real> g;
        auto bl = model.batch_loss(g, seqs, targets, tp, aux, lambda, batch_rng);
        loss_sum += static_cast<double>(g.value(bl.loss).data[0]);
        if (bl.penalty >= 0) penalty_sum += static_cast<double>(g.value(bl.penalty).data[0]);
        g.backward(bl.loss);
        GradientMap<Real> grads;
        grads.collect(g);
        opt.step(model.params_, grads);
        ++batches;
      }
      double val_acc = model.evaluate_accuracy(val_split);
      if (log) {
        log->train_loss.push_back(loss_sum / batches);
        log->val_accuracy.push_back(val_acc);
        log->penalty.push_back(lambda != 0.0 ? penalty_sum / batches : 0.0);
      }
      model.epochs_trained_ = epoch + 1;
      if (val_acc > best_acc) {
        best_acc = val_acc;
        best_epoch = epoch;
        best_params = model.params_;
        since_best = 0;
      } else if (++since_best >= hyper.patience) {
        break;
      }
    }
    if (best_params) model.params_ = *best_params;
    model.val_accuracy_ = best_acc;
    if (log) {
      log->best_epoch = best_epoch;
      log->epochs_ran = model.epochs_trained_;
    }
    return model;
  }
};

}  // namespace tminer::cls
