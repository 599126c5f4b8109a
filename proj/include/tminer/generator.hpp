#pragma once

// Conditioned GRU encoder-decoder with attention: pretrained as an
// autoencoder on synthetic text, then trained against a frozen suspect
// classifier with a three-term objective (reconstruction + classification +
// diversity). Decoding, perturbation-candidate extraction, and top-K
// expansion live here too.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tminer/adam.hpp"
#include "tminer/classifier.hpp"
#include "tminer/corpus.hpp"
#include "tminer/graph.hpp"
#include "tminer/layers.hpp"
#include "tminer/params.hpp"
#include "tminer/rng.hpp"

namespace tminer::gen {

using corpus::TokenSeq;
using corpus::Vocabulary;
using nc::Graph;
using nc::GradientMap;
using nc::Init;
using nc::NodeId;
using nc::ParameterSet;
using nc::Shape;
using nc::Tensor;

struct GenSpec {
  int embed = 32;
  int hidden = 64;
  int latent = 64;
  int dense = 20;
  int classes = 2;
  int max_len = 64;

  void validate() const {
    if (embed < 1 || hidden < 1 || latent < 1 || dense < 1) throw Error("bad generator dims");
    if (classes < 2) throw Error("generator needs >= 2 classes");
    if (max_len < 1) throw Error("bad generator max_len");
  }
};

struct GenHyper {
  int pretrain_epochs = 10;
  int train_epochs = 6;
  int batch = 32;
  double lr = 3e-3;
};

struct LossWeights {
  double lambda_r = 1.0;
  double lambda_c = 0.5;
  double lambda_div = 0.03;
  // The diversity term enters the objective as +entropy by default (driving
  // perturbations toward a point mass); the flipped sign is kept for study.
  bool div_sign_flip = false;

  void validate() const {
    if (lambda_r < 0 || lambda_c < 0 || lambda_div < 0)
      throw Error("loss weights must be nonnegative");
  }
};

enum class Phase { Fresh, Pretrained, Adversarial };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Fresh: return "fresh";
    case Phase::Pretrained: return "pretrained";
    default: return "adversarially-trained";
  }
}

struct TrainCurves {
  std::vector<double> recon, cls, div, total;  // per-epoch means
  int div_skips = 0;                           // batches with zero perturbation mass
};

struct DecodeStep {
  int emitted = -1;
  double emitted_prob = 0.0;
  std::vector<int> alt_ids;        // K most probable tokens excluding emitted
  std::vector<double> alt_probs;
};

struct DecodeRecord {
  TokenSeq output;
  std::vector<DecodeStep> steps;
};

struct Candidate {
  TokenSeq tokens;
  std::string provenance;                       // "greedy" or "topk(pos,rank)"
  std::vector<std::vector<int>> alternates;     // per token, from its emission step
};

template <class Real>
class Generator {
 public:
  Generator(GenSpec spec, int vocab_size, uint64_t vocab_hash, uint64_t seed)
      : spec_(spec), vocab_size_(vocab_size), vocab_hash_(vocab_hash), seed_(seed), params_(seed) {
    spec_.validate();
    if (vocab_size_ < Vocabulary::kReserved + 1) throw Error("generator: vocabulary too small");
    define_params();
  }

  const GenSpec& spec() const { return spec_; }
  ParameterSet<Real>& params() { return params_; }
  const ParameterSet<Real>& params() const { return params_; }
  int vocab_size() const { return vocab_size_; }
  uint64_t vocab_hash() const { return vocab_hash_; }
  Phase phase() const { return phase_; }
  double recon_accuracy() const { return recon_accuracy_; }

  // ---- losses in-graph -----------------------------------------------------

  struct BatchLoss {
    NodeId total = -1, recon = -1, cls = -1, div = -1;
    bool div_skipped = false;
  };

  // One training batch: teacher-forced reconstruction, plus (when weighted) a
  // free-running soft rollout scored by the frozen classifier and by the
  // batch diversity entropy. `target_class` conditions the decoder; pass -1
  // for the unconditioned (pretraining) mode.
  BatchLoss build_training_loss(Graph<Real>& g, const std::vector<TokenSeq>& xs, int target_class,
                                const cls::Classifier<Real>* classifier,
                                const LossWeights& w) const {
    w.validate();
    check_batch(xs);
    if (target_class >= spec_.classes) throw Error("generator: invalid condition class");
    if (w.lambda_c > 0) {
      if (!classifier) throw Error("classification loss needs a classifier");
      if (classifier->vocab_hash() != vocab_hash_ || classifier->vocab_size() != vocab_size_)
        throw Error("generator/classifier vocabulary mismatch");
      if (target_class < 0) throw Error("classification loss needs a condition class");
    }
    int B = static_cast<int>(xs.size());
    int T = static_cast<int>(xs[0].size());

    auto enc = encode(g, xs, target_class);
    BatchLoss out;

    // teacher-forced reconstruction (Eq.-style mean token CE)
    {
      NodeId d = enc.h0;
      NodeId ce_sum = -1;
      for (int t = 0; t < T; ++t) {
        std::vector<int> prev(B), truth(B);
        for (int b = 0; b < B; ++b) {
          prev[b] = t == 0 ? Vocabulary::kPad : xs[b][t - 1];
          truth[b] = xs[b][t];
        }
        NodeId inp = g.concat_cols({g.gather_rows(emb_node(g), prev), enc.cond});
        d = dec_gru().step(g, params_, inp, d);
        NodeId logits = step_logits(g, d, enc.states, enc.ones_mask);
        NodeId ce = g.softmax_ce(logits, truth);
        ce_sum = ce_sum < 0 ? ce : g.add(ce_sum, ce);
      }
      out.recon = g.scale(ce_sum, Real(1.0 / T));
    }

    bool need_rollout = w.lambda_c > 0 || w.lambda_div > 0;
    std::vector<NodeId> dists;
    if (need_rollout) {
      NodeId d = enc.h0;
      NodeId prev = onehot_rows(g, std::vector<int>(B, Vocabulary::kPad));
      for (int t = 0; t < T; ++t) {
        NodeId inp = g.concat_cols({g.matmul(prev, emb_node(g)), enc.cond});
        d = dec_gru().step(g, params_, inp, d);
        NodeId dist = g.softmax_rows(step_logits(g, d, enc.states, enc.ones_mask));
        dists.push_back(dist);
        prev = dist;
      }
    }

    if (w.lambda_c > 0) {
      auto ns = g.set_param_namespace("cls/");
      if (classifier->spec().family == "attention") {
        NodeId acc = -1;
        for (int b = 0; b < B; ++b) {
          std::vector<NodeId> steps;
          for (NodeId dist : dists) steps.push_back(g.slice_rows(dist, b, b + 1));
          auto tap = classifier->build_soft(g, steps);
          NodeId one = g.softmax_ce(tap.logits, {target_class});
          acc = acc < 0 ? one : g.add(acc, one);
        }
        out.cls = g.scale(acc, Real(1.0 / B));
      } else {
        auto tap = classifier->build_soft(g, dists);
        out.cls = g.softmax_ce(tap.logits, std::vector<int>(B, target_class));
      }
      g.set_param_namespace(std::move(ns));
    }

    if (w.lambda_div > 0) {
      NodeId soft_sum = dists[0];
      for (size_t t = 1; t < dists.size(); ++t) soft_sum = g.add(soft_sum, dists[t]);
      Tensor<Real> counts(Shape{B, vocab_size_});
      for (int b = 0; b < B; ++b)
        for (int id : xs[b]) counts.at(b, id) += Real(1);
      NodeId raw = g.clip01(g.sub(soft_sum, g.input(std::move(counts))));
      NodeId agg = g.col_sum(raw);
      NodeId mass = g.sum_all(agg);
      if (static_cast<double>(g.value(mass).data[0]) < 1e-12) {
        out.div_skipped = true;
      } else {
        out.div = g.entropy(g.div_bcast(agg, mass));
      }
    }

    NodeId total = g.scale(out.recon, static_cast<Real>(w.lambda_r));
    if (out.cls >= 0) total = g.add(total, g.scale(out.cls, static_cast<Real>(w.lambda_c)));
    if (out.div >= 0) {
      Real sign = w.div_sign_flip ? Real(-1) : Real(1);
      total = g.add(total, g.scale(out.div, static_cast<Real>(w.lambda_div) * sign));
    }
    out.total = total;
    return out;
  }

  // ---- training ------------------------------------------------------------

  static Generator pretrain(GenSpec spec, const std::vector<TokenSeq>& unlabeled, GenHyper hyper,
                            int vocab_size, uint64_t vocab_hash, uint64_t seed,
                            TrainCurves* curves = nullptr) {
    if (hyper.pretrain_epochs <= 0) throw Error("pretraining needs at least one epoch");
    if (unlabeled.empty()) throw Error("pretraining corpus is empty");
    Generator gen(spec, vocab_size, vocab_hash, seed);
    std::vector<const std::vector<TokenSeq>*> pools = {&unlabeled};
    gen.train_epochs(pools, {-1}, nullptr, LossWeights{1.0, 0.0, 0.0, false},
                     hyper.pretrain_epochs, hyper.batch, hyper.lr, seed, curves);
    gen.phase_ = Phase::Pretrained;
    gen.recon_accuracy_ = gen.reconstruction_accuracy(unlabeled, 400);
    return gen;
  }

  // Alternates direction per epoch: even epochs translate source->target
  // (source-labeled samples conditioned on the target class), odd epochs the
  // reverse. The classifier stays frozen; pass nullptr only when lambda_c=0.
  void adversarial_train(const cls::Classifier<Real>* classifier,
                         const corpus::SyntheticCorpus& labeled, int source, int target,
                         const LossWeights& w, GenHyper hyper, uint64_t seed,
                         TrainCurves* curves = nullptr) {
    if (phase_ == Phase::Fresh) throw Error("generator is not pretrained");
    if (labeled.labels.size() != labeled.samples.size())
      throw Error("adversarial training needs a labeled corpus");
    if (source == target || source < 0 || target < 0 || source >= spec_.classes ||
        target >= spec_.classes)
      throw Error("bad source/target class pair");
    if (hyper.train_epochs <= 0) throw Error("adversarial training needs at least one epoch");
    std::vector<TokenSeq> from_source, from_target;
    for (size_t i = 0; i < labeled.samples.size(); ++i) {
      if (labeled.labels[i] == source) from_source.push_back(labeled.samples[i]);
      else if (labeled.labels[i] == target) from_target.push_back(labeled.samples[i]);
    }
    if (from_source.empty() || from_target.empty())
      throw Error("labeled corpus lacks samples for one direction");
    std::vector<const std::vector<TokenSeq>*> pools = {&from_source, &from_target};
    train_epochs(pools, {target, source}, classifier, w, hyper.train_epochs, hyper.batch,
                 hyper.lr, seed, curves);
    phase_ = Phase::Adversarial;
  }

  // ---- decoding ------------------------------------------------------------

  // Free-running greedy decode; condition -1 means the unconditioned
  // (pretraining) control vector. Records the top-K alternates per step.
  DecodeRecord decode(const TokenSeq& x, int condition, int K) const {
    if (phase_ == Phase::Fresh) throw Error("decode: generator is not trained");
    check_batch({x});
    if (condition >= spec_.classes) throw Error("decode: invalid condition class");
    if (K < 0) throw Error("decode: bad K");
    int T = static_cast<int>(x.size());
    Graph<Real> g;
    auto enc = encode(g, {x}, condition);
    DecodeRecord rec;
    NodeId d = enc.h0;
    int prev = Vocabulary::kPad;
    for (int t = 0; t < T; ++t) {
      NodeId inp = g.concat_cols({g.gather_rows(emb_node(g), {prev}), enc.cond});
      d = dec_gru().step(g, params_, inp, d);
      NodeId probs = g.softmax_rows(step_logits(g, d, enc.states, enc.ones_mask));
      const Tensor<Real>& p = g.value(probs);
      int arg = 0;
      for (int j = 1; j < vocab_size_; ++j)
        if (p.at(0, j) > p.at(0, arg)) arg = j;
      DecodeStep step;
      step.emitted = arg;
      step.emitted_prob = static_cast<double>(p.at(0, arg));
      std::vector<int> order(vocab_size_);
      for (int j = 0; j < vocab_size_; ++j) order[j] = j;
      std::sort(order.begin(), order.end(), [&p](int a, int b) {
        if (p.at(0, a) != p.at(0, b)) return p.at(0, a) > p.at(0, b);
        return a < b;
      });
      for (int j : order) {
        if (j == arg) continue;
        if (static_cast<int>(step.alt_ids.size()) == K) break;
        step.alt_ids.push_back(j);
        step.alt_probs.push_back(static_cast<double>(p.at(0, j)));
      }
      rec.output.push_back(arg);
      rec.steps.push_back(std::move(step));
      prev = arg;
    }
    return rec;
  }

  // Token-level free-running reconstruction accuracy over up to `cap` samples.
  double reconstruction_accuracy(const std::vector<TokenSeq>& seqs, int cap) const {
    if (seqs.empty()) throw Error("reconstruction_accuracy: no samples");
    long match = 0, total = 0;
    int n = std::min<int>(cap, static_cast<int>(seqs.size()));
    for (int i = 0; i < n; ++i) {
      DecodeRecord rec = decode(seqs[i], -1, 0);
      for (size_t t = 0; t < seqs[i].size(); ++t) {
        match += rec.output[t] == seqs[i][t];
        ++total;
      }
    }
    return static_cast<double>(match) / static_cast<double>(total);
  }

  // ---- persistence ---------------------------------------------------------

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write generator: " + path);
    os << "tminer-generator " << kVersionTag << "\n";
    os << "embed " << spec_.embed << "\n";
    os << "hidden " << spec_.hidden << "\n";
    os << "latent " << spec_.latent << "\n";
    os << "dense " << spec_.dense << "\n";
    os << "classes " << spec_.classes << "\n";
    os << "max_len " << spec_.max_len << "\n";
    os << "vocab_size " << vocab_size_ << "\n";
    os << "vocab_hash " << hex64(vocab_hash_) << "\n";
    os << "seed " << seed_ << "\n";
    os << "phase " << phase_name(phase_) << "\n";
    os << "recon_accuracy " << recon_accuracy_ << "\n";
    os << "params\n";
    params_.save(os);
  }

  static Generator load(const std::string& path, uint64_t expected_vocab_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read generator: " + path);
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
      if (!std::getline(is, line) || trim(line) != std::string("tminer-generator ") + kVersionTag)
        throw IoError(path + ": bad generator header");
    }
    GenSpec spec;
    spec.embed = std::stoi(next("embed"));
    spec.hidden = std::stoi(next("hidden"));
    spec.latent = std::stoi(next("latent"));
    spec.dense = std::stoi(next("dense"));
    spec.classes = std::stoi(next("classes"));
    spec.max_len = std::stoi(next("max_len"));
    int vocab_size = std::stoi(next("vocab_size"));
    uint64_t vocab_hash = std::stoull(next("vocab_hash"), nullptr, 16);
    uint64_t seed = std::stoull(next("seed"));
    std::string phase = next("phase");
    double recon = std::stod(next("recon_accuracy"));
    std::string line;
    if (!std::getline(is, line) || trim(line) != "params")
      throw IoError(path + ": missing params marker");
    if (expected_vocab_hash != 0 && vocab_hash != expected_vocab_hash)
      throw IoError(path + ": vocabulary hash mismatch");
    Generator gen(spec, vocab_size, vocab_hash, seed);
    gen.params_ = ParameterSet<Real>::load(is);
    if (phase == "pretrained") gen.phase_ = Phase::Pretrained;
    else if (phase == "adversarially-trained") gen.phase_ = Phase::Adversarial;
    else if (phase == "fresh") gen.phase_ = Phase::Fresh;
    else throw IoError(path + ": unknown phase " + phase);
    gen.recon_accuracy_ = recon;
    return gen;
  }

 private:
  GenSpec spec_;
  int vocab_size_;
  uint64_t vocab_hash_;
  uint64_t seed_;
  ParameterSet<Real> params_;
  Phase phase_ = Phase::Fresh;
  double recon_accuracy_ = 0.0;

  void define_params() {
    nc::Embedding<Real>{"emb", vocab_size_, spec_.embed}.define(params_);
    nc::Gru<Real>{"enc", spec_.embed, spec_.hidden}.define(params_);
    nc::Dense<Real>{"lat", spec_.hidden, spec_.latent}.define(params_);
    nc::Dense<Real>{"init", spec_.latent + spec_.classes, spec_.hidden}.define(params_);
    nc::Gru<Real>{"dec", spec_.embed + spec_.classes, spec_.hidden}.define(params_);
    nc::Dense<Real>{"pre", 2 * spec_.hidden, spec_.dense}.define(params_);
    nc::Dense<Real>{"out", spec_.dense, vocab_size_}.define(params_);
  }

  nc::Gru<Real> enc_gru() const { return {"enc", spec_.embed, spec_.hidden}; }
  nc::Gru<Real> dec_gru() const { return {"dec", spec_.embed + spec_.classes, spec_.hidden}; }
  NodeId emb_node(Graph<Real>& g) const { return g.param("emb.table", params_.get("emb.table")); }

  void check_batch(const std::vector<TokenSeq>& xs) const {
    if (xs.empty()) throw Error("generator: empty batch");
    size_t T = xs[0].size();
    if (T == 0) throw Error("generator: empty sequence");
    if (static_cast<int>(T) > spec_.max_len) throw Error("generator: sequence exceeds max_len");
    for (const auto& x : xs) {
      if (x.size() != T) throw Error("generator: batch mixes sequence lengths");
      for (int id : x)
        if (id < 0 || id >= vocab_size_) throw Error("generator: token id outside vocabulary");
    }
  }

  NodeId onehot_rows(Graph<Real>& g, const std::vector<int>& ids) const {
    Tensor<Real> t(Shape{static_cast<int>(ids.size()), vocab_size_});
    for (size_t b = 0; b < ids.size(); ++b) t.at(static_cast<int>(b), ids[b]) = Real(1);
    return g.input(std::move(t));
  }

  struct Encoded {
    std::vector<NodeId> states;  // [B,H] per input step
    NodeId h0 = -1;              // decoder initial state
    NodeId cond = -1;            // [B, classes] control rows
    Tensor<Real> ones_mask;      // [B, T] attention mask
  };

  Encoded encode(Graph<Real>& g, const std::vector<TokenSeq>& xs, int condition) const {
    int B = static_cast<int>(xs.size());
    int T = static_cast<int>(xs[0].size());
    Encoded enc;
    NodeId h = g.input(Tensor<Real>(Shape{B, spec_.hidden}));
    for (int t = 0; t < T; ++t) {
      std::vector<int> ids(B);
      for (int b = 0; b < B; ++b) ids[b] = xs[b][t];
      h = enc_gru().step(g, params_, g.gather_rows(emb_node(g), ids), h);
      enc.states.push_back(h);
    }
    nc::Dense<Real> lat{"lat", spec_.hidden, spec_.latent};
    NodeId z = g.tanh(lat.apply(g, params_, h));
    Tensor<Real> cvec(Shape{B, spec_.classes});
    if (condition >= 0)
      for (int b = 0; b < B; ++b) cvec.at(b, condition) = Real(1);
    enc.cond = g.input(std::move(cvec));
    nc::Dense<Real> init{"init", spec_.latent + spec_.classes, spec_.hidden};
    enc.h0 = g.tanh(init.apply(g, params_, g.concat_cols({z, enc.cond})));
    enc.ones_mask = Tensor<Real>(Shape{B, T}, Real(1));
    return enc;
  }

  NodeId step_logits(Graph<Real>& g, NodeId dec_h, const std::vector<NodeId>& enc_states,
                     const Tensor<Real>& mask) const {
    NodeId ctx = g.attention_steps(dec_h, enc_states, mask);
    nc::Dense<Real> pre{"pre", 2 * spec_.hidden, spec_.dense};
    NodeId hidden = g.tanh(pre.apply(g, params_, g.concat_cols({dec_h, ctx})));
    nc::Dense<Real> out{"out", spec_.dense, vocab_size_};
    return out.apply(g, params_, hidden);
  }

  void train_epochs(const std::vector<const std::vector<TokenSeq>*>& pools,
                    const std::vector<int>& conditions, const cls::Classifier<Real>* classifier,
                    const LossWeights& w, int epochs, int batch, double lr, uint64_t seed,
                    TrainCurves* curves) {
    w.validate();
    nc::Adam<Real> opt(nc::AdamHyper<Real>{static_cast<Real>(lr), Real(0.9), Real(0.999),
                                           Real(1e-8)});
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const std::vector<TokenSeq>& pool = *pools[epoch % pools.size()];
      int condition = conditions[epoch % conditions.size()];
      std::vector<size_t> order(pool.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng shuffle_rng(mix_seed(seed, 0x9e70, static_cast<uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      double recon_sum = 0, cls_sum = 0, div_sum = 0, total_sum = 0;
      int batches = 0;
      for (size_t at = 0; at < order.size(); at += batch) {
        std::vector<TokenSeq> xs;
        for (size_t i = at; i < std::min(order.size(), at + batch); ++i)
          xs.push_back(pool[order[i]]);
        Graph<Real> g;
        BatchLoss bl = build_training_loss(g, xs, condition, classifier, w);
        recon_sum += static_cast<double>(g.value(bl.recon).data[0]);
        if (bl.cls >= 0) cls_sum += static_cast<double>(g.value(bl.cls).data[0]);
        if (bl.div >= 0) div_sum += static_cast<double>(g.value(bl.div).data[0]);
        if (bl.div_skipped && curves) ++curves->div_skips;
        total_sum += static_cast<double>(g.value(bl.total).data[0]);
        g.backward(bl.total);
        GradientMap<Real> grads;
        grads.collect(g);
        opt.step(params_, grads);
        ++batches;
      }
      if (curves) {
        curves->recon.push_back(recon_sum / batches);
        curves->cls.push_back(cls_sum / batches);
        curves->div.push_back(div_sum / batches);
        curves->total.push_back(total_sum / batches);
      }
    }
  }
};

// ---- candidate extraction and expansion ------------------------------------

// Tokens of xhat (in xhat order) absent from x by identity, duplicates
// collapsed to first occurrence; second element gives each kept token's
// emission step.
inline std::pair<TokenSeq, std::vector<int>> perturbation_tokens(const TokenSeq& x,
                                                                 const TokenSeq& xhat) {
  std::set<int> in_x(x.begin(), x.end());
  std::set<int> in_delta;
  TokenSeq tokens;
  std::vector<int> steps;
  for (size_t t = 0; t < xhat.size(); ++t) {
    int tok = xhat[t];
    if (in_x.count(tok) || in_delta.count(tok)) continue;
    in_delta.insert(tok);
    tokens.push_back(tok);
    steps.push_back(static_cast<int>(t));
  }
  return {tokens, steps};
}

template <class Real>
std::vector<Candidate> extract_candidates(const Generator<Real>& gen,
                                          const std::vector<TokenSeq>& xs, int condition,
                                          int K) {
  if (gen.phase() != Phase::Adversarial)
    throw Error("extraction needs an adversarially-trained generator");
  std::vector<Candidate> out;
  std::set<TokenSeq> seen;
  for (const auto& x : xs) {
    DecodeRecord rec = gen.decode(x, condition, K);
    auto [tokens, steps] = perturbation_tokens(x, rec.output);
    if (tokens.empty()) continue;
    Candidate cand;
    cand.provenance = "greedy";
    cand.tokens = std::move(tokens);
    for (int t : steps) cand.alternates.push_back(rec.steps[t].alt_ids);
    if (seen.insert(cand.tokens).second) out.push_back(std::move(cand));
  }
  return out;
}

// Single-pass top-K substitution: each position of each candidate swapped for
// each recorded alternate, unioned with the originals.
inline std::vector<Candidate> expand_topk(const std::vector<Candidate>& delta, int K) {
  if (K < 1) throw Error("expand_topk: bad K");
  std::vector<Candidate> out;
  std::set<TokenSeq> seen;
  for (const auto& c : delta) {
    if (seen.insert(c.tokens).second) out.push_back(c);
  }
  for (const auto& c : delta) {
    if (c.alternates.size() != c.tokens.size())
      throw Error("expand_topk: candidate lacks its decode record");
    for (size_t pos = 0; pos < c.tokens.size(); ++pos) {
      int ranks = std::min<int>(K, static_cast<int>(c.alternates[pos].size()));
      for (int r = 0; r < ranks; ++r) {
        TokenSeq t = c.tokens;
        t[pos] = c.alternates[pos][r];
        if (!seen.insert(t).second) continue;
        Candidate swapped;
        swapped.tokens = std::move(t);
        swapped.provenance = "topk(" + std::to_string(pos) + "," + std::to_string(r) + ")";
        out.push_back(std::move(swapped));
      }
    }
  }
  return out;
}

// ---- standalone loss/diagnostic forms --------------------------------------

// Mean token cross-entropy of explicit per-step distributions against x.
inline double reconstruction_loss(const std::vector<std::vector<double>>& dists,
                                  const TokenSeq& x) {
  if (dists.size() != x.size()) throw Error("reconstruction_loss: length mismatch");
  if (x.empty()) throw Error("reconstruction_loss: empty sequence");
  double sum = 0;
  for (size_t t = 0; t < x.size(); ++t) {
    int id = x[t];
    if (id < 0 || id >= static_cast<int>(dists[t].size()))
      throw Error("reconstruction_loss: token outside distribution support");
    sum += -std::log(std::max(dists[t][id], 1e-300));
  }
  return sum / static_cast<double>(x.size());
}

inline double classification_loss_from_proba(const std::vector<double>& proba, int target) {
  if (target < 0 || target >= static_cast<int>(proba.size()))
    throw Error("classification_loss: invalid class");
  return -std::log(std::max(proba[target], 1e-300));
}

template <class Real>
double classification_loss(const cls::Classifier<Real>& classifier,
                           const std::vector<std::vector<Real>>& dists, int target) {
  if (target < 0 || target >= classifier.spec().classes)
    throw Error("classification_loss: invalid class");
  return classification_loss_from_proba(classifier.soft_forward(dists), target);
}

// Analysis-time diversity: entropy of the batch-aggregated perturbation
// distribution, from hard token counts. Zero total mass returns 0.
inline double diversity_value(const std::vector<TokenSeq>& xs,
                              const std::vector<TokenSeq>& xhats, int vocab_size) {
  if (xs.size() != xhats.size() || xs.empty())
    throw Error("diversity_value: batch size mismatch");
  std::vector<double> agg(vocab_size, 0.0);
  for (size_t b = 0; b < xs.size(); ++b) {
    std::vector<double> diff(vocab_size, 0.0);
    for (int id : xhats[b]) {
      if (id < 0 || id >= vocab_size) throw Error("diversity_value: token outside vocabulary");
      diff[id] += 1.0;
    }
    for (int id : xs[b]) {
      if (id < 0 || id >= vocab_size) throw Error("diversity_value: token outside vocabulary");
      diff[id] -= 1.0;
    }
    for (int j = 0; j < vocab_size; ++j) agg[j] += std::clamp(diff[j], 0.0, 1.0);
  }
  double total = 0;
  for (double v : agg) total += v;
  if (total <= 0) return 0.0;
  double h = 0;
  for (double v : agg) {
    if (v > 0) {
      double p = v / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

}  // namespace tminer::gen
