#include "doctest.h"

#include <cmath>
#include <sstream>

#include "tminer/classifier.hpp"
#include "tminer/gradcheck.hpp"
#include "tminer/toytask.hpp"

using namespace tminer;
using namespace tminer::nc;
using namespace tminer::cls;
using corpus::TokenSeq;

namespace {

ArchSpec tiny_spec(const std::string& family, int classes = 2) {
  ArchSpec s;
  s.family = family;
  s.embed = 4;
  s.hidden = 4;
  s.dense = 3;
  s.heads = 2;
  s.classes = classes;
  s.max_len = 12;
  return s;
}

constexpr int kVocab = 11;

std::vector<TokenSeq> sample_seqs() {
  return {{3, 4, 5, 6, 7}, {8, 9, 10}, {5, 5, 5, 5, 5, 5, 5}, {10}};
}

}  // namespace

TEST_CASE("predict_proba sums to one and matches predict") {
  for (const char* family : {"lstm", "bilstm", "attention"}) {
    CAPTURE(family);
    Classifier<float> model(tiny_spec(family, 3), kVocab, 0xabcu, 17);
    for (const auto& seq : sample_seqs()) {
      auto p = model.predict_proba(seq);
      REQUIRE(p.size() == 3);
      double sum = 0;
      for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
      int arg = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      CHECK(model.predict(seq) == arg);
    }
  }
}

TEST_CASE("token ids outside the vocabulary are rejected") {
  Classifier<float> model(tiny_spec("lstm"), kVocab, 1, 2);
  CHECK_THROWS_AS(model.predict({3, kVocab}), Error);
  CHECK_THROWS_AS(model.predict({-1}), Error);
  CHECK_THROWS_AS(model.predict({}), Error);
}

TEST_CASE("batched prediction equals one-at-a-time prediction") {
  for (const char* family : {"lstm", "bilstm"}) {
    CAPTURE(family);
    Classifier<float> model(tiny_spec(family), kVocab, 1, 23);
    auto seqs = sample_seqs();
    auto batched = model.predict_batch(seqs);
    for (size_t i = 0; i < seqs.size(); ++i) CHECK(batched[i] == model.predict(seqs[i]));
  }
}

TEST_CASE("soft forward with one-hot rows equals hard forward") {
  for (const char* family : {"lstm", "bilstm", "attention"}) {
    CAPTURE(family);
    Classifier<float> model(tiny_spec(family, 3), kVocab, 1, 31);
    TokenSeq seq = {4, 9, 2, 7};
    std::vector<std::vector<float>> soft;
    for (int id : seq) {
      std::vector<float> row(kVocab, 0.f);
      row[id] = 1.f;
      soft.push_back(row);
    }
    auto hard = model.predict_proba(seq);
    auto via_soft = model.soft_forward(soft);
    for (int j = 0; j < 3; ++j) CHECK(std::fabs(hard[j] - via_soft[j]) < 1e-6);
  }
}

TEST_CASE("soft forward validates its input") {
  Classifier<float> model(tiny_spec("lstm"), kVocab, 1, 5);
  std::vector<std::vector<float>> bad_size = {std::vector<float>(kVocab - 1, 0.f)};
  CHECK_THROWS_AS(model.soft_forward(bad_size), Error);
  std::vector<float> not_normalized(kVocab, 0.f);
  not_normalized[2] = 0.5f;
  CHECK_THROWS_AS(model.soft_forward({not_normalized}), Error);
  CHECK_THROWS_AS(model.soft_forward({}), Error);
}

TEST_CASE("gradients through the full network check out per family") {
  // The classifier's own parameter set doubles as the checked set: the
  // builder rebuilds the forward pass from it every evaluation.
  for (const char* family : {"lstm", "bilstm", "attention"}) {
    CAPTURE(family);
    Classifier<double> model(tiny_spec(family, 2), kVocab, 1, 41);
    auto build = [&model](Graph<double>& g, ParameterSet<double>&) {
      auto tap1 = model.build_hard(g, {{3, 4, 5, 6}});
      NodeId l1 = g.softmax_ce(tap1.logits, {0});
      auto tap2 = model.build_hard(g, {{9, 2}});
      NodeId l2 = g.softmax_ce(tap2.logits, {1});
      return g.add(l1, l2);
    };
    auto rep = grad_check(model.params(), build);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_err < 1e-3);
  }
}

TEST_CASE("gradients flow through soft inputs to an upstream source") {
  // Generator feedback path: loss gradients must reach the distributions
  // feeding the classifier, here modeled as free parameters.
  for (const char* family : {"lstm", "bilstm", "attention"}) {
    CAPTURE(family);
    Classifier<double> model(tiny_spec(family, 2), kVocab, 1, 43);
    ParameterSet<double> source(97);
    source.add("s0", 1, kVocab, Init::Glorot);
    source.add("s1", 1, kVocab, Init::Glorot);
    source.add("s2", 1, kVocab, Init::Glorot);
    auto build = [&model](Graph<double>& g, ParameterSet<double>& ps) {
      std::vector<NodeId> steps;
      for (const char* name : {"s0", "s1", "s2"})
        steps.push_back(g.softmax_rows(g.param(name, ps.get(name))));
      auto tap = model.build_soft(g, steps);
      return g.softmax_ce(tap.logits, {1});
    };
    auto rep = grad_check(source, build);
    CAPTURE(rep.worst_param);
    CHECK(rep.max_rel_err < 1e-5);
  }
}

TEST_CASE("padding does not leak into recurrent states") {
  // A short sequence batched with a long one must produce the same
  // representation as the short sequence alone.
  for (const char* family : {"lstm", "bilstm"}) {
    CAPTURE(family);
    Classifier<float> model(tiny_spec(family), kVocab, 1, 53);
    TokenSeq shorter = {4, 7};
    TokenSeq longer = {3, 3, 3, 3, 3, 3, 3, 3};
    auto alone = model.predict_proba(shorter);
    Graph<float> g;
    auto tap = model.build_hard(g, {shorter, longer});
    NodeId probs = g.softmax_rows(tap.logits);
    for (int j = 0; j < 2; ++j)
      CHECK(std::fabs(alone[j] - static_cast<double>(g.value(probs).at(0, j))) < 1e-6);
  }
}

TEST_CASE("representation dimension and batching agree") {
  for (const char* family : {"lstm", "bilstm", "attention"}) {
    CAPTURE(family);
    Classifier<float> model(tiny_spec(family), kVocab, 1, 59);
    auto seqs = sample_seqs();
    Eigen::MatrixXd reps = model.representations(seqs);
    REQUIRE(reps.rows() == static_cast<long>(seqs.size()));
    REQUIRE(reps.cols() == model.rep_dim());
    for (size_t i = 0; i < seqs.size(); ++i) {
      Eigen::RowVectorXd one = model.last_hidden(seqs[i]);
      CHECK((reps.row(static_cast<long>(i)) - one).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

namespace {

toy::ToyTask small_task(int total = 360, uint64_t seed = 29) {
  return toy::make_toy_task("toy-binary", total, seed);
}

std::string params_bytes(const Classifier<float>& m) {
  std::ostringstream os;
  m.params().save(os);
  return os.str();
}

TrainHyper quick_hyper() {
  TrainHyper h;
  h.epochs = 4;
  h.patience = 4;
  h.batch = 32;
  h.lr = 3e-3;
  return h;
}

}  // namespace

TEST_CASE("training is deterministic in the seed") {
  auto task = small_task();
  ArchSpec spec = tiny_spec("lstm");
  spec.embed = 8;
  spec.hidden = 8;
  spec.dense = 4;
  auto a = Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                    task.vocab.size(), task.vocab.content_hash(), 77);
  auto b = Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                    task.vocab.size(), task.vocab.content_hash(), 77);
  CHECK(params_bytes(a) == params_bytes(b));
  auto c = Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                    task.vocab.size(), task.vocab.content_hash(), 78);
  CHECK(params_bytes(a) != params_bytes(c));
}

TEST_CASE("zero-weight representation penalty changes nothing") {
  auto task = small_task(240);
  ArchSpec spec = tiny_spec("lstm");
  std::vector<TokenSeq> tp = {{3, 4}, {5}};
  std::vector<TokenSeq> aux = {{6, 7}, {8}, {9}};
  auto plain = Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                        task.vocab.size(), task.vocab.content_hash(), 91);
  auto with_zero = Classifier<float>::train_with_outlier_suppression(
      task.train, task.val, tp, aux, 0.0, spec, quick_hyper(), task.vocab.size(),
      task.vocab.content_hash(), 91);
  CHECK(params_bytes(plain) == params_bytes(with_zero));
}

TEST_CASE("suppression penalty inside the graph matches an external recomputation") {
  auto task = small_task(240);
  ArchSpec spec = tiny_spec("lstm");
  std::vector<TokenSeq> tp = {{3, 4, 5}, {6}};
  std::vector<TokenSeq> aux = {{7, 8}, {9}, {10, 3}};
  TrainHyper h = quick_hyper();
  h.epochs = 2;
  TrainLog log;
  auto model = Classifier<float>::train_with_outlier_suppression(
      task.train, task.val, tp, aux, 0.05, spec, h, task.vocab.size(),
      task.vocab.content_hash(), 97, &log);
  REQUIRE(log.penalty.size() == static_cast<size_t>(log.epochs_ran));
  for (double p : log.penalty) CHECK(p >= 0.0);

  // recompute |R(aux) - R(tp)|^2 on the final parameters two ways
  Eigen::RowVectorXd r_tp = Eigen::RowVectorXd::Zero(model.rep_dim());
  for (const auto& ph : tp) r_tp += model.last_hidden(ph);
  r_tp /= static_cast<double>(tp.size());
  Eigen::RowVectorXd r_aux = Eigen::RowVectorXd::Zero(model.rep_dim());
  for (const auto& ph : aux) r_aux += model.last_hidden(ph);
  r_aux /= static_cast<double>(aux.size());
  double external = (r_aux - r_tp).squaredNorm();

  Graph<float> g;
  std::vector<NodeId> reps;
  auto all = tp;
  all.insert(all.end(), aux.begin(), aux.end());
  auto tap = model.build_hard(g, all);
  NodeId acc_tp = g.slice_rows(tap.rep, 0, 1);
  for (size_t i = 1; i < tp.size(); ++i)
    acc_tp = g.add(acc_tp, g.slice_rows(tap.rep, (int)i, (int)i + 1));
  NodeId mean_tp = g.scale(acc_tp, 1.0f / tp.size());
  NodeId acc_aux = g.slice_rows(tap.rep, (int)tp.size(), (int)tp.size() + 1);
  for (size_t i = tp.size() + 1; i < all.size(); ++i)
    acc_aux = g.add(acc_aux, g.slice_rows(tap.rep, (int)i, (int)i + 1));
  NodeId mean_aux = g.scale(acc_aux, 1.0f / aux.size());
  NodeId pen = g.sum_all(g.square(g.sub(mean_aux, mean_tp)));
  double internal = static_cast<double>(g.value(pen).data[0]);
  CHECK(std::fabs(internal - external) < 1e-5);
}

TEST_CASE("tiny model learns the toy rule") {
  auto task = small_task(600, 3);
  ArchSpec spec = tiny_spec("lstm");
  spec.embed = 16;
  spec.hidden = 16;
  spec.dense = 8;
  TrainHyper h;
  h.epochs = 8;
  h.patience = 8;
  TrainLog log;
  auto model = Classifier<float>::train(task.train, task.val, spec, h, task.vocab.size(),
                                        task.vocab.content_hash(), 13, &log);
  CHECK(model.val_accuracy() >= 0.85);
  CHECK(model.evaluate_accuracy(task.test) >= 0.80);
  REQUIRE(!log.train_loss.empty());
  CHECK(log.train_loss.front() > log.train_loss.back());
}

TEST_CASE("early stopping restores the best-validation snapshot") {
  auto task = small_task(240);
  ArchSpec spec = tiny_spec("lstm");
  TrainHyper h = quick_hyper();
  h.epochs = 6;
  h.patience = 2;
  TrainLog log;
  auto model = Classifier<float>::train(task.train, task.val, spec, h, task.vocab.size(),
                                        task.vocab.content_hash(), 7, &log);
  REQUIRE(log.best_epoch >= 0);
  double best = *std::max_element(log.val_accuracy.begin(), log.val_accuracy.end());
  CHECK(model.val_accuracy() == doctest::Approx(best));
  CHECK(std::fabs(model.evaluate_accuracy(task.val) - best) < 1e-9);
}

TEST_CASE("model files round-trip and refuse a foreign vocabulary") {
  auto task = small_task(240);
  ArchSpec spec = tiny_spec("bilstm");
  auto model = Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                        task.vocab.size(), task.vocab.content_hash(), 19);
  std::string path = "classifier_roundtrip.model";
  model.save(path);
  auto back = Classifier<float>::load(path, task.vocab.content_hash());
  CHECK(params_bytes(model) == params_bytes(back));
  CHECK(back.val_accuracy() == doctest::Approx(model.val_accuracy()));
  CHECK(back.spec().family == "bilstm");
  for (const auto& [seq, label] : task.test.samples) {
    (void)label;
    CHECK(back.predict(seq) == model.predict(seq));
  }
  CHECK_THROWS_AS(Classifier<float>::load(path, task.vocab.content_hash() + 1), IoError);
  CHECK_THROWS_AS(Classifier<float>::load("no_such_file.model", 0), IoError);
}

TEST_CASE("training rejects inconsistent inputs") {
  auto task = small_task(240);
  ArchSpec spec = tiny_spec("lstm", 3);  // dataset has 2 classes
  CHECK_THROWS_AS(Classifier<float>::train(task.train, task.val, spec, quick_hyper(),
                                           task.vocab.size(), 1, 5),
                  Error);
  corpus::LabeledDataset empty;
  CHECK_THROWS_AS(Classifier<float>::train(empty, task.val, tiny_spec("lstm"), quick_hyper(),
                                           task.vocab.size(), 1, 5),
                  Error);
  CHECK_THROWS_AS(Classifier<float>::train_with_outlier_suppression(
                      task.train, task.val, {}, {}, 0.5, tiny_spec("lstm"), quick_hyper(),
                      task.vocab.size(), 1, 5),
                  Error);
}

TEST_CASE("attention family enforces its positional capacity") {
  ArchSpec spec = tiny_spec("attention");
  spec.max_len = 4;
  Classifier<float> model(spec, kVocab, 1, 3);
  CHECK_NOTHROW(model.predict({3, 4, 5, 6}));
  CHECK_THROWS_AS(model.predict({3, 4, 5, 6, 7}), Error);
}
