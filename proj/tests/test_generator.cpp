#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "tminer/generator.hpp"
#include "tminer/gradcheck.hpp"
#include "tminer/toytask.hpp"

using namespace tminer;
using namespace tminer::nc;
using namespace tminer::gen;
using corpus::TokenSeq;
using corpus::Vocabulary;

namespace {

GenSpec micro_spec(int classes = 2) {
  GenSpec s;
  s.embed = 4;
  s.hidden = 5;
  s.latent = 4;
  s.dense = 3;
  s.classes = classes;
  s.max_len = 16;
  return s;
}

cls::ArchSpec micro_cls(int classes = 2) {
  cls::ArchSpec s;
  s.family = "lstm";
  s.embed = 4;
  s.hidden = 4;
  s.dense = 3;
  s.classes = classes;
  return s;
}

std::string params_bytes(const ParameterSet<float>& ps) {
  std::ostringstream os;
  ps.save(os);
  return os.str();
}

}  // namespace

TEST_CASE("reconstruction loss closed forms") {
  int V = 7;
  TokenSeq x = {2, 5, 3};
  std::vector<std::vector<double>> exact;
  for (int id : x) {
    std::vector<double> d(V, 0.0);
    d[id] = 1.0;
    exact.push_back(d);
  }
  CHECK(reconstruction_loss(exact, x) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<std::vector<double>> uniform(x.size(), std::vector<double>(V, 1.0 / V));
  CHECK(std::fabs(reconstruction_loss(uniform, x) - std::log(double(V))) < 1e-12);

  // hand-summed oracle on an arbitrary distribution sequence
  Rng rng(99);
  std::vector<std::vector<double>> dists;
  for (size_t t = 0; t < x.size(); ++t) {
    std::vector<double> d(V);
    double sum = 0;
    for (int j = 0; j < V; ++j) {
      d[j] = rng.uniform() + 0.01;
      sum += d[j];
    }
    for (int j = 0; j < V; ++j) d[j] /= sum;
    dists.push_back(d);
  }
  double hand = 0;
  for (size_t t = 0; t < x.size(); ++t) hand += -std::log(dists[t][x[t]]);
  hand /= static_cast<double>(x.size());
  CHECK(std::fabs(reconstruction_loss(dists, x) - hand) < 1e-9);

  CHECK_THROWS_AS(reconstruction_loss(dists, {2, 5}), Error);
  CHECK_THROWS_AS(reconstruction_loss({}, {}), Error);
}

TEST_CASE("classification loss closed forms") {
  CHECK(std::fabs(classification_loss_from_proba({1e-6, 1.0 - 1e-6}, 0) -
                  13.815510557964274) < 1e-9);
  CHECK(classification_loss_from_proba({1e-9, 1.0 - 1e-9}, 1) ==
        doctest::Approx(0.0).epsilon(1e-8));
  CHECK_THROWS_AS(classification_loss_from_proba({0.5, 0.5}, 2), Error);
  CHECK_THROWS_AS(classification_loss_from_proba({0.5, 0.5}, -1), Error);

  // consistency with the classifier's own soft forward
  cls::Classifier<float> model(micro_cls(), 9, 1, 3);
  TokenSeq seq = {3, 7, 4};
  std::vector<std::vector<float>> soft;
  for (int id : seq) {
    std::vector<float> row(9, 0.f);
    row[id] = 1.f;
    soft.push_back(row);
  }
  double via_fn = classification_loss(model, soft, 1);
  double direct = -std::log(model.predict_proba(seq)[1]);
  CHECK(std::fabs(via_fn - direct) < 1e-6);
  CHECK_THROWS_AS(classification_loss(model, soft, 5), Error);
}

TEST_CASE("diversity value closed forms") {
  int V = 12;
  // every sample introduces the same single token -> point mass -> 0
  std::vector<TokenSeq> xs = {{2, 3}, {4, 5}, {6, 7}};
  std::vector<TokenSeq> same = {{2, 9}, {4, 9}, {6, 9}};
  CHECK(diversity_value(xs, same, V) == doctest::Approx(0.0).epsilon(1e-12));

  // N distinct single-token perturbations -> ln N
  std::vector<TokenSeq> distinct = {{2, 8}, {4, 9}, {6, 10}};
  CHECK(std::fabs(diversity_value(xs, distinct, V) - std::log(3.0)) < 1e-12);

  // no perturbation at all -> 0 by convention
  CHECK(diversity_value(xs, xs, V) == doctest::Approx(0.0));

  // mixed batch vs hand computation, and the ln V bound
  std::vector<TokenSeq> mixed = {{8, 9}, {9, 10}, {2, 3}};
  std::vector<double> agg(V, 0.0);
  for (size_t b = 0; b < xs.size(); ++b) {
    std::vector<double> diff(V, 0.0);
    for (int id : mixed[b]) diff[id] += 1;
    for (int id : xs[b]) diff[id] -= 1;
    for (int j = 0; j < V; ++j) agg[j] += std::clamp(diff[j], 0.0, 1.0);
  }
  double total = 0, hand = 0;
  for (double v : agg) total += v;
  for (double v : agg)
    if (v > 0) hand -= (v / total) * std::log(v / total);
  double got = diversity_value(xs, mixed, V);
  CHECK(std::fabs(got - hand) < 1e-9);
  CHECK(got <= std::log(double(V)) + 1e-12);

  CHECK_THROWS_AS(diversity_value(xs, {{2}}, V), Error);
}

TEST_CASE("combined objective is the weighted sum and checks against finite differences") {
  int V = 12;
  Generator<double> gen(micro_spec(), V, 1, 71);
  cls::Classifier<double> suspect(micro_cls(), V, 1, 72);
  std::vector<TokenSeq> xs = {{3, 8, 5}, {9, 2, 11}};
  LossWeights w{1.0, 0.5, 0.03, false};

  {
    Graph<double> g;
    auto bl = gen.build_training_loss(g, xs, 1, &suspect, w);
    REQUIRE(bl.cls >= 0);
    REQUIRE(bl.div >= 0);
    double r = g.value(bl.recon).data[0];
    double c = g.value(bl.cls).data[0];
    double d = g.value(bl.div).data[0];
    double t = g.value(bl.total).data[0];
    CHECK(r >= 0.0);
    CHECK(c >= 0.0);
    CHECK(d >= 0.0);
    CHECK(std::fabs(t - (w.lambda_r * r + w.lambda_c * c + w.lambda_div * d)) < 1e-9);
  }

  auto build = [&](Graph<double>& g, ParameterSet<double>&) {
    return gen.build_training_loss(g, xs, 1, &suspect, w).total;
  };
  auto rep = grad_check(gen.params(), build);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("sign-flipped diversity subtracts the entropy term") {
  int V = 12;
  Generator<double> gen(micro_spec(), V, 1, 73);
  std::vector<TokenSeq> xs = {{3, 8, 5}, {9, 2, 11}};
  Graph<double> g;
  auto plus = gen.build_training_loss(g, xs, -1, nullptr, {1.0, 0.0, 0.03, false});
  Graph<double> g2;
  auto minus = gen.build_training_loss(g2, xs, -1, nullptr, {1.0, 0.0, 0.03, true});
  double r = g.value(plus.recon).data[0];
  double d = g.value(plus.div).data[0];
  CHECK(std::fabs(g.value(plus.total).data[0] - (r + 0.03 * d)) < 1e-9);
  CHECK(std::fabs(g2.value(minus.total).data[0] - (r - 0.03 * d)) < 1e-9);
}

TEST_CASE("training loss input validation") {
  int V = 12;
  Generator<double> gen(micro_spec(), V, 1, 74);
  cls::Classifier<double> suspect(micro_cls(), V, 1, 75);
  cls::Classifier<double> foreign(micro_cls(), V, 99, 76);  // different vocab hash
  Graph<double> g;
  std::vector<TokenSeq> xs = {{3, 8, 5}};
  CHECK_THROWS_AS(gen.build_training_loss(g, xs, 1, nullptr, {1, 0.5, 0, false}), Error);
  CHECK_THROWS_AS(gen.build_training_loss(g, xs, -1, &suspect, {1, 0.5, 0, false}), Error);
  CHECK_THROWS_AS(gen.build_training_loss(g, xs, 1, &foreign, {1, 0.5, 0, false}), Error);
  CHECK_THROWS_AS(gen.build_training_loss(g, {{3, 8}, {5}}, -1, nullptr, {1, 0, 0, false}),
                  Error);
  CHECK_THROWS_AS(gen.build_training_loss(g, {}, -1, nullptr, {1, 0, 0, false}), Error);
  CHECK_THROWS_AS(gen.build_training_loss(g, xs, 1, &suspect, {-1, 0, 0, false}), Error);
}

namespace {

std::vector<TokenSeq> memorize_set() {
  // 10 fixed sequences over a vocab of 20 (ids 2..19 are real tokens)
  return {{2, 7, 11, 3, 18, 5},  {9, 9, 14, 2, 6, 17},  {4, 12, 8, 15, 3, 2},
          {19, 5, 5, 10, 13, 7}, {6, 3, 16, 11, 2, 12}, {13, 18, 4, 9, 8, 10},
          {7, 2, 15, 17, 14, 4}, {11, 6, 3, 19, 12, 9}, {16, 10, 2, 5, 7, 13},
          {8, 14, 18, 6, 4, 15}};
}

}  // namespace

TEST_CASE("autoencoder memorizes a small set") {
  GenSpec spec;
  spec.embed = 16;
  spec.hidden = 32;
  spec.latent = 16;
  spec.dense = 16;
  spec.classes = 2;
  spec.max_len = 8;
  GenHyper hyper;
  hyper.pretrain_epochs = 150;
  hyper.batch = 10;
  hyper.lr = 3e-3;
  TrainCurves curves;
  auto gen = Generator<float>::pretrain(spec, memorize_set(), hyper, 20, 1, 5, &curves);
  CHECK(gen.phase() == Phase::Pretrained);
  CHECK(gen.recon_accuracy() >= 0.99);
  REQUIRE(curves.recon.size() == 150);
  CHECK(curves.recon.front() > curves.recon.back());
  for (double v : curves.recon) CHECK(v >= 0.0);
  // a memorizing decoder reproduces its input exactly
  auto rec = gen.decode(memorize_set()[0], -1, 3);
  CHECK(rec.output == memorize_set()[0]);
}

TEST_CASE("pretraining rejects bad inputs and is deterministic") {
  CHECK_THROWS_AS(Generator<float>::pretrain(micro_spec(), memorize_set(),
                                             GenHyper{0, 6, 10, 3e-3}, 20, 1, 5),
                  Error);
  CHECK_THROWS_AS(
      Generator<float>::pretrain(micro_spec(), {}, GenHyper{2, 6, 10, 3e-3}, 20, 1, 5), Error);

  GenHyper quick{3, 6, 10, 3e-3};
  auto a = Generator<float>::pretrain(micro_spec(), memorize_set(), quick, 20, 1, 5);
  auto b = Generator<float>::pretrain(micro_spec(), memorize_set(), quick, 20, 1, 5);
  auto c = Generator<float>::pretrain(micro_spec(), memorize_set(), quick, 20, 1, 6);
  CHECK(params_bytes(a.params()) == params_bytes(b.params()));
  CHECK(params_bytes(a.params()) != params_bytes(c.params()));
}

TEST_CASE("decode records are consistent with the emitted distribution") {
  GenHyper quick{5, 6, 10, 3e-3};
  auto gen = Generator<float>::pretrain(micro_spec(), memorize_set(), quick, 20, 1, 5);
  TokenSeq x = {2, 7, 11, 3, 18, 5};
  auto rec = gen.decode(x, -1, 4);
  CHECK(rec.output.size() == x.size());
  REQUIRE(rec.steps.size() == x.size());
  for (const auto& st : rec.steps) {
    CHECK(st.alt_ids.size() <= 4);
    double prev = st.emitted_prob;
    for (size_t r = 0; r < st.alt_ids.size(); ++r) {
      CHECK(st.alt_ids[r] != st.emitted);       // alternates exclude the argmax
      CHECK(st.alt_probs[r] <= prev + 1e-12);   // sorted by probability
      prev = st.alt_probs[r];
    }
  }
  // decode twice -> identical record
  auto rec2 = gen.decode(x, -1, 4);
  CHECK(rec2.output == rec.output);
  CHECK(rec2.steps[0].alt_ids == rec.steps[0].alt_ids);

  CHECK_THROWS_AS(gen.decode(x, 7, 4), Error);
  CHECK_THROWS_AS(gen.decode({}, -1, 4), Error);
  Generator<float> fresh(micro_spec(), 20, 1, 9);
  CHECK_THROWS_AS(fresh.decode(x, -1, 4), Error);
}

TEST_CASE("perturbation token extraction follows output order and identity") {
  // x=[a,b,c], xhat=[a,T,c,U] -> delta=[T,U]
  auto [tokens, steps] = perturbation_tokens({4, 5, 6}, {4, 9, 6, 11});
  CHECK(tokens == TokenSeq{9, 11});
  CHECK(steps == std::vector<int>{1, 3});

  // identical output -> empty
  CHECK(perturbation_tokens({4, 5, 6}, {4, 5, 6}).first.empty());
  // duplicates collapse to the first occurrence
  CHECK(perturbation_tokens({4}, {9, 9, 4, 9}).first == TokenSeq{9});
  // a token anywhere in x never enters delta
  CHECK(perturbation_tokens({4, 9}, {9, 9, 9}).first.empty());
}

TEST_CASE("top-K expansion enumerates single substitutions") {
  Candidate base;
  base.tokens = {5, 9};
  base.provenance = "greedy";
  base.alternates = {{6, 7}, {10, 11}};
  auto out = expand_topk({base}, 2);
  REQUIRE(out.size() == 5);  // original + exactly L*K = 4 new
  CHECK(out[0].tokens == TokenSeq{5, 9});
  std::set<TokenSeq> got;
  for (const auto& c : out) got.insert(c.tokens);
  std::set<TokenSeq> want = {{5, 9}, {6, 9}, {7, 9}, {5, 10}, {5, 11}};
  CHECK(got == want);
  for (size_t i = 1; i < out.size(); ++i) CHECK(out[i].provenance.substr(0, 4) == "topk");

  // K larger than the recorded list uses what exists
  auto capped = expand_topk({base}, 5);
  CHECK(capped.size() == 5);

  // single-token candidate: at most K new
  Candidate solo;
  solo.tokens = {3};
  solo.alternates = {{4, 5, 6, 7, 8}};
  CHECK(expand_topk({solo}, 5).size() == 6);

  // substitutions that collide with existing candidates deduplicate
  Candidate twin;
  twin.tokens = {6, 9};
  twin.alternates = {{5}, {10}};
  auto merged = expand_topk({base, twin}, 2);
  std::set<TokenSeq> uniq;
  for (const auto& c : merged) uniq.insert(c.tokens);
  CHECK(merged.size() == uniq.size());

  Candidate broken;
  broken.tokens = {3, 4};
  broken.alternates = {{5}};  // record missing for one position
  CHECK_THROWS_AS(expand_topk({broken}, 2), Error);
}

TEST_CASE("generator files round-trip with phase") {
  GenHyper quick{2, 6, 10, 3e-3};
  auto gen = Generator<float>::pretrain(micro_spec(), memorize_set(), quick, 20, 0xfeed, 5);
  gen.save("generator_roundtrip.model");
  auto back = Generator<float>::load("generator_roundtrip.model", 0xfeed);
  CHECK(params_bytes(gen.params()) == params_bytes(back.params()));
  CHECK(back.phase() == Phase::Pretrained);
  CHECK(back.recon_accuracy() == doctest::Approx(gen.recon_accuracy()));
  CHECK_THROWS_AS(Generator<float>::load("generator_roundtrip.model", 0xbeef), IoError);
}

TEST_CASE("adversarial training freezes the classifier and gates on phase") {
  auto task = toy::make_toy_task("toy-binary", 240, 3);
  auto suspect = cls::Classifier<float>::train(task.train, task.val, micro_cls(),
                                               cls::TrainHyper{3, 3, 32, 3e-3},
                                               task.vocab.size(), task.vocab.content_hash(), 7);
  // fixed-length synthetic pool labeled by the suspect
  auto pool = corpus::sample_unlabeled_corpus(task.vocab, 120, 8, 91);
  corpus::label_corpus(pool, suspect.labeler(), 2);

  GenSpec spec = micro_spec();
  spec.embed = 8;
  spec.hidden = 12;
  spec.latent = 8;
  spec.dense = 8;
  GenHyper hyper{2, 4, 16, 3e-3};
  auto gen = Generator<float>::pretrain(spec, pool.samples, hyper, task.vocab.size(),
                                        task.vocab.content_hash(), 11);

  Generator<float> fresh(spec, task.vocab.size(), task.vocab.content_hash(), 12);
  CHECK_THROWS_AS(fresh.adversarial_train(&suspect, pool, 0, 1, {}, hyper, 1), Error);

  std::string before = [&] {
    std::ostringstream os;
    suspect.params().save(os);
    return os.str();
  }();
  TrainCurves curves;
  gen.adversarial_train(&suspect, pool, 0, 1, LossWeights{1.0, 0.5, 0.03, false}, hyper, 21,
                        &curves);
  CHECK(gen.phase() == Phase::Adversarial);
  std::string after = [&] {
    std::ostringstream os;
    suspect.params().save(os);
    return os.str();
  }();
  CHECK(before == after);
  REQUIRE(curves.total.size() == 4);
  for (size_t e = 0; e < curves.total.size(); ++e) {
    CHECK(curves.recon[e] >= 0.0);
    CHECK(curves.cls[e] >= 0.0);
    CHECK(curves.div[e] >= 0.0);
  }

  // bad class pairs and unlabeled corpora are rejected
  CHECK_THROWS_AS(gen.adversarial_train(&suspect, pool, 0, 0, {}, hyper, 1), Error);
  CHECK_THROWS_AS(gen.adversarial_train(&suspect, pool, 0, 5, {}, hyper, 1), Error);
  corpus::SyntheticCorpus unlabeled = pool;
  unlabeled.labels.clear();
  CHECK_THROWS_AS(gen.adversarial_train(&suspect, unlabeled, 0, 1, {}, hyper, 1), Error);

  // extraction runs end to end on the trained generator
  std::vector<TokenSeq> probe(pool.samples.begin(), pool.samples.begin() + 20);
  auto delta = extract_candidates(gen, probe, 1, 5);
  for (const auto& c : delta) {
    CHECK(!c.tokens.empty());
    for (int tok : c.tokens) CHECK(tok < task.vocab.size());
  }
  // brute-force re-extraction oracle over the same decodes
  std::set<TokenSeq> expect;
  for (const auto& x : probe) {
    auto rec = gen.decode(x, 1, 5);
    auto [tokens, steps] = perturbation_tokens(x, rec.output);
    if (!tokens.empty()) expect.insert(tokens);
  }
  std::set<TokenSeq> got;
  for (const auto& c : delta) got.insert(c.tokens);
  CHECK(got == expect);
}

TEST_CASE("degenerate weights detach the classifier entirely") {
  auto task = toy::make_toy_task("toy-binary", 240, 5);
  auto suspect = cls::Classifier<float>::train(task.train, task.val, micro_cls(),
                                               cls::TrainHyper{2, 2, 32, 3e-3},
                                               task.vocab.size(), task.vocab.content_hash(), 7);
  auto pool = corpus::sample_unlabeled_corpus(task.vocab, 100, 8, 92);
  pool.labels.resize(pool.samples.size());
  for (size_t i = 0; i < pool.labels.size(); ++i) pool.labels[i] = static_cast<int>(i % 2);

  GenSpec spec = micro_spec();
  spec.classes = 2;
  GenHyper hyper{2, 3, 16, 3e-3};
  auto a = Generator<float>::pretrain(spec, pool.samples, hyper, task.vocab.size(),
                                      task.vocab.content_hash(), 31);
  auto b = a;  // identical pretrained copies

  TrainCurves ca, cb;
  LossWeights degenerate{1.0, 0.0, 0.0, false};
  a.adversarial_train(&suspect, pool, 0, 1, degenerate, hyper, 61, &ca);
  b.adversarial_train(nullptr, pool, 0, 1, degenerate, hyper, 61, &cb);
  CHECK(params_bytes(a.params()) == params_bytes(b.params()));
  REQUIRE(ca.recon.size() == cb.recon.size());
  for (size_t e = 0; e < ca.recon.size(); ++e)
    CHECK(ca.recon[e] == doctest::Approx(cb.recon[e]).epsilon(1e-12));

  // pure-reconstruction continuation keeps improving the autoencoder
  auto before = a.reconstruction_accuracy(pool.samples, 100);
  a.adversarial_train(nullptr, pool, 0, 1, degenerate, GenHyper{2, 6, 16, 3e-3}, 62);
  auto after = a.reconstruction_accuracy(pool.samples, 100);
  CHECK(after >= before - 1e-9);
}
