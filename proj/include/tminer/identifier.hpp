#pragma once

// Detection back half: score perturbation candidates by misclassification
// rate, keep the adversarial ones, embed them with auxiliary phrases in the
// classifier's last-hidden space, and call the model Trojan when an
// adversarial point lands outside every DBSCAN cluster. Plus the
// frequent-word auxiliary scan for high-frequency triggers.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tminer/classifier.hpp"
#include "tminer/corpus.hpp"
#include "tminer/dbscan.hpp"
#include "tminer/generator.hpp"
#include "tminer/pca.hpp"

namespace tminer::ident {

using corpus::TokenSeq;

// classifies a batch of sequences; lets tests drive the pipeline with rule
// oracles instead of trained models
using BatchLabeler = std::function<std::vector<int>(const std::vector<TokenSeq>&)>;

struct FilterConfig {
  double alpha = 0.6;             // MR_S threshold, kept with >=
  int filtering_size = 200;
  uint64_t injection_seed = 0;    // one fixed seed per detection run
  double variance_fraction = 0.95;
  bool strict_any_outlier = false;  // aux-only outliers also flag Trojan
  double scan_percentile = 5.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha threshold must be in (0,1)");
    if (filtering_size < 1) throw Error("bad filtering size");
    if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
      throw Error("bad variance fraction");
    if (!(scan_percentile > 0.0 && scan_percentile <= 100.0)) throw Error("bad scan percentile");
  }
};

struct ScoredCandidate {
  TokenSeq tokens;
  std::string provenance;
  double mr_s = 0.0;
};

// Injects `phrase` contiguously at a uniform-random gap into every sample
// (per-sample seed stream) and returns the exact fraction labeled `target`.
double misclassification_rate(const BatchLabeler& labeler, const std::vector<TokenSeq>& samples,
                              const TokenSeq& phrase, int target, uint64_t seed);

// Synthetic and real paths share one implementation by design; the names
// document which corpus the caller passed.
inline double misclassification_rate_synthetic(const BatchLabeler& labeler,
                                               const std::vector<TokenSeq>& samples,
                                               const TokenSeq& phrase, int target,
                                               uint64_t seed) {
  return misclassification_rate(labeler, samples, phrase, target, seed);
}
inline double misclassification_rate_real(const BatchLabeler& labeler,
                                          const std::vector<TokenSeq>& samples,
                                          const TokenSeq& phrase, int target, uint64_t seed) {
  return misclassification_rate(labeler, samples, phrase, target, seed);
}

std::vector<ScoredCandidate> score_candidates(const BatchLabeler& labeler,
                                              const std::vector<gen::Candidate>& delta,
                                              const std::vector<TokenSeq>& filtering_samples,
                                              int target, uint64_t seed);

// Keeps candidates with mr_s >= alpha.
std::vector<ScoredCandidate> filter_adversarial(const std::vector<ScoredCandidate>& scored,
                                                double alpha);

struct IdentifyResult {
  bool is_trojan = false;
  bool geometry_ran = false;      // false when Delta_adv was empty
  int n_adv = 0, n_aux = 0;
  int pca_dims = 0;
  double eps = 0.0;
  int min_points = 0;
  int cluster_count = 0;
  std::vector<int> labels;        // over Delta_tot: adv points first, then aux
  std::vector<int> outliers_adv;  // indices into Delta_adv
  std::vector<int> outliers_aux;  // indices into Delta_aux
  std::vector<std::string> notes;
};

// Geometry core on pre-computed representations: rows 0..n_adv-1 are
// adversarial phrases, the rest auxiliary.
IdentifyResult identify_points(const Eigen::MatrixXd& points, int n_adv,
                               const FilterConfig& config);

// Full step: representations of Delta_adv ∪ Delta_aux from the classifier's
// last hidden layer, PCA to the variance fraction, DBSCAN outliers, verdict.
// Empty Delta_adv short-circuits to a clean verdict.
template <class Real>
IdentifyResult identify(const cls::Classifier<Real>& clf,
                        const std::vector<ScoredCandidate>& delta_adv,
                        const std::vector<TokenSeq>& delta_aux, const FilterConfig& config) {
  config.validate();
  if (delta_aux.empty()) throw Error("identify: auxiliary phrase set is empty");
  if (delta_adv.empty()) {
    IdentifyResult out;
    out.n_aux = static_cast<int>(delta_aux.size());
    out.notes.push_back("no adversarial perturbations; skipped clustering");
    return out;
  }
  std::vector<TokenSeq> all;
  all.reserve(delta_adv.size() + delta_aux.size());
  for (const auto& c : delta_adv) all.push_back(c.tokens);
  for (const auto& p : delta_aux) all.push_back(p);
  Eigen::MatrixXd reps = clf.representations(all);
  return identify_points(reps, static_cast<int>(delta_adv.size()), config);
}

using FreqTable = std::map<int, long>;  // token id -> occurrence count

// Top-percentile band of the frequency table, sorted by count descending then
// id ascending; band size = max(1, floor(distinct * percentile / 100)).
std::vector<int> top_percentile_tokens(const FreqTable& freq, double percentile);

struct ScanResult {
  std::vector<ScoredCandidate> band;  // every scanned token with its MR_S
  std::vector<ScoredCandidate> adversarial;
  IdentifyResult result;
};

// Frequent-word scan: each top-percentile token becomes a length-1 candidate,
// scored and filtered like the generator's output, then clustered against the
// same auxiliary phrases.
template <class Real>
ScanResult frequent_word_scan(const cls::Classifier<Real>& clf, const BatchLabeler& labeler,
                              const FreqTable& freq, const std::vector<TokenSeq>& filtering_samples,
                              int target, const std::vector<TokenSeq>& delta_aux,
                              const FilterConfig& config) {
  config.validate();
  if (freq.empty()) throw Error("frequent_word_scan: empty frequency table");
  ScanResult out;
  for (int tok : top_percentile_tokens(freq, config.scan_percentile)) {
    ScoredCandidate c;
    c.tokens = {tok};
    c.provenance = "frequent-word";
    c.mr_s = misclassification_rate(labeler, filtering_samples, c.tokens, target,
                                    config.injection_seed);
    out.band.push_back(std::move(c));
  }
  out.adversarial = filter_adversarial(out.band, config.alpha);
  out.result = identify(clf, out.adversarial, delta_aux, config);
  return out;
}

}  // namespace tminer::ident
