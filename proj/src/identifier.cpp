#include "tminer/identifier.hpp"

#include <algorithm>

#include "tminer/rng.hpp"
#include "tminer/trigger.hpp"

namespace tminer::ident {

double misclassification_rate(const BatchLabeler& labeler, const std::vector<TokenSeq>& samples,
                              const TokenSeq& phrase, int target, uint64_t seed) {
  if (samples.empty()) throw Error("misclassification rate: empty sample set");
  if (phrase.empty()) throw Error("misclassification rate: empty candidate");
  attack::TriggerSpec spec;
  spec.phrase = phrase;
  spec.placement = attack::Placement::SingleRandomPosition;
  std::vector<TokenSeq> injected;
  injected.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    injected.push_back(attack::inject_trigger(samples[i], spec, mix_seed(seed, i)));
  std::vector<int> pred = labeler(injected);
  if (pred.size() != samples.size()) throw Error("misclassification rate: labeler size mismatch");
  long hit = 0;
  for (int p : pred) hit += p == target;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

std::vector<ScoredCandidate> score_candidates(const BatchLabeler& labeler,
                                              const std::vector<gen::Candidate>& delta,
                                              const std::vector<TokenSeq>& filtering_samples,
                                              int target, uint64_t seed) {
  std::vector<ScoredCandidate> out;
  out.reserve(delta.size());
  for (const auto& c : delta) {
    ScoredCandidate s;
    s.tokens = c.tokens;
    s.provenance = c.provenance;
    s.mr_s = misclassification_rate(labeler, filtering_samples, c.tokens, target, seed);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredCandidate> filter_adversarial(const std::vector<ScoredCandidate>& scored,
                                                double alpha) {
  std::vector<ScoredCandidate> kept;
  for (const auto& c : scored)
    if (c.mr_s >= alpha) kept.push_back(c);
  return kept;
}

IdentifyResult identify_points(const Eigen::MatrixXd& points, int n_adv,
                               const FilterConfig& config) {
  config.validate();
  int n = static_cast<int>(points.rows());
  if (n_adv < 1 || n_adv >= n) throw Error("identify: need adversarial and auxiliary points");
  IdentifyResult out;
  out.geometry_ran = true;
  out.n_adv = n_adv;
  out.n_aux = n - n_adv;

  ReducedPointSet reduced = pca_reduce(points, config.variance_fraction);
  out.pca_dims = static_cast<int>(reduced.points.cols());

  out.min_points = dbscan_min_points(n);
  out.eps = estimate_epsilon(reduced.points, out.min_points);
  OutlierResult db = dbscan_outliers(reduced.points, out.min_points, out.eps);
  out.cluster_count = db.cluster_count;
  out.labels = db.labels;
  for (int idx : db.outliers) {
    if (idx < n_adv) out.outliers_adv.push_back(idx);
    else out.outliers_aux.push_back(idx - n_adv);
  }
  out.is_trojan = !out.outliers_adv.empty() ||
                  (config.strict_any_outlier && !out.outliers_aux.empty());
  return out;
}

std::vector<int> top_percentile_tokens(const FreqTable& freq, double percentile) {
  if (freq.empty()) throw Error("top_percentile_tokens: empty frequency table");
  std::vector<std::pair<int, long>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  size_t band = std::max<size_t>(
      1, static_cast<size_t>(static_cast<double>(order.size()) * percentile / 100.0));
  band = std::min(band, order.size());
  std::vector<int> out;
  out.reserve(band);
  for (size_t i = 0; i < band; ++i) out.push_back(order[i].first);
  return out;
}

}  // namespace tminer::ident
