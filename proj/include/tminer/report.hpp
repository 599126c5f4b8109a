#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tminer::report {

struct CandidateEvidence {
  std::vector<std::string> tokens;
  double mr_s = -1.0;  // -1 for auxiliary phrases (never scored)
  bool adversarial = false;
  bool outlier = false;
  int cluster = -1;
};

struct DetectionReport {
  std::string model_path;
  uint64_t config_hash = 0;
  std::string search_mode = "greedy";
  int search_k = 1;
  bool is_trojan = false;
  int candidates = 0;
  int adversarial = 0;
  int aux = 0;
  int pca_dims = 0;
  int outliers_adv = 0;
  int outliers_aux = 0;
  double eps = 0.0;
  int min_points = 0;
  int clusters = 0;
  std::vector<std::string> notes;
  std::vector<CandidateEvidence> evidence;  // all adversarial + outlier aux

  void save(const std::string& path) const;
  static DetectionReport load(const std::string& path);
};

struct ZooEntry {
  std::string model_path;
  bool trojan = false;
  uint64_t seed = 0;
  double asr = 0.0;
  double accuracy = 0.0;
  std::string tag = "standard";                // attack flavor or "clean"
  std::vector<std::string> trigger_tokens;     // empty for clean
};

struct ZooManifest {
  uint64_t config_hash = 0;
  std::vector<ZooEntry> entries;

  void save(const std::string& path) const;
  static ZooManifest load(const std::string& path);
};

struct ScoreSummary {
  int total = 0;
  int fn = 0;
  int fp = 0;
  double accuracy = 0.0;
  // per trigger length: max true-trigger tokens found in a single outlier
  // candidate, one value per detected Trojan model
  std::map<int, std::vector<int>> retrieval;

  std::string render() const;
};

}  // namespace tminer::report
