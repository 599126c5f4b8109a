#include "tminer/report.hpp"

#include <fstream>
#include <sstream>

#include "tminer/common.hpp"

namespace tminer::report {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write: " + path);
  return os;
}

std::vector<std::string> read_lines(const std::string& path, const std::string& header) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  if (lines.empty() || trim(lines[0]) != header)
    throw IoError(path + ": expected header '" + header + "'");
  return lines;
}

const std::string kReportHeader = std::string("tminer-report ") + kVersionTag;
const std::string kZooHeader = std::string("tminer-zoo ") + kVersionTag;

}  // namespace

void DetectionReport::save(const std::string& path) const {
  auto os = open_out(path);
  os << kReportHeader << "\n";
  os << "model " << model_path << "\n";
  os << "config " << hex64(config_hash) << "\n";
  os << "search " << search_mode << " " << search_k << "\n";
  os << "verdict " << (is_trojan ? "trojan" : "clean") << "\n";
  os << "counts candidates " << candidates << " adversarial " << adversarial << " aux "
     << aux << " pca_dims " << pca_dims << " outliers_adv " << outliers_adv
     << " outliers_aux " << outliers_aux << "\n";
  os << "dbscan eps " << eps << " min_points " << min_points << " clusters " << clusters
     << "\n";
  for (const auto& note : notes) os << "note " << note << "\n";
  for (const auto& ev : evidence) {
    os << "candidate " << (ev.adversarial ? "adv" : "aux") << " "
       << (ev.outlier ? "outlier" : "member") << " " << ev.cluster << " " << ev.mr_s;
    for (const auto& t : ev.tokens) os << " " << t;
    os << "\n";
  }
  if (!os) throw IoError("report write failed: " + path);
}

DetectionReport DetectionReport::load(const std::string& path) {
  auto lines = read_lines(path, kReportHeader);
  DetectionReport r;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    const std::string& k = tok[0];
    auto need = [&](size_t n) {
      if (tok.size() < n) throw IoError(path + ": short '" + k + "' line");
    };
    if (k == "model") {
      need(2);
      r.model_path = tok[1];
    } else if (k == "config") {
      need(2);
      r.config_hash = std::stoull(tok[1], nullptr, 16);
    } else if (k == "search") {
      need(3);
      r.search_mode = tok[1];
      r.search_k = std::stoi(tok[2]);
    } else if (k == "verdict") {
      need(2);
      r.is_trojan = tok[1] == "trojan";
    } else if (k == "counts") {
      need(13);
      r.candidates = std::stoi(tok[2]);
      r.adversarial = std::stoi(tok[4]);
      r.aux = std::stoi(tok[6]);
      r.pca_dims = std::stoi(tok[8]);
      r.outliers_adv = std::stoi(tok[10]);
      r.outliers_aux = std::stoi(tok[12]);
    } else if (k == "dbscan") {
      need(7);
      r.eps = std::stod(tok[2]);
      r.min_points = std::stoi(tok[4]);
      r.clusters = std::stoi(tok[6]);
    } else if (k == "note") {
      r.notes.push_back(trim(lines[i].substr(5)));
    } else if (k == "candidate") {
      need(5);
      CandidateEvidence ev;
      ev.adversarial = tok[1] == "adv";
      ev.outlier = tok[2] == "outlier";
      ev.cluster = std::stoi(tok[3]);
      ev.mr_s = std::stod(tok[4]);
      ev.tokens.assign(tok.begin() + 5, tok.end());
      r.evidence.push_back(std::move(ev));
    } else {
      throw IoError(path + ": unknown report line '" + k + "'");
    }
  }
  return r;
}

void ZooManifest::save(const std::string& path) const {
  auto os = open_out(path);
  os << kZooHeader << "\n";
  os << "config " << hex64(config_hash) << "\n";
  for (const auto& e : entries) {
    os << "entry " << e.model_path << " " << (e.trojan ? "trojan" : "clean") << " " << e.seed
       << " " << e.asr << " " << e.accuracy << " " << e.tag << " ";
    if (e.trigger_tokens.empty()) {
      os << "-";
    } else {
      for (size_t i = 0; i < e.trigger_tokens.size(); ++i)
        os << (i ? "+" : "") << e.trigger_tokens[i];
    }
    os << "\n";
  }
  if (!os) throw IoError("manifest write failed: " + path);
}

ZooManifest ZooManifest::load(const std::string& path) {
  auto lines = read_lines(path, kZooHeader);
  ZooManifest m;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    if (tok[0] == "config") {
      if (tok.size() != 2) throw IoError(path + ": bad config line");
      m.config_hash = std::stoull(tok[1], nullptr, 16);
    } else if (tok[0] == "entry") {
      if (tok.size() != 8) throw IoError(path + ": bad entry line");
      ZooEntry e;
      e.model_path = tok[1];
      if (tok[2] != "trojan" && tok[2] != "clean")
        throw IoError(path + ": bad ground truth " + tok[2]);
      e.trojan = tok[2] == "trojan";
      e.seed = std::stoull(tok[3]);
      e.asr = std::stod(tok[4]);
      e.accuracy = std::stod(tok[5]);
      e.tag = tok[6];
      if (tok[7] != "-") {
        std::string cur;
        for (char ch : tok[7]) {
          if (ch == '+') {
            e.trigger_tokens.push_back(cur);
            cur.clear();
          } else {
            cur += ch;
          }
        }
        e.trigger_tokens.push_back(cur);
      }
      m.entries.push_back(std::move(e));
    } else {
      throw IoError(path + ": unknown manifest line '" + tok[0] + "'");
    }
  }
  return m;
}

std::string ScoreSummary::render() const {
  std::ostringstream os;
  os << "tminer-score " << kVersionTag << "\n";
  os << "total " << total << " fn " << fn << " fp " << fp << " accuracy " << accuracy << "\n";
  for (const auto& [len, values] : retrieval) {
    int hits = 0;
    for (int v : values)
      if (v >= 1) ++hits;
    os << "retrieval len " << len << " models " << values.size() << " with_token " << hits
       << " max_overlap";
    for (int v : values) os << " " << v;
    os << "\n";
  }
  return os.str();
}

}  // namespace tminer::report
