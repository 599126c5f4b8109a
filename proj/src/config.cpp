#include "tminer/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace tminer::cli {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

long to_int(const std::string& v) {
  size_t used = 0;
  long x = std::stol(v, &used);
  if (used != v.size()) throw ConfigError("bad integer: " + v);
  return x;
}

uint64_t to_u64(const std::string& v) {
  size_t used = 0;
  uint64_t x = std::stoull(v, &used);
  if (used != v.size()) throw ConfigError("bad unsigned integer: " + v);
  return x;
}

double to_real(const std::string& v) {
  size_t used = 0;
  double x = std::stod(v, &used);
  if (used != v.size()) throw ConfigError("bad real: " + v);
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean: " + v);
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string from_real(double d) {
  std::ostringstream os;
  os << d;
  return os.str();
}

#define STR_FIELD(m) \
  {[](RunConfig& c, const std::string& v) { c.m = v; }, [](const RunConfig& c) { return c.m; }}
#define INT_FIELD(m)                                                  \
  {[](RunConfig& c, const std::string& v) { c.m = (int)to_int(v); },  \
   [](const RunConfig& c) { return std::to_string(c.m); }}
#define U64_FIELD(m)                                           \
  {[](RunConfig& c, const std::string& v) { c.m = to_u64(v); }, \
   [](const RunConfig& c) { return std::to_string(c.m); }}
#define REAL_FIELD(m)                                           \
  {[](RunConfig& c, const std::string& v) { c.m = to_real(v); }, \
   [](const RunConfig& c) { return from_real(c.m); }}
#define BOOL_FIELD(m)                                           \
  {[](RunConfig& c, const std::string& v) { c.m = to_bool(v); }, \
   [](const RunConfig& c) { return from_bool(c.m); }}

// Insertion order is the canonical serialization order.
const std::vector<std::pair<std::string, Field>>& schema() {
  static const std::vector<std::pair<std::string, Field>> s = {
      {"task.kind", STR_FIELD(task_kind)},
      {"task.dataset", STR_FIELD(task_dataset)},
      {"task.vocab", STR_FIELD(task_vocab)},
      {"task.classes", INT_FIELD(task_classes)},
      {"task.size", INT_FIELD(task_size)},
      {"task.seed", U64_FIELD(task_seed)},
      {"classifier.arch", STR_FIELD(cls_arch)},
      {"classifier.embed_dim", INT_FIELD(cls_embed)},
      {"classifier.hidden", INT_FIELD(cls_hidden)},
      {"classifier.dense", INT_FIELD(cls_dense)},
      {"classifier.heads", INT_FIELD(cls_heads)},
      {"classifier.epochs", INT_FIELD(cls_epochs)},
      {"classifier.patience", INT_FIELD(cls_patience)},
      {"classifier.batch", INT_FIELD(cls_batch)},
      {"classifier.lr", REAL_FIELD(cls_lr)},
      {"classifier.dropout_keep", REAL_FIELD(cls_dropout_keep)},
      {"attack.enabled", BOOL_FIELD(atk_enabled)},
      {"attack.mode", STR_FIELD(atk_mode)},
      {"attack.trigger", STR_FIELD(atk_trigger)},
      {"attack.trigger_len", INT_FIELD(atk_trigger_len)},
      {"attack.source", INT_FIELD(atk_source)},
      {"attack.target", INT_FIELD(atk_target)},
      {"attack.rate", REAL_FIELD(atk_rate)},
      {"attack.placement", STR_FIELD(atk_placement)},
      {"attack.neutral_class", INT_FIELD(atk_neutral)},
      {"attack.num_triggers", INT_FIELD(atk_num_triggers)},
      {"attack.high_frequency", BOOL_FIELD(atk_high_frequency)},
      {"attack.percentile", REAL_FIELD(atk_percentile)},
      {"attack.adaptive_lambda", REAL_FIELD(atk_adaptive_lambda)},
      {"attack.seed", U64_FIELD(atk_seed)},
      {"generator.embed_dim", INT_FIELD(gen_embed)},
      {"generator.hidden", INT_FIELD(gen_hidden)},
      {"generator.latent", INT_FIELD(gen_latent)},
      {"generator.dense", INT_FIELD(gen_dense)},
      {"generator.pretrain_epochs", INT_FIELD(gen_pretrain_epochs)},
      {"generator.train_epochs", INT_FIELD(gen_train_epochs)},
      {"generator.batch", INT_FIELD(gen_batch)},
      {"generator.lr", REAL_FIELD(gen_lr)},
      {"generator.lambda_r", REAL_FIELD(gen_lambda_r)},
      {"generator.lambda_c", REAL_FIELD(gen_lambda_c)},
      {"generator.lambda_div", REAL_FIELD(gen_lambda_div)},
      {"generator.div_sign_flip", BOOL_FIELD(gen_div_sign_flip)},
      {"generator.unlabeled", INT_FIELD(gen_unlabeled)},
      {"generator.labeled", INT_FIELD(gen_labeled)},
      {"generator.extraction", INT_FIELD(gen_extraction)},
      {"generator.sample_len", INT_FIELD(gen_sample_len)},
      {"identifier.alpha", REAL_FIELD(id_alpha)},
      {"identifier.filtering_set", INT_FIELD(id_filtering_set)},
      {"identifier.aux", INT_FIELD(id_aux)},
      {"identifier.variance", REAL_FIELD(id_variance)},
      {"identifier.strict_any_outlier", BOOL_FIELD(id_strict_any_outlier)},
      {"identifier.frequent_word_scan", BOOL_FIELD(id_frequent_word_scan)},
      {"identifier.percentile", REAL_FIELD(id_percentile)},
      {"search.mode", STR_FIELD(search_mode)},
      {"search.k", INT_FIELD(search_k)},
      {"zoo.clean", INT_FIELD(zoo_clean)},
      {"zoo.trojan", INT_FIELD(zoo_trojan)},
      {"zoo.retries", INT_FIELD(zoo_retries)},
      {"zoo.seed", U64_FIELD(zoo_seed)},
      {"run.out", STR_FIELD(out_dir)},
      {"run.seed", U64_FIELD(run_seed)},
      {"run.jobs", INT_FIELD(jobs)},
  };
  return s;
}

#undef STR_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

const Field& field_for(const std::string& full_key) {
  for (const auto& [key, field] : schema())
    if (key == full_key) return field;
  throw ConfigError("unknown config key: " + full_key);
}

}  // namespace

void RunConfig::apply_line(const std::string& section, const std::string& key,
                           const std::string& value) {
  field_for(section + "." + key).set(*this, value);
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key before section");
    try {
      cfg.apply_line(section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

void RunConfig::validate() const {
  auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed,
                   const char* what) {
    for (const char* a : allowed)
      if (v == a) return;
    throw ConfigError(std::string("bad ") + what + ": " + v);
  };
  one_of(task_kind, {"toy-binary", "toy-3class", "file"}, "task.kind");
  one_of(cls_arch, {"lstm", "bilstm", "attention"}, "classifier.arch");
  one_of(atk_mode, {"standard", "multi", "partial", "weak"}, "attack.mode");
  one_of(atk_placement, {"random", "location-specific"}, "attack.placement");
  one_of(search_mode, {"greedy", "topk"}, "search.mode");
  if (task_classes < 2) throw ConfigError("task.classes must be >= 2");
  if (task_kind == "toy-3class" && task_classes != 3)
    throw ConfigError("toy-3class task requires task.classes = 3");
  if (!(id_alpha > 0.0 && id_alpha < 1.0)) throw ConfigError("identifier.alpha must be in (0,1)");
  if (search_k < 1) throw ConfigError("search.k must be >= 1");
  if (!(atk_rate > 0.0 && atk_rate <= 1.0)) throw ConfigError("attack.rate must be in (0,1]");
  if (atk_trigger_len < 1 || atk_trigger_len > 4)
    throw ConfigError("attack.trigger_len must be 1-4");
  if (gen_sample_len < 1) throw ConfigError("generator.sample_len must be >= 1");
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (cls_dropout_keep <= 0.0 || cls_dropout_keep > 1.0)
    throw ConfigError("classifier.dropout_keep must be in (0,1]");
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  std::string current;
  for (const auto& [key, field] : schema()) {
    auto dot = key.find('.');
    std::string section = key.substr(0, dot);
    if (section != current) {
      os << "[" << section << "]\n";
      current = section;
    }
    os << key.substr(dot + 1) << " = " << field.get(*this) << "\n";
  }
  return os.str();
}

uint64_t RunConfig::hash() const { return fnv1a64(canonical_text()); }

}  // namespace tminer::cli
