#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tminer/common.hpp"

namespace tminer::cli {

// Flat, fully-defaulted run configuration. Parsed from line-oriented
// "key = value" text with [section] headers; unknown keys are rejected so a
// typo can't silently fall back to a default.
struct RunConfig {
  // [task]
  std::string task_kind = "toy-binary";  // toy-binary | toy-3class | file
  std::string task_dataset;              // file mode: dataset path prefix
  std::string task_vocab;                // file mode: vocabulary path
  int task_classes = 2;
  int task_size = 2200;
  uint64_t task_seed = 1;

  // [classifier]
  std::string cls_arch = "lstm";  // lstm | bilstm | attention
  int cls_embed = 32;
  int cls_hidden = 32;
  int cls_dense = 16;
  int cls_heads = 2;
  int cls_epochs = 30;
  int cls_patience = 3;
  int cls_batch = 32;
  double cls_lr = 3e-3;
  double cls_dropout_keep = 1.0;

  // [attack]
  bool atk_enabled = false;
  std::string atk_mode = "standard";  // standard | multi | partial | weak
  std::string atk_trigger;            // space-separated tokens; empty = draw from vocab
  int atk_trigger_len = 1;
  int atk_source = 0;
  int atk_target = 1;
  double atk_rate = 0.10;
  std::string atk_placement = "random";  // random | location-specific
  int atk_neutral = 2;
  int atk_num_triggers = 10;
  bool atk_high_frequency = false;
  double atk_percentile = 5.0;
  double atk_adaptive_lambda = 0.0;  // >0 enables representation-penalty training
  uint64_t atk_seed = 7;

  // [generator]
  int gen_embed = 32;
  int gen_hidden = 64;
  int gen_latent = 64;
  int gen_dense = 20;
  int gen_pretrain_epochs = 10;
  int gen_train_epochs = 6;
  int gen_batch = 32;
  double gen_lr = 3e-3;
  double gen_lambda_r = 1.0;
  double gen_lambda_c = 0.5;
  double gen_lambda_div = 0.03;
  bool gen_div_sign_flip = false;
  int gen_unlabeled = 5000;
  int gen_labeled = 2000;
  int gen_extraction = 400;
  int gen_sample_len = 15;

  // [identifier]
  double id_alpha = 0.6;
  int id_filtering_set = 200;
  int id_aux = 1000;
  double id_variance = 0.95;
  bool id_strict_any_outlier = false;
  bool id_frequent_word_scan = false;
  double id_percentile = 5.0;

  // [search]
  std::string search_mode = "topk";  // greedy | topk
  int search_k = 5;

  // [zoo]
  int zoo_clean = 6;
  int zoo_trojan = 6;
  int zoo_retries = 3;
  uint64_t zoo_seed = 11;

  // [run]
  std::string out_dir = "out";
  uint64_t run_seed = 1;
  int jobs = 1;

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_text(const std::string& text);
  void apply_line(const std::string& section, const std::string& key, const std::string& value);
  void validate() const;

  std::string canonical_text() const;  // every key, fixed order
  uint64_t hash() const;
};

}  // namespace tminer::cli
