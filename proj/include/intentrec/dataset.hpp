#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace intentrec {

struct RawEvent {
  std::string session_id;
  std::string item_id;
  long long timestamp = 0;
  std::string attribute_id;  // empty when the item has no attribute record
};

enum class Split { train, test };

// One training or test instance: an interaction prefix and its next item.
struct Session {
  std::vector<int> items;  // catalog indices
  int label = -1;          // catalog index of the next item
  std::string session_id;
  Split split = Split::train;
};

struct Catalog {
  std::vector<std::string> item_ids;       // catalog index -> external id
  std::vector<long long> frequency;        // occurrences in the training split
  std::vector<bool> is_head;               // Pareto split over frequency
  std::vector<int> attribute_of;           // item index -> attribute index
  std::vector<std::string> attribute_ids;  // attribute index -> external id

  int n_items() const { return static_cast<int>(item_ids.size()); }
  int n_attributes() const { return static_cast<int>(attribute_ids.size()); }
  int n_tail_items() const;
};

struct Dataset {
  Catalog catalog;
  std::vector<Session> sessions;
  std::string meta;  // provenance record, JSON text
};

// CSV with header `session_id,timestamp,item_id`. Malformed rows are
// reported with their line number, never skipped.
std::vector<RawEvent> load_sessions(const std::string& path);

// CSV with header `item_id,attribute_id`; the first occurrence of an item
// wins, making attributes a partition downstream.
std::map<std::string, std::string> load_attributes(const std::string& path);

struct PreprocessOptions {
  int min_item_freq = 5;
  int min_session_len = 2;
  double test_fraction = 0.1;
  int min_prefix_len = 1;  // augmentation also emits the length-1 prefix
};

Dataset preprocess(const std::vector<RawEvent>& events,
                   const std::map<std::string, std::string>& attributes,
                   const PreprocessOptions& opt = {});

// Session splitting: [s1..sn] -> ([s1],s2), ([s1,s2],s3), ..., ([s1..sn-1],sn).
std::vector<Session> augment_split(const std::vector<int>& items, const std::string& session_id,
                                   Split split, int min_prefix_len = 1);

// Exactly ceil(pareto*m) head items, ties broken by ascending item index.
std::vector<bool> split_head_tail(const std::vector<long long>& frequencies, double pareto);

struct SynthConfig {
  int n_items = 1000;
  int n_sessions = 10000;
  int n_latent_intents = 8;
  double zipf_exponent = 1.2;
  double noise_rate = 0.2;
  double mean_len = 5.0;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

// Items are partitioned into latent groups (one attribute per group);
// each session samples Zipf-weighted items from one group, with cross-group
// replacements at noise_rate, and a label from the same group. Sessions come
// out as ready (prefix, label) instances ordered by time; the last
// test_fraction of them form the test split.
Dataset generate_synthetic(const SynthConfig& cfg);

// Full training interaction sequences reconstructed from the augmented
// instances (longest prefix plus its label per session id, train split only).
// Co-occurrence counting uses these to avoid prefix multiplicity.
std::vector<std::vector<int>> raw_train_sequences(const Dataset& ds);

std::string catalog_json(const Dataset& ds);
std::string sessions_jsonl(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace intentrec
