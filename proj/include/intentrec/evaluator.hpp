#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "intentrec/dataset.hpp"
#include "intentrec/encoder.hpp"

namespace intentrec {

struct MetricReport {
  int k = 20;
  double hr = 0.0;
  double mrr = 0.0;
  std::optional<double> thr;   // absent when no session has a tail label
  std::optional<double> tmrr;
  double tcov_tail = 0.0;  // |union of recommended tail items| / |V_tail|
  double tcov_all = 0.0;   // same numerator over |V|
  double tail_share = 0.0; // mean fraction of tail items per top-K list
  long long evaluated_sessions = 0;
  long long tail_label_sessions = 0;
};

// Raw dot-product scores; the ranking matches softmax probabilities.
std::vector<double> session_scores(const Model& model, const Session& session);

// Top k item indices by descending score, ties by ascending item index.
std::vector<int> recommend_topk(const std::vector<double>& scores, int k);

// (hit, reciprocal rank); rank is 1-indexed, 0 reciprocal rank on a miss.
std::pair<int, double> hit_and_rank(const std::vector<int>& topk, int label);

struct TailAccuracy {
  std::optional<double> thr;
  std::optional<double> tmrr;
  long long tail_sessions = 0;
};
TailAccuracy tail_metrics(const std::vector<std::vector<int>>& topk, const std::vector<int>& labels,
                          const Catalog& catalog);
double tail_coverage(const std::vector<std::vector<int>>& topk, const Catalog& catalog,
                     bool tail_denominator);
double tail_share(const std::vector<std::vector<int>>& topk, const Catalog& catalog, int k);

MetricReport evaluate(const Model& model, const std::vector<Session>& test_sessions,
                      const Catalog& catalog, int k);

void save_metrics(const MetricReport& report, const std::string& config_hash,
                  const std::string& path);
void save_metrics_svg(const MetricReport& report, const std::string& path);

}  // namespace intentrec
