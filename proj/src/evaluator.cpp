#include "intentrec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace intentrec {

std::vector<double> session_scores(const Model& model, const Session& session) {
  const auto s = encode_session_value(session.items, model.embeddings, model.encoder);
  const int m = model.embeddings.items.rows;
  std::vector<double> scores(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* p = model.embeddings.items.row_ptr(i);
    double acc = 0.0;
    for (int j = 0; j < model.embeddings.d; ++j) acc += p[j] * s[j];
    scores[i] = acc;
  }
  return scores;
}

std::vector<int> recommend_topk(const std::vector<double>& scores, int k) {
  const int m = static_cast<int>(scores.size());
  if (k < 1 || k > m) throw std::invalid_argument("recommend_topk: need 1 <= k <= m");
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

std::pair<int, double> hit_and_rank(const std::vector<int>& topk, int label) {
  for (std::size_t pos = 0; pos < topk.size(); ++pos)
    if (topk[pos] == label) return {1, 1.0 / static_cast<double>(pos + 1)};
  return {0, 0.0};
}

TailAccuracy tail_metrics(const std::vector<std::vector<int>>& topk, const std::vector<int>& labels,
                          const Catalog& catalog) {
  if (topk.size() != labels.size())
    throw std::invalid_argument("tail_metrics: list sizes differ");
  TailAccuracy out;
  double hits = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (catalog.is_head[labels[i]]) continue;
    ++out.tail_sessions;
    const auto [hit, rank] = hit_and_rank(topk[i], labels[i]);
    hits += hit;
    rr += rank;
  }
  if (out.tail_sessions > 0) {
    out.thr = hits / static_cast<double>(out.tail_sessions);
    out.tmrr = rr / static_cast<double>(out.tail_sessions);
  }
  return out;
}

double tail_coverage(const std::vector<std::vector<int>>& topk, const Catalog& catalog,
                     bool tail_denominator) {
  std::vector<char> seen(catalog.n_items(), 0);
  for (const auto& list : topk)
    for (int item : list)
      if (!catalog.is_head[item]) seen[item] = 1;
  long long covered = 0;
  for (char c : seen) covered += c;
  const long long denom = tail_denominator ? catalog.n_tail_items() : catalog.n_items();
  return denom == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(denom);
}

double tail_share(const std::vector<std::vector<int>>& topk, const Catalog& catalog, int k) {
  if (k < 1) throw std::invalid_argument("tail_share: k must be >= 1");
  if (topk.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& list : topk) {
    int tail = 0;
    for (int item : list)
      if (!catalog.is_head[item]) ++tail;
    acc += static_cast<double>(tail) / static_cast<double>(k);
  }
  return acc / static_cast<double>(topk.size());
}

MetricReport evaluate(const Model& model, const std::vector<Session>& test_sessions,
                      const Catalog& catalog, int k) {
  if (test_sessions.empty()) throw std::invalid_argument("evaluate: empty test split");
  MetricReport report;
  report.k = k;
  report.evaluated_sessions = static_cast<long long>(test_sessions.size());

  std::vector<std::vector<int>> topk;
  std::vector<int> labels;
  topk.reserve(test_sessions.size());
  labels.reserve(test_sessions.size());
  double hits = 0.0, rr = 0.0;
  for (const auto& s : test_sessions) {
    topk.push_back(recommend_topk(session_scores(model, s), k));
    labels.push_back(s.label);
    const auto [hit, rank] = hit_and_rank(topk.back(), s.label);
    hits += hit;
    rr += rank;
  }
  report.hr = hits / static_cast<double>(test_sessions.size());
  report.mrr = rr / static_cast<double>(test_sessions.size());

  const TailAccuracy tail = tail_metrics(topk, labels, catalog);
  report.thr = tail.thr;
  report.tmrr = tail.tmrr;
  report.tail_label_sessions = tail.tail_sessions;
  report.tcov_tail = tail_coverage(topk, catalog, true);
  report.tcov_all = tail_coverage(topk, catalog, false);
  report.tail_share = tail_share(topk, catalog, k);
  return report;
}

void save_metrics(const MetricReport& report, const std::string& config_hash,
                  const std::string& path) {
  nlohmann::ordered_json j;
  j["k"] = report.k;
  j["hr"] = report.hr;
  j["mrr"] = report.mrr;
  if (report.thr)
    j["thr"] = *report.thr;
  else
    j["thr"] = nullptr;
  if (report.tmrr)
    j["tmrr"] = *report.tmrr;
  else
    j["tmrr"] = nullptr;
  j["tcov_tail"] = report.tcov_tail;
  j["tcov_all"] = report.tcov_all;
  j["tail"] = report.tail_share;
  j["counts"]["sessions"] = report.evaluated_sessions;
  j["counts"]["tail_label_sessions"] = report.tail_label_sessions;
  j["config_hash"] = config_hash;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics: " + path);
  out << j.dump(2) << "\n";
}

void save_metrics_svg(const MetricReport& report, const std::string& path) {
  struct Bar {
    const char* name;
    double value;
    bool present;
  };
  const Bar bars[] = {
      {"HR", report.hr, true},
      {"MRR", report.mrr, true},
      {"tHR", report.thr.value_or(0.0), report.thr.has_value()},
      {"tMRR", report.tmrr.value_or(0.0), report.tmrr.has_value()},
      {"tCov", report.tcov_tail, true},
      {"Tail", report.tail_share, true},
  };
  const int width = 420, height = 260, base = 220, bar_w = 40, gap = 28;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  svg << "<text x='10' y='20' font-size='14'>metrics @K=" << report.k << "</text>\n";
  int x = 20;
  for (const Bar& b : bars) {
    const int h = static_cast<int>(b.value * 170.0);
    svg << "<rect x='" << x << "' y='" << (base - h) << "' width='" << bar_w << "' height='" << h
        << "' fill='" << (b.present ? "#4878a8" : "#cccccc") << "'/>\n";
    svg << "<text x='" << x << "' y='" << (base + 16) << "' font-size='12'>" << b.name
        << "</text>\n";
    std::ostringstream label;
    if (b.present)
      label.precision(3), label << b.value;
    else
      label << "n/a";
    svg << "<text x='" << x << "' y='" << (base - h - 6) << "' font-size='11'>" << label.str()
        << "</text>\n";
    x += bar_w + gap;
  }
  svg << "</svg>\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write svg: " + path);
  out << svg.str();
}

}  // namespace intentrec
