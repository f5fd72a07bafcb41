#include "intentrec/intent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "intentrec/rng.hpp"

namespace intentrec {

void IntentGraph::add_pair(int a, int b, double w) {
  if (a == b) throw std::invalid_argument("IntentGraph: co-occurrence self-edge");
  if (a > b) std::swap(a, b);
  weights[{a, b}] += w;
}

void IntentGraph::add_self_loop(int i, double w) { weights[{i, i}] += w; }

double IntentGraph::weight(int i, int j) const {
  if (i > j) std::swap(i, j);
  const auto it = weights.find({i, j});
  return it == weights.end() ? 0.0 : it->second;
}

std::vector<double> IntentGraph::degree() const {
  std::vector<double> d(n_nodes, 0.0);
  for (const auto& [e, w] : weights) {
    if (e.first == e.second) {
      d[e.first] += w;
    } else {
      d[e.first] += w;
      d[e.second] += w;
    }
  }
  return d;
}

double IntentGraph::total_pair_weight() const {
  double total = 0.0;
  for (const auto& [e, w] : weights)
    if (e.first != e.second) total += w;
  return total;
}

bool IntentGraph::has_self_loop(int i) const { return weights.count({i, i}) > 0; }

PreliminaryIntents build_preliminary_intents(const Catalog& catalog) {
  PreliminaryIntents out(catalog.n_attributes());
  for (int i = 0; i < catalog.n_items(); ++i) {
    const int a = catalog.attribute_of[i];
    if (a < 0 || a >= catalog.n_attributes())
      throw std::invalid_argument("build_preliminary_intents: attribute_of not total");
    out[a].push_back(i);
  }
  return out;
}

namespace {

IntentGraph build_graph(const std::vector<std::vector<int>>& sequences,
                        const std::vector<int>& node_of, int n_nodes, int window) {
  if (window < 1) throw std::invalid_argument("build graph: window must be >= 1");
  IntentGraph g;
  g.n_nodes = n_nodes;
  for (const auto& seq : sequences) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      for (int s = 1; s <= window && t + s < seq.size(); ++s) {
        const int a = node_of[seq[t]];
        const int b = node_of[seq[t + s]];
        if (a != b) g.add_pair(a, b, 1.0);
      }
    }
  }
  return g;
}

}  // namespace

IntentGraph build_intent_graph(const std::vector<std::vector<int>>& item_sequences,
                               const Catalog& catalog, int window) {
  return build_graph(item_sequences, catalog.attribute_of, catalog.n_attributes(), window);
}

IntentGraph build_item_graph(const std::vector<std::vector<int>>& item_sequences, int n_items,
                             int window) {
  std::vector<int> identity(n_items);
  std::iota(identity.begin(), identity.end(), 0);
  return build_graph(item_sequences, identity, n_items, window);
}

IntentGraph with_isolated_self_loops(IntentGraph g) {
  const auto deg = g.degree();
  for (int i = 0; i < g.n_nodes; ++i)
    if (deg[i] == 0.0) g.add_self_loop(i, 1.0);
  return g;
}

Eigen::MatrixXd normalized_laplacian(const IntentGraph& g) {
  if (g.n_nodes < 1) throw std::invalid_argument("normalized_laplacian: empty graph");
  const auto deg = g.degree();
  for (double d : deg)
    if (d <= 0.0) throw std::logic_error("normalized_laplacian: zero-degree node");
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(g.n_nodes, g.n_nodes);
  for (const auto& [e, w] : g.weights) {
    const int i = e.first, j = e.second;
    const double v = w / std::sqrt(deg[i] * deg[j]);
    L(i, j) -= v;
    if (i != j) L(j, i) -= v;
  }
  return L;
}

SpectralDecomposition spectral_embed(const Eigen::MatrixXd& laplacian, int q) {
  const int k = static_cast<int>(laplacian.rows());
  if (q < 1 || q > k) throw std::invalid_argument("spectral_embed: need 1 <= q <= k");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(laplacian);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("spectral_embed: eigendecomposition failed");
  SpectralDecomposition out;
  out.laplacian = laplacian;
  out.eigenvalues = solver.eigenvalues().head(q);
  out.eigenvectors = solver.eigenvectors().leftCols(q);
  // Fix each column's sign so its largest-magnitude entry is positive.
  for (int c = 0; c < q; ++c) {
    int arg = 0;
    double best = -1.0;
    for (int r = 0; r < k; ++r) {
      const double mag = std::abs(out.eigenvectors(r, c));
      if (mag > best) {
        best = mag;
        arg = r;
      }
    }
    if (out.eigenvectors(arg, c) < 0.0) out.eigenvectors.col(c) *= -1.0;
  }
  return out;
}

Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (int r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 1e-12) out.row(r) /= norm;
  }
  return out;
}

std::vector<int> kmeans(const Eigen::MatrixXd& rows, int n, std::uint64_t seed,
                        const KMeansOptions& opt) {
  const int k = static_cast<int>(rows.rows());
  if (n < 1) throw std::invalid_argument("kmeans: n must be >= 1");
  if (n > k) throw std::invalid_argument("kmeans: more clusters than points");
  if (opt.max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");

  Rng rng(seed);
  Eigen::MatrixXd centroids(n, rows.cols());

  // k-means++ seeding.
  centroids.row(0) = rows.row(uniform_int(rng, 0, k - 1));
  Eigen::VectorXd d2 = (rows.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < n; ++c) {
    const double total = d2.sum();
    int pick = -1;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      for (int i = 0; i < k; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = k - 1;
    } else {
      pick = c % k;  // all points coincide with chosen centroids
    }
    centroids.row(c) = rows.row(pick);
    d2 = d2.cwiseMin((rows.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(k, 0);
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    // Assignment, nearest centroid, ties to the lowest cluster index.
    for (int i = 0; i < k; ++i) {
      int best = 0;
      double best_d = (rows.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < n; ++c) {
        const double d = (rows.row(i) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }

    // Re-seed empty clusters from the point farthest from its centroid.
    std::vector<int> count(n, 0);
    for (int a : assign) ++count[a];
    for (int c = 0; c < n; ++c) {
      if (count[c] > 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < k; ++i) {
        if (count[assign[i]] <= 1) continue;  // keep donor clusters non-empty
        const double d = (rows.row(i) - centroids.row(assign[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) {
        for (int i = 0; i < k; ++i)
          if (count[assign[i]] > 1) { far = i; break; }
      }
      if (far < 0) throw std::logic_error("kmeans: cannot re-seed empty cluster");
      --count[assign[far]];
      assign[far] = c;
      ++count[c];
      centroids.row(c) = rows.row(far);
    }

    // Update step.
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(n, rows.cols());
    for (int i = 0; i < k; ++i) next.row(assign[i]) += rows.row(i);
    for (int c = 0; c < n; ++c) next.row(c) /= static_cast<double>(count[c]);
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = next;
    if (shift < opt.tol) break;
  }
  return assign;
}

std::vector<int> spectral_cluster(const IntentGraph& g, int n, int q, std::uint64_t seed) {
  if (q == 0) q = n;
  const IntentGraph graph = with_isolated_self_loops(g);
  const Eigen::MatrixXd L = normalized_laplacian(graph);
  const SpectralDecomposition dec = spectral_embed(L, q);
  return kmeans(row_normalized(dec.eigenvectors), n, seed);
}

HybridIntentSet form_hybrid_intents(const std::vector<int>& assignment,
                                    const PreliminaryIntents& preliminary) {
  if (assignment.size() != preliminary.size())
    throw std::invalid_argument("form_hybrid_intents: assignment does not cover all attributes");
  // Reindex clusters by their smallest attribute.
  std::map<int, int> cluster_index;
  for (std::size_t a = 0; a < assignment.size(); ++a) cluster_index.emplace(assignment[a], 0);
  {
    int next = 0;
    std::vector<int> order;
    std::vector<char> seen(cluster_index.size() + assignment.size(), 0);
    std::map<int, int> first_attr;
    for (std::size_t a = 0; a < assignment.size(); ++a)
      if (!first_attr.count(assignment[a])) first_attr[assignment[a]] = static_cast<int>(a);
    std::vector<std::pair<int, int>> by_first;
    for (const auto& [c, fa] : first_attr) by_first.push_back({fa, c});
    std::sort(by_first.begin(), by_first.end());
    for (const auto& [fa, c] : by_first) cluster_index[c] = next++;
  }

  HybridIntentSet out;
  out.n = static_cast<int>(cluster_index.size());
  out.intent_attributes.resize(out.n);
  out.intent_items.resize(out.n);
  out.attribute_to_intent.resize(assignment.size());
  int m = 0;
  for (const auto& items : preliminary) m += static_cast<int>(items.size());
  out.item_to_intent.assign(m, -1);
  for (std::size_t a = 0; a < assignment.size(); ++a) {
    const int intent = cluster_index.at(assignment[a]);
    out.attribute_to_intent[a] = intent;
    out.intent_attributes[intent].push_back(static_cast<int>(a));
    for (int item : preliminary[a]) {
      out.intent_items[intent].push_back(item);
      out.item_to_intent.at(item) = intent;
    }
  }
  for (auto& items : out.intent_items) std::sort(items.begin(), items.end());
  for (int v : out.item_to_intent)
    if (v < 0) throw std::logic_error("form_hybrid_intents: item_to_intent not total");
  return out;
}

std::vector<double> hybrid_intent_embedding(const std::vector<int>& intent_items,
                                            const Tensor& item_embeddings) {
  if (intent_items.empty()) throw std::invalid_argument("hybrid_intent_embedding: empty intent");
  std::vector<double> out(item_embeddings.cols, 0.0);
  for (int r : intent_items) {
    const double* p = item_embeddings.row_ptr(r);
    for (int j = 0; j < item_embeddings.cols; ++j) out[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(intent_items.size());
  for (double& x : out) x *= inv;
  return out;
}

IntentAssignment assign_intents(const std::vector<int>& batch_labels,
                                const HybridIntentSet& intents) {
  IntentAssignment out;
  const std::size_t b = batch_labels.size();
  out.target.resize(b);
  out.noise.resize(b);
  for (std::size_t u = 0; u < b; ++u) out.target[u] = intents.item_to_intent.at(batch_labels[u]);
  for (std::size_t u = 0; u < b; ++u) {
    std::set<int> noise;
    for (std::size_t v = 0; v < b; ++v)
      if (v != u) noise.insert(out.target[v]);
    noise.erase(out.target[u]);
    out.noise[u].assign(noise.begin(), noise.end());
  }
  return out;
}

std::vector<int> semantic_preliminary_intents(const Tensor& item_embeddings, int k_sem,
                                              std::uint64_t seed) {
  if (k_sem < 2) throw std::invalid_argument("semantic_preliminary_intents: k_sem must be >= 2");
  if (k_sem > item_embeddings.rows)
    throw std::invalid_argument("semantic_preliminary_intents: k_sem exceeds item count");
  Eigen::MatrixXd rows(item_embeddings.rows, item_embeddings.cols);
  for (int i = 0; i < item_embeddings.rows; ++i)
    for (int j = 0; j < item_embeddings.cols; ++j) rows(i, j) = item_embeddings.at(i, j);
  return kmeans(rows, k_sem, seed);
}

HybridIntentSet compose_semantic_hybrid(const std::vector<int>& item_to_sem, int k_sem,
                                        const std::vector<int>& item_to_topo, int n_topo) {
  if (item_to_sem.size() != item_to_topo.size())
    throw std::invalid_argument("compose_semantic_hybrid: size mismatch");
  // Each semantic cluster joins the spectral cluster holding the plurality
  // of its items (ties to the lowest cluster index).
  std::vector<std::vector<int>> votes(k_sem, std::vector<int>(n_topo, 0));
  for (std::size_t i = 0; i < item_to_sem.size(); ++i)
    ++votes[item_to_sem[i]][item_to_topo[i]];
  std::vector<int> sem_to_topo(k_sem, -1);
  for (int s = 0; s < k_sem; ++s) {
    int best = 0;
    for (int t = 1; t < n_topo; ++t)
      if (votes[s][t] > votes[s][best]) best = t;
    sem_to_topo[s] = best;
  }
  PreliminaryIntents preliminary(k_sem);
  for (std::size_t i = 0; i < item_to_sem.size(); ++i)
    preliminary[item_to_sem[i]].push_back(static_cast<int>(i));
  // Empty semantic clusters cannot occur (kmeans guarantees non-empty), and
  // form_hybrid_intents drops nothing, so every hybrid is non-empty.
  return form_hybrid_intents(sem_to_topo, preliminary);
}

void save_intents(const HybridIntentSet& intents, int q, std::uint64_t seed,
                  const std::string& path) {
  nlohmann::ordered_json j;
  j["n"] = intents.n;
  j["q"] = q;
  j["seed"] = seed;
  j["attribute_to_cluster"] = intents.attribute_to_intent;
  j["item_to_intent"] = intents.item_to_intent;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write intents: " + path);
  out << j.dump(2) << "\n";
}

HybridIntentSet load_intents(const std::string& path, const Catalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("intents file not found: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  HybridIntentSet out;
  out.n = j.at("n").get<int>();
  out.attribute_to_intent = j.at("attribute_to_cluster").get<std::vector<int>>();
  out.item_to_intent = j.at("item_to_intent").get<std::vector<int>>();
  if (static_cast<int>(out.item_to_intent.size()) != catalog.n_items())
    throw std::runtime_error("intents file does not match catalog: " + path);
  out.intent_attributes.resize(out.n);
  out.intent_items.resize(out.n);
  for (std::size_t a = 0; a < out.attribute_to_intent.size(); ++a)
    out.intent_attributes[out.attribute_to_intent[a]].push_back(static_cast<int>(a));
  for (std::size_t i = 0; i < out.item_to_intent.size(); ++i)
    out.intent_items[out.item_to_intent[i]].push_back(static_cast<int>(i));
  return out;
}

}  // namespace intentrec
