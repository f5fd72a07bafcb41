#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intentrec/dataset.hpp"
#include "intentrec/tensor.hpp"

namespace intentrec {

// Weighted co-occurrence graph over preliminary intents (or items, in the
// attribute-free mode). Co-occurrence counting never creates self-edges;
// unit self-loops are added to isolated nodes in a separate pass so the
// degree matrix stays invertible.
struct IntentGraph {
  int n_nodes = 0;
  std::map<std::pair<int, int>, double> weights;  // key (i,j) with i <= j

  void add_pair(int a, int b, double w = 1.0);
  void add_self_loop(int i, double w = 1.0);
  double weight(int i, int j) const;
  std::vector<double> degree() const;
  double total_pair_weight() const;  // cross-node co-occurrence mass
  bool has_self_loop(int i) const;
};

// attribute -> items; the sets partition the catalog.
using PreliminaryIntents = std::vector<std::vector<int>>;
PreliminaryIntents build_preliminary_intents(const Catalog& catalog);

// Adjacent pairs of distinct attributes within each sequence increment the
// edge weight; `window` widens adjacency to positions up to that far apart.
IntentGraph build_intent_graph(const std::vector<std::vector<int>>& item_sequences,
                               const Catalog& catalog, int window = 1);
IntentGraph build_item_graph(const std::vector<std::vector<int>>& item_sequences, int n_items,
                             int window = 1);
IntentGraph with_isolated_self_loops(IntentGraph g);

struct SpectralDecomposition {
  Eigen::MatrixXd laplacian;
  Eigen::VectorXd eigenvalues;   // ascending, first q
  Eigen::MatrixXd eigenvectors;  // k x q, rows are node embeddings
};

// L = I - D^{-1/2} W D^{-1/2}; expects isolated nodes to carry self-loops.
Eigen::MatrixXd normalized_laplacian(const IntentGraph& g);

// First q eigenpairs of a symmetric matrix; columns orthonormal, each
// column's sign fixed so its largest-magnitude entry is positive.
SpectralDecomposition spectral_embed(const Eigen::MatrixXd& laplacian, int q);

// Unit-normalize rows before k-means so same-component rows coincide; rows
// with near-zero norm are left at zero.
Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& m);

struct KMeansOptions {
  int max_iter = 100;
  double tol = 1e-6;
};

// Seeded k-means++ with deterministic tie-breaks; empty clusters are
// re-seeded from the point farthest from its centroid, so all n clusters
// come back non-empty.
std::vector<int> kmeans(const Eigen::MatrixXd& rows, int n, std::uint64_t seed,
                        const KMeansOptions& opt = {});

// Full pipeline: self-loop pass, Laplacian, q smallest eigenvectors
// (q = n when q == 0), row normalization, k-means.
std::vector<int> spectral_cluster(const IntentGraph& g, int n, int q, std::uint64_t seed);

struct HybridIntentSet {
  int n = 0;
  std::vector<std::vector<int>> intent_attributes;
  std::vector<std::vector<int>> intent_items;
  std::vector<int> item_to_intent;
  std::vector<int> attribute_to_intent;
};

HybridIntentSet form_hybrid_intents(const std::vector<int>& assignment,
                                    const PreliminaryIntents& preliminary);

// Mean of the member item embeddings, recomputed from the live table.
std::vector<double> hybrid_intent_embedding(const std::vector<int>& intent_items,
                                            const Tensor& item_embeddings);

struct IntentAssignment {
  std::vector<int> target;               // per session in the batch
  std::vector<std::vector<int>> noise;   // per session, sorted unique
};

// Target = intent of the session's label; noise = targets of the other
// sessions in the batch, minus the session's own target.
IntentAssignment assign_intents(const std::vector<int>& batch_labels,
                                const HybridIntentSet& intents);

// Attribute-free preliminary intents: k-means over current item embeddings.
std::vector<int> semantic_preliminary_intents(const Tensor& item_embeddings, int k_sem,
                                              std::uint64_t seed);

// Compose per-epoch semantic clusters with the precomputed item-level
// spectral clusters: each semantic cluster joins the spectral cluster that
// holds the plurality of its items; empty hybrids are dropped.
HybridIntentSet compose_semantic_hybrid(const std::vector<int>& item_to_sem, int k_sem,
                                        const std::vector<int>& item_to_topo, int n_topo);

void save_intents(const HybridIntentSet& intents, int q, std::uint64_t seed,
                  const std::string& path);
HybridIntentSet load_intents(const std::string& path, const Catalog& catalog);

}  // namespace intentrec
