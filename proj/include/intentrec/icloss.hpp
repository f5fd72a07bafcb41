#pragma once

#include <cstdint>
#include <vector>

#include "intentrec/intent.hpp"
#include "intentrec/tape.hpp"

namespace intentrec {

struct LossConfig {
  double sigma = 0.14;    // temperature
  double eta = 0.2;       // variance threshold
  double lambda_p = 0.3;  // penalty scale
  double epsilon = 0.2;   // multi-task scale
  bool detach_penalty = false;
  void validate() const;
};

// Variance of the euclidean distances from the session embedding to the
// target-intent member embeddings. Diagnostic / oracle role; training uses
// the centroid-distance surrogate.
double longtail_variance(const std::vector<double>& session,
                         const std::vector<std::vector<double>>& members);

// d(S, c^u), the O(d) training surrogate.
double target_alignment(const std::vector<double>& session, const std::vector<double>& target);

struct NoiseStats {
  double mean = 0.0;
  double variance = 0.0;
  bool skip = false;  // empty noise set
};
NoiseStats noise_stats(const std::vector<double>& session,
                       const std::vector<std::vector<double>>& noise);

// p^u = clamp(variance - eta, 0, 1).
double variance_penalty(double variance, double eta);

// L = L_p + epsilon * L_c.
double total_loss(double lp, double lc, double epsilon);

// Sum over noise intents of ||S - c^u||^2 - ||S - c^v||^2 + 2. Verification
// oracle only, never trained on.
double triplet_surrogate(const std::vector<double>& session, const std::vector<double>& target,
                         const std::vector<std::vector<double>>& noise);

struct ICLossBatchResult {
  Tape::Id loss = -1;  // scalar node: sum over the batch
  double value = 0.0;
  std::vector<double> per_session;
  std::vector<double> penalty;  // p^u, in [0,1]
  std::vector<Tape::Id> target_cos;              // diagnostics for gradient tests
  std::vector<std::vector<Tape::Id>> noise_cos;
  double noise_distance_mean = 0.0;
  double noise_distance_variance = 0.0;
  int skipped_sessions = 0;
};

// Session and intent nodes must already be l2-normalized (unit norm within
// 1e-6, checked). Sessions with empty noise sets contribute 0. intent_nodes
// is indexed by hybrid intent id; only referenced entries need to be valid.
ICLossBatchResult icloss_batch(Tape& tape, const std::vector<Tape::Id>& session_nodes,
                               const IntentAssignment& assignment,
                               const std::vector<Tape::Id>& intent_nodes, const LossConfig& cfg);

double pearson(const std::vector<double>& a, const std::vector<double>& b);
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Builds an antipodally symmetric point cloud around a centroid, checks that
// the finite-difference gradient of the distance-variance objective vanishes
// there, then descends on the centroid distance and checks that the variance
// tracks it (Pearson correlation along the trajectory).
struct Theorem1Report {
  std::uint64_t seed = 0;
  int n_points = 0;
  int dim = 0;
  double gradient_norm = 0.0;
  double pearson_corr = 0.0;
  bool pass = false;
};
Theorem1Report verify_theorem1(std::uint64_t seed, int n_points, int dim, double grad_tol = 1e-6,
                               double pearson_min = 0.9);

// Samples unit (S, c^u, {c^v}) instances whose dot products sit close
// together, then rank-correlates the dot-product log-ratio loss against the
// triplet surrogate. The wide-spread correlation is reported, not asserted.
struct Theorem2Report {
  std::uint64_t seed = 0;
  int trials = 0;
  double spearman_small = 0.0;
  double spearman_wide = 0.0;
  bool pass = false;
};
Theorem2Report verify_theorem2(std::uint64_t seed, int trials, double spearman_min = 0.95);

}  // namespace intentrec
