#include "intentrec/icloss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "intentrec/rng.hpp"

namespace intentrec {

namespace {

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

double population_variance(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mu) * (x - mu);
  return var / n;
}

void check_unit(const Tape& tape, Tape::Id id, const char* what) {
  double n2 = 0.0;
  for (double v : tape.value(id)) n2 += v * v;
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
    throw std::invalid_argument(std::string("icloss_batch: ") + what + " is not l2-normalized");
}

}  // namespace

void LossConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("LossConfig: sigma must be positive and finite");
  if (!(eta >= 0.0) || !std::isfinite(eta))
    throw std::invalid_argument("LossConfig: eta must be >= 0");
  if (!(lambda_p >= 0.0) || !std::isfinite(lambda_p))
    throw std::invalid_argument("LossConfig: lambda must be >= 0");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("LossConfig: epsilon must be >= 0");
}

double longtail_variance(const std::vector<double>& session,
                         const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw std::invalid_argument("longtail_variance: empty member set");
  std::vector<double> dist;
  dist.reserve(members.size());
  for (const auto& v : members) dist.push_back(euclid(session, v));
  return population_variance(dist);
}

double target_alignment(const std::vector<double>& session, const std::vector<double>& target) {
  return euclid(session, target);
}

NoiseStats noise_stats(const std::vector<double>& session,
                       const std::vector<std::vector<double>>& noise) {
  NoiseStats out;
  if (noise.empty()) {
    out.skip = true;
    return out;
  }
  std::vector<double> dist;
  dist.reserve(noise.size());
  for (const auto& c : noise) dist.push_back(euclid(session, c));
  double mu = 0.0;
  for (double d : dist) mu += d;
  out.mean = mu / static_cast<double>(dist.size());
  out.variance = population_variance(dist);
  return out;
}

double variance_penalty(double variance, double eta) {
  if (variance < 0.0) throw std::invalid_argument("variance_penalty: negative variance");
  return std::clamp(variance - eta, 0.0, 1.0);
}

double total_loss(double lp, double lc, double epsilon) {
  if (!std::isfinite(lp) || !std::isfinite(lc))
    throw std::invalid_argument("total_loss: non-finite input");
  return lp + epsilon * lc;
}

double triplet_surrogate(const std::vector<double>& session, const std::vector<double>& target,
                         const std::vector<std::vector<double>>& noise) {
  const double dt = sq_dist(session, target);
  double acc = 0.0;
  for (const auto& c : noise) acc += dt - sq_dist(session, c) + 2.0;
  return acc;
}

ICLossBatchResult icloss_batch(Tape& tape, const std::vector<Tape::Id>& session_nodes,
                               const IntentAssignment& assignment,
                               const std::vector<Tape::Id>& intent_nodes, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t b = session_nodes.size();
  if (assignment.target.size() != b || assignment.noise.size() != b)
    throw std::invalid_argument("icloss_batch: assignment does not match batch");

  ICLossBatchResult out;
  out.per_session.assign(b, 0.0);
  out.penalty.assign(b, 0.0);
  out.target_cos.assign(b, -1);
  out.noise_cos.resize(b);

  std::vector<Tape::Id> terms;
  std::vector<double> all_noise_dist;
  const double inv_sigma = 1.0 / cfg.sigma;

  for (std::size_t u = 0; u < b; ++u) {
    check_unit(tape, session_nodes[u], "session embedding");
    const auto& noise = assignment.noise[u];
    if (noise.empty()) {
      ++out.skipped_sessions;
      continue;
    }
    const Tape::Id target_node = intent_nodes.at(assignment.target[u]);
    check_unit(tape, target_node, "target intent embedding");
    const Tape::Id cos_t = tape.dot(session_nodes[u], target_node);
    out.target_cos[u] = cos_t;

    std::vector<Tape::Id> exps;
    std::vector<Tape::Id> dists;
    exps.reserve(noise.size());
    dists.reserve(noise.size());
    for (int v : noise) {
      const Tape::Id noise_node = intent_nodes.at(v);
      check_unit(tape, noise_node, "noise intent embedding");
      const Tape::Id cos_v = tape.dot(session_nodes[u], noise_node);
      out.noise_cos[u].push_back(cos_v);
      exps.push_back(tape.exp_(tape.scale(cos_v, inv_sigma)));
      dists.push_back(tape.distance(session_nodes[u], noise_node));
      all_noise_dist.push_back(tape.scalar(dists.back()));
    }

    const Tape::Id var = tape.variance(tape.pack(dists));
    Tape::Id penalty;
    if (cfg.detach_penalty) {
      penalty = tape.scalar_constant(variance_penalty(tape.scalar(var), cfg.eta));
    } else {
      penalty = tape.clamp(tape.add_const(var, -cfg.eta), 0.0, 1.0);
    }
    out.penalty[u] = tape.scalar(penalty);

    const Tape::Id noise_sum = tape.sum(tape.pack(exps));
    const Tape::Id denom = tape.mul(tape.add_const(tape.scale(penalty, cfg.lambda_p), 1.0), noise_sum);
    const Tape::Id term = tape.sub(tape.log_(denom), tape.scale(cos_t, inv_sigma));
    out.per_session[u] = tape.scalar(term);
    terms.push_back(term);
  }

  out.loss = terms.empty() ? tape.scalar_constant(0.0) : tape.sum(tape.pack(terms));
  out.value = tape.scalar(out.loss);
  if (!all_noise_dist.empty()) {
    double mu = 0.0;
    for (double d : all_noise_dist) mu += d;
    out.noise_distance_mean = mu / static_cast<double>(all_noise_dist.size());
    out.noise_distance_variance = population_variance(all_noise_dist);
  }
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("pearson: need two series of equal length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

namespace {

std::vector<double> random_unit(Rng& g, int dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(g);
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

Theorem1Report verify_theorem1(std::uint64_t seed, int n_points, int dim, double grad_tol,
                               double pearson_min) {
  if (n_points < 4) throw std::invalid_argument("verify_theorem1: n_points must be >= 4");
  if (dim < 2) throw std::invalid_argument("verify_theorem1: dim must be >= 2");

  Rng rng(substream(seed, 0x54483153ULL));  // "TH1S"
  std::vector<double> centroid(dim);
  for (double& x : centroid) x = normal(rng);

  // Antipodal pairs (v, 2c - v) around the centroid keep the unit-vector sum
  // at c exactly zero.
  std::vector<std::vector<double>> cloud;
  for (int p = 0; p < n_points / 2; ++p) {
    const auto dir = random_unit(rng, dim);
    const double radius = uniform(rng, 0.8, 1.2);
    std::vector<double> v(dim), w(dim);
    for (int j = 0; j < dim; ++j) {
      v[j] = centroid[j] + radius * dir[j];
      w[j] = 2.0 * centroid[j] - v[j];
    }
    cloud.push_back(std::move(v));
    cloud.push_back(std::move(w));
  }

  Theorem1Report report;
  report.seed = seed;
  report.n_points = static_cast<int>(cloud.size());
  report.dim = dim;

  // (a) central finite differences of the distance-variance objective at c.
  const double h = 1e-6;
  double grad_sq = 0.0;
  std::vector<double> probe = centroid;
  for (int j = 0; j < dim; ++j) {
    probe[j] = centroid[j] + h;
    const double up = longtail_variance(probe, cloud);
    probe[j] = centroid[j] - h;
    const double down = longtail_variance(probe, cloud);
    probe[j] = centroid[j];
    const double gj = (up - down) / (2.0 * h);
    grad_sq += gj * gj;
  }
  report.gradient_norm = std::sqrt(grad_sq);

  // (b) descend on d(S, c) and track the variance along the trajectory.
  // The start radius keeps the whole path inside the steep region of the
  // variance curve; far from the cloud the variance saturates and the
  // correlation washes out.
  const auto start_dir = random_unit(rng, dim);
  const double start_radius = 1.5;
  std::vector<double> s(dim);
  for (int j = 0; j < dim; ++j) s[j] = centroid[j] + start_radius * start_dir[j];
  const int steps = 60;
  const double alpha = start_radius / (steps + 10);
  std::vector<double> d_series, var_series;
  for (int t = 0; t <= steps; ++t) {
    const double d = euclid(s, centroid);
    d_series.push_back(d);
    var_series.push_back(longtail_variance(s, cloud));
    if (d > 1e-12) {
      for (int j = 0; j < dim; ++j) s[j] -= alpha * (s[j] - centroid[j]) / d;
    }
  }
  report.pearson_corr = pearson(d_series, var_series);
  report.pass = report.gradient_norm < grad_tol && report.pearson_corr > pearson_min;
  return report;
}

Theorem2Report verify_theorem2(std::uint64_t seed, int trials, double spearman_min) {
  if (trials < 100) throw std::invalid_argument("verify_theorem2: trials must be >= 100");

  Rng rng(substream(seed, 0x54483253ULL));  // "TH2S"
  const int dim = 16;
  const int n_noise = 8;

  // Unit vector with a prescribed dot product against s.
  auto with_dot = [&](const std::vector<double>& s, double target_dot) {
    std::vector<double> w = random_unit(rng, dim);
    double proj = 0.0;
    for (int j = 0; j < dim; ++j) proj += w[j] * s[j];
    double norm = 0.0;
    for (int j = 0; j < dim; ++j) {
      w[j] -= proj * s[j];
      norm += w[j] * w[j];
    }
    norm = std::sqrt(norm);
    const double ortho = std::sqrt(std::max(0.0, 1.0 - target_dot * target_dot));
    std::vector<double> c(dim);
    for (int j = 0; j < dim; ++j) c[j] = target_dot * s[j] + ortho * w[j] / norm;
    return c;
  };

  auto run = [&](double base_range, double offset_range) {
    std::vector<double> loss_log, loss_triplet;
    for (int t = 0; t < trials; ++t) {
      const auto s = random_unit(rng, dim);
      const double base = uniform(rng, -base_range, base_range);
      auto draw_dot = [&]() {
        return std::clamp(base + uniform(rng, -offset_range, offset_range), -0.99, 0.99);
      };
      const auto target = with_dot(s, draw_dot());
      std::vector<std::vector<double>> noise;
      for (int v = 0; v < n_noise; ++v) noise.push_back(with_dot(s, draw_dot()));

      double dot_t = 0.0;
      for (int j = 0; j < dim; ++j) dot_t += s[j] * target[j];
      double sum_exp = 0.0;
      for (const auto& c : noise) {
        double dv = 0.0;
        for (int j = 0; j < dim; ++j) dv += s[j] * c[j];
        sum_exp += std::exp(dv);
      }
      loss_log.push_back(std::log(sum_exp) - dot_t);
      loss_triplet.push_back(triplet_surrogate(s, target, noise));
    }
    return spearman(loss_log, loss_triplet);
  };

  Theorem2Report report;
  report.seed = seed;
  report.trials = trials;
  report.spearman_small = run(0.6, 0.15);  // pairwise dots within +/- 0.3
  report.spearman_wide = run(0.0, 0.99);   // pairwise dots within +/- 2
  report.pass = report.spearman_small > spearman_min;
  return report;
}

}  // namespace intentrec
