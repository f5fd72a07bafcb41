#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intentrec/dataset.hpp"
#include "intentrec/encoder.hpp"
#include "intentrec/icloss.hpp"
#include "intentrec/intent.hpp"

namespace intentrec {

enum class IntentMode { attribute, attribute_free };

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.001;
  double weight_decay = 1e-5;
  double lr_decay = 0.6;  // multiplied in after each epoch
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 0;
  IntentMode mode = IntentMode::attribute;
  LossConfig loss;
  int n_intents = 8;
  int q = 0;      // spectral embedding dimension; 0 -> n_intents
  int k_sem = 0;  // attribute-free semantic clusters; 0 -> attribute count
  EncoderKind encoder = EncoderKind::mean_pool;
  int d = 32;
  double val_fraction = 0.1;
  int eval_k = 20;
  int graph_window = 1;

  void validate() const;
  // Full-scale hyperparameter preset behind --paper-hparams.
  static TrainConfig paper_hparams();
};

struct EpochStats {
  int epoch = 0;
  double lp_mean = 0.0;
  double lc_mean = 0.0;
  double total_mean = 0.0;
  double val_hr = 0.0;
  double seconds = 0.0;
  double lr = 0.0;  // rate used this epoch; not part of the csv schema
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_hr = 0.0;
  std::vector<std::uint64_t> intent_map_hash;  // per epoch, attribute-free mode
  int intent_refreshes = 0;
};

void save_history_csv(const TrainHistory& history, const std::string& path);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;
};

// Standard Adam with L2 applied as a gradient addition weight_decay * param.
void adam_step(Tensor& tensor, AdamState& state, double lr, double weight_decay,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainResult {
  Model model;
  TrainHistory history;
  std::vector<int> val_instances;  // indices into dataset.sessions
};

// Multi-task loop: per batch, cross-entropy plus the intent constraint loss
// scaled by epsilon, Adam updates, step-decayed learning rate, and early
// stopping on held-out HR@K. In attribute-free mode the hybrid intents are
// refreshed from semantic clusters once per epoch; `intents` is ignored.
TrainResult train(const Dataset& ds, const HybridIntentSet& intents, const TrainConfig& cfg);

// HR@k of a frozen model over instances.
double hit_rate(const Model& model, const std::vector<const Session*>& sessions, int k);

}  // namespace intentrec
