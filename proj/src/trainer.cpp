#include "intentrec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "intentrec/evaluator.hpp"
#include "intentrec/io.hpp"
#include "intentrec/rng.hpp"

namespace intentrec {

namespace {

constexpr std::uint64_t kTagEmbed = 0x454d4244ULL;
constexpr std::uint64_t kTagEncoder = 0x454e4344ULL;
constexpr std::uint64_t kTagVal = 0x56414c53ULL;
constexpr std::uint64_t kTagShuffle = 0x53485546ULL;
constexpr std::uint64_t kTagTopo = 0x544f504fULL;
constexpr std::uint64_t kTagSem = 0x53454d43ULL;

template <typename T>
void seeded_shuffle(std::vector<T>& v, Rng& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(g) * i);
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

std::uint64_t hash_intent_map(const std::vector<int>& item_to_intent) {
  std::string bytes(reinterpret_cast<const char*>(item_to_intent.data()),
                    item_to_intent.size() * sizeof(int));
  return fnv1a64(bytes);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("TrainConfig: lr_decay must be in (0,1]");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (d < 1) throw std::invalid_argument("TrainConfig: d must be >= 1");
  if (n_intents < 1) throw std::invalid_argument("TrainConfig: n_intents must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: val_fraction must be in [0,1)");
  if (eval_k < 1) throw std::invalid_argument("TrainConfig: eval_k must be >= 1");
  loss.validate();
}

TrainConfig TrainConfig::paper_hparams() {
  TrainConfig cfg;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.001;
  cfg.weight_decay = 1e-5;
  cfg.lr_decay = 0.6;
  cfg.max_epochs = 20;
  cfg.patience = 3;
  cfg.d = 100;
  cfg.n_intents = 300;
  cfg.loss.sigma = 0.14;
  cfg.loss.eta = 0.2;
  cfg.loss.lambda_p = 0.3;
  cfg.loss.epsilon = 0.2;
  return cfg;
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write history: " + path);
  out << "epoch,lp,lc,total,val_hr,seconds\n";
  out.precision(10);
  for (const EpochStats& e : history.epochs)
    out << e.epoch << ',' << e.lp_mean << ',' << e.lc_mean << ',' << e.total_mean << ','
        << e.val_hr << ',' << e.seconds << '\n';
}

void adam_step(Tensor& tensor, AdamState& state, double lr, double weight_decay, double beta1,
               double beta2, double eps) {
  const std::size_t n = tensor.value.size();
  if (tensor.grad.size() != n) throw std::invalid_argument("adam_step: grad shape mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n) throw std::invalid_argument("adam_step: state shape mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = tensor.grad[i] + weight_decay * tensor.value[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    tensor.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double hit_rate(const Model& model, const std::vector<const Session*>& sessions, int k) {
  if (sessions.empty()) return 0.0;
  double hits = 0.0;
  for (const Session* s : sessions) {
    const auto topk = recommend_topk(session_scores(model, *s), k);
    hits += hit_and_rank(topk, s->label).first;
  }
  return hits / static_cast<double>(sessions.size());
}

TrainResult train(const Dataset& ds, const HybridIntentSet& intents, const TrainConfig& cfg) {
  cfg.validate();
  const int m = ds.catalog.n_items();

  std::vector<int> train_idx;
  for (std::size_t i = 0; i < ds.sessions.size(); ++i)
    if (ds.sessions[i].split == Split::train) train_idx.push_back(static_cast<int>(i));
  if (train_idx.empty()) throw std::runtime_error("train: empty training split");

  // Seeded held-out slice of training instances for early stopping.
  {
    Rng g(substream(cfg.seed, kTagVal));
    seeded_shuffle(train_idx, g);
  }
  std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * train_idx.size());
  if (n_val == 0 && train_idx.size() >= 2 && cfg.val_fraction > 0.0) n_val = 1;
  std::vector<int> val_idx(train_idx.end() - n_val, train_idx.end());
  train_idx.resize(train_idx.size() - n_val);
  if (train_idx.empty()) throw std::runtime_error("train: no instances left after validation split");
  std::vector<const Session*> val_sessions;
  for (int i : val_idx) val_sessions.push_back(&ds.sessions[i]);
  if (val_sessions.empty()) {
    for (int i : train_idx) val_sessions.push_back(&ds.sessions[i]);
  }

  TrainResult result;
  result.val_instances = val_idx;
  result.model.seed = cfg.seed;
  result.model.embeddings = EmbeddingSpace::init(m, cfg.d, substream(cfg.seed, kTagEmbed));
  result.model.encoder = EncoderParams::init(cfg.encoder, cfg.d, substream(cfg.seed, kTagEncoder));
  Model& model = result.model;

  std::vector<AdamState> adam(model.all_tensors().size());

  // Attribute-free mode: the item-level spectral map is fixed before
  // training; semantic clusters refresh it into hybrid intents per epoch.
  HybridIntentSet epoch_intents = intents;
  std::vector<int> item_to_topo;
  int k_sem = cfg.k_sem > 0 ? cfg.k_sem : ds.catalog.n_attributes();
  if (cfg.mode == IntentMode::attribute_free) {
    k_sem = std::max(2, std::min(k_sem, m));
    const auto raw = raw_train_sequences(ds);
    const auto graph = build_item_graph(raw, m, cfg.graph_window);
    item_to_topo = spectral_cluster(graph, cfg.n_intents, cfg.q, substream(cfg.seed, kTagTopo));
  } else if (cfg.loss.epsilon > 0.0) {
    if (static_cast<int>(intents.item_to_intent.size()) != m)
      throw std::invalid_argument("train: intents do not cover the catalog");
  }

  std::vector<Tensor*> tensors = model.all_tensors();
  TrainHistory& history = result.history;
  double best_val = -1.0;
  std::vector<std::vector<double>> best_values;

  Tape tape;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, epoch);

    if (cfg.mode == IntentMode::attribute_free) {
      const auto sem = semantic_preliminary_intents(model.embeddings.items, k_sem,
                                                    substream(cfg.seed, kTagSem + epoch));
      epoch_intents = compose_semantic_hybrid(sem, k_sem, item_to_topo, cfg.n_intents);
      history.intent_map_hash.push_back(hash_intent_map(epoch_intents.item_to_intent));
      ++history.intent_refreshes;
    }

    std::vector<int> order = train_idx;
    {
      Rng g(substream(cfg.seed, kTagShuffle + epoch));
      seeded_shuffle(order, g);
    }

    double lp_sum = 0.0, lc_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      tape.clear();

      std::vector<Tape::Id> encoded;
      std::vector<Tape::Id> ce_terms;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const Session& s = ds.sessions[order[i]];
        const Tape::Id enc = encode_session(tape, s.items, model.embeddings, model.encoder);
        encoded.push_back(enc);
        ce_terms.push_back(cross_entropy(tape, score_items(tape, enc, model.embeddings), s.label));
        labels.push_back(s.label);
      }
      const Tape::Id lp = tape.sum(tape.pack(ce_terms));

      Tape::Id total = lp;
      double lc_value = 0.0;
      if (cfg.loss.epsilon > 0.0) {
        const IntentAssignment assignment = assign_intents(labels, epoch_intents);
        std::set<int> needed(assignment.target.begin(), assignment.target.end());
        std::vector<Tape::Id> intent_nodes(epoch_intents.n, -1);
        for (int c : needed)
          intent_nodes[c] = tape.l2_normalize(
              tape.rows_mean(model.embeddings.items, epoch_intents.intent_items[c]));
        std::vector<Tape::Id> session_norm;
        for (Tape::Id enc : encoded) session_norm.push_back(tape.l2_normalize(enc));
        const ICLossBatchResult ic =
            icloss_batch(tape, session_norm, assignment, intent_nodes, cfg.loss);
        lc_value = ic.value;
        total = tape.add(lp, tape.scale(ic.loss, cfg.loss.epsilon));
      }

      const double total_value = tape.scalar(total);
      if (!std::isfinite(total_value)) {
        std::ostringstream msg;
        msg << "train: non-finite loss (diverged) at epoch " << epoch << ", batch "
            << start / cfg.batch_size << ", value " << total_value;
        throw std::runtime_error(msg.str());
      }
      tape.backward(total);
      for (std::size_t t = 0; t < tensors.size(); ++t)
        adam_step(*tensors[t], adam[t], lr, cfg.weight_decay);

      lp_sum += tape.scalar(lp);
      lc_sum += lc_value;
    }

    const double val_hr = hit_rate(model, val_sessions, cfg.eval_k);
    const double n_inst = static_cast<double>(order.size());
    EpochStats stats;
    stats.epoch = epoch;
    stats.lp_mean = lp_sum / n_inst;
    stats.lc_mean = lc_sum / n_inst;
    stats.total_mean = (lp_sum + cfg.loss.epsilon * lc_sum) / n_inst;
    stats.val_hr = val_hr;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stats.lr = lr;
    history.epochs.push_back(stats);

    if (val_hr > best_val) {
      best_val = val_hr;
      history.best_epoch = epoch;
      history.best_val_hr = val_hr;
      best_values.clear();
      for (Tensor* t : tensors) best_values.push_back(t->value);
    } else if (epoch - history.best_epoch >= cfg.patience) {
      break;
    }
  }

  // The returned checkpoint is the best epoch, not the last one.
  for (std::size_t t = 0; t < tensors.size(); ++t) tensors[t]->value = best_values[t];
  return result;
}

}  // namespace intentrec
