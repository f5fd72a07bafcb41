// Pipeline driver: synth -> preprocess -> intents -> train -> eval -> verify.
// Option precedence is CLI flag > config file > built-in default; every
// command drops a manifest.json next to its outputs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "intentrec/dataset.hpp"
#include "intentrec/evaluator.hpp"
#include "intentrec/icloss.hpp"
#include "intentrec/intent.hpp"
#include "intentrec/io.hpp"
#include "intentrec/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace intentrec;

namespace {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config_file(const std::string& path) {
  ConfigMap out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config file not found: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + " is not key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

template <typename T>
T parse_value(const std::string& s);

template <>
int parse_value<int>(const std::string& s) { return std::stoi(s); }
template <>
double parse_value<double>(const std::string& s) { return std::stod(s); }
template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& s) { return std::stoull(s); }
template <>
std::string parse_value<std::string>(const std::string& s) { return s; }
template <>
bool parse_value<bool>(const std::string& s) { return s == "1" || s == "true" || s == "yes"; }

// flag > config file > default
template <typename T>
void resolve(T& value, const ConfigMap& cfg, const std::string& key, const CLI::Option* opt) {
  if (opt != nullptr && opt->count() > 0) return;  // flag already wrote the value
  const auto it = cfg.find(key);
  if (it != cfg.end()) value = parse_value<T>(it->second);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const ordered_json& resolved, std::uint64_t seed,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = resolved;
  ordered_json in_j = ordered_json::object();
  for (const auto& [name, path] : inputs) {
    in_j[name]["path"] = path;
    in_j[name]["hash"] = file_hash(path);
  }
  j["inputs"] = in_j;
  ordered_json out_j = ordered_json::object();
  for (const auto& name : outputs) out_j[name] = file_hash(dir + "/" + name);
  j["outputs"] = out_j;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  write_file(dir + "/manifest.json", j.dump(2) + "\n");
}

std::vector<std::pair<std::string, std::string>> dataset_inputs(const std::string& data_dir) {
  return {{"catalog", data_dir + "/catalog.json"}, {"sessions", data_dir + "/sessions.jsonl"}};
}

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "out";
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void resolve_globals(GlobalOpts& g, const ConfigMap& cfg) {
  resolve(g.seed, cfg, "seed", g.seed_opt);
  resolve(g.out, cfg, "out", g.out_opt);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intent-constrained session recommender pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value config file");
  g.seed_opt = app.add_option("--seed", g.seed, "master seed");
  g.out_opt = app.add_option("--out", g.out, "output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthConfig sc;
  CLI::Option* o_items = synth->add_option("--n-items", sc.n_items);
  CLI::Option* o_sessions = synth->add_option("--n-sessions", sc.n_sessions);
  CLI::Option* o_latent = synth->add_option("--n-latent-intents", sc.n_latent_intents);
  CLI::Option* o_zipf = synth->add_option("--zipf-exponent", sc.zipf_exponent);
  CLI::Option* o_noise = synth->add_option("--noise-rate", sc.noise_rate);
  CLI::Option* o_mean_len = synth->add_option("--mean-len", sc.mean_len);
  CLI::Option* o_tf = synth->add_option("--test-fraction", sc.test_fraction);

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "ingest raw session logs");
  std::string prep_sessions, prep_attributes;
  PreprocessOptions po;
  CLI::Option* o_psess = prep->add_option("--sessions", prep_sessions, "sessions csv");
  CLI::Option* o_pattr = prep->add_option("--attributes", prep_attributes, "attributes csv");
  CLI::Option* o_pfreq = prep->add_option("--min-item-freq", po.min_item_freq);
  CLI::Option* o_plen = prep->add_option("--min-session-len", po.min_session_len);
  CLI::Option* o_ptf = prep->add_option("--test-fraction", po.test_fraction);
  CLI::Option* o_pprefix = prep->add_option("--min-prefix-len", po.min_prefix_len);

  // intents
  auto* intents_cmd = app.add_subcommand("intents", "build hybrid intents");
  std::string in_data = "out";
  int in_n = 8, in_q = 0, in_window = 1;
  CLI::Option* o_idata = intents_cmd->add_option("--data", in_data, "dataset directory");
  CLI::Option* o_in = intents_cmd->add_option("--n", in_n, "number of hybrid intents");
  CLI::Option* o_iq = intents_cmd->add_option("--q", in_q, "spectral dimension (0 = n)");
  CLI::Option* o_iwindow = intents_cmd->add_option("--window", in_window);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a session encoder");
  std::string tr_data = "out", tr_intents = "out/intents.json", tr_mode = "attribute",
              tr_encoder = "mean_pool";
  TrainConfig tc;
  bool no_hid = false, paper_preset = false;
  CLI::Option* o_tdata = train_cmd->add_option("--data", tr_data, "dataset directory");
  CLI::Option* o_tintents = train_cmd->add_option("--intents", tr_intents, "intents.json path");
  CLI::Option* o_tmode = train_cmd->add_option("--mode", tr_mode, "attribute|attribute-free");
  CLI::Option* o_tencoder = train_cmd->add_option("--encoder", tr_encoder);
  CLI::Option* o_tbatch = train_cmd->add_option("--batch-size", tc.batch_size);
  CLI::Option* o_tlr = train_cmd->add_option("--learning-rate", tc.learning_rate);
  CLI::Option* o_twd = train_cmd->add_option("--weight-decay", tc.weight_decay);
  CLI::Option* o_tdecay = train_cmd->add_option("--lr-decay", tc.lr_decay);
  CLI::Option* o_tepochs = train_cmd->add_option("--max-epochs", tc.max_epochs);
  CLI::Option* o_tpatience = train_cmd->add_option("--patience", tc.patience);
  CLI::Option* o_td = train_cmd->add_option("--d", tc.d);
  CLI::Option* o_tn = train_cmd->add_option("--n-intents", tc.n_intents);
  CLI::Option* o_tq = train_cmd->add_option("--q", tc.q);
  CLI::Option* o_tksem = train_cmd->add_option("--k-sem", tc.k_sem);
  CLI::Option* o_teps = train_cmd->add_option("--epsilon", tc.loss.epsilon);
  CLI::Option* o_tsigma = train_cmd->add_option("--sigma", tc.loss.sigma);
  CLI::Option* o_teta = train_cmd->add_option("--eta", tc.loss.eta);
  CLI::Option* o_tlambda = train_cmd->add_option("--lambda", tc.loss.lambda_p);
  CLI::Option* o_tdetach = train_cmd->add_flag("--detach-penalty", tc.loss.detach_penalty);
  CLI::Option* o_tval = train_cmd->add_option("--val-fraction", tc.val_fraction);
  CLI::Option* o_tevalk = train_cmd->add_option("--eval-k", tc.eval_k);
  CLI::Option* o_twindow = train_cmd->add_option("--window", tc.graph_window);
  train_cmd->add_flag("--no-hid", no_hid, "disable the intent constraint loss (epsilon = 0)");
  train_cmd->add_flag("--paper-hparams", paper_preset, "full-scale hyperparameter preset");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ev_data = "out", ev_ckpt = "out/checkpoint.json";
  int ev_k = 20;
  bool ev_svg = false;
  CLI::Option* o_edata = eval_cmd->add_option("--data", ev_data, "dataset directory");
  CLI::Option* o_eckpt = eval_cmd->add_option("--checkpoint", ev_ckpt);
  CLI::Option* o_ek = eval_cmd->add_option("--k", ev_k);
  CLI::Option* o_esvg = eval_cmd->add_flag("--svg", ev_svg, "emit metrics.svg");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "numerical theorem checks");
  int v_t1_seeds = 100, v_t1_points = 100, v_t1_dim = 8, v_t2_trials = 1000;
  CLI::Option* o_vt1s = verify_cmd->add_option("--t1-seeds", v_t1_seeds);
  CLI::Option* o_vt1n = verify_cmd->add_option("--t1-points", v_t1_points);
  CLI::Option* o_vt1d = verify_cmd->add_option("--t1-dim", v_t1_dim);
  CLI::Option* o_vt2 = verify_cmd->add_option("--t2-trials", v_t2_trials);

  CLI11_PARSE(app, argc, argv);

  try {
    const ConfigMap cfg = load_config_file(g.config_path);
    resolve_globals(g, cfg);

    if (synth->parsed()) {
      resolve(sc.n_items, cfg, "synth.n_items", o_items);
      resolve(sc.n_sessions, cfg, "synth.n_sessions", o_sessions);
      resolve(sc.n_latent_intents, cfg, "synth.n_latent_intents", o_latent);
      resolve(sc.zipf_exponent, cfg, "synth.zipf_exponent", o_zipf);
      resolve(sc.noise_rate, cfg, "synth.noise_rate", o_noise);
      resolve(sc.mean_len, cfg, "synth.mean_len", o_mean_len);
      resolve(sc.test_fraction, cfg, "synth.test_fraction", o_tf);
      sc.seed = g.seed;
      const Dataset ds = generate_synthetic(sc);
      fs::create_directories(g.out);
      save_dataset(ds, g.out);
      ordered_json resolved = ordered_json::parse(ds.meta);
      write_manifest(g.out, "synth", resolved, g.seed, {}, {"catalog.json", "sessions.jsonl"});
      std::cout << "synth: " << ds.catalog.n_items() << " items, " << ds.sessions.size()
                << " instances -> " << g.out << "\n";
      return 0;
    }

    if (prep->parsed()) {
      resolve(prep_sessions, cfg, "preprocess.sessions", o_psess);
      resolve(prep_attributes, cfg, "preprocess.attributes", o_pattr);
      resolve(po.min_item_freq, cfg, "preprocess.min_item_freq", o_pfreq);
      resolve(po.min_session_len, cfg, "preprocess.min_session_len", o_plen);
      resolve(po.test_fraction, cfg, "preprocess.test_fraction", o_ptf);
      resolve(po.min_prefix_len, cfg, "preprocess.min_prefix_len", o_pprefix);
      if (prep_sessions.empty()) throw std::runtime_error("preprocess: --sessions is required");
      const auto events = load_sessions(prep_sessions);
      const auto attrs = prep_attributes.empty() ? std::map<std::string, std::string>{}
                                                 : load_attributes(prep_attributes);
      const Dataset ds = preprocess(events, attrs, po);
      fs::create_directories(g.out);
      save_dataset(ds, g.out);
      ordered_json resolved;
      resolved["sessions"] = prep_sessions;
      resolved["attributes"] = prep_attributes;
      resolved["min_item_freq"] = po.min_item_freq;
      resolved["min_session_len"] = po.min_session_len;
      resolved["test_fraction"] = po.test_fraction;
      resolved["min_prefix_len"] = po.min_prefix_len;
      std::vector<std::pair<std::string, std::string>> inputs{{"sessions", prep_sessions}};
      if (!prep_attributes.empty()) inputs.push_back({"attributes", prep_attributes});
      write_manifest(g.out, "preprocess", resolved, g.seed, inputs,
                     {"catalog.json", "sessions.jsonl"});
      std::cout << "preprocess: " << ds.catalog.n_items() << " items, " << ds.sessions.size()
                << " instances -> " << g.out << "\n";
      return 0;
    }

    if (intents_cmd->parsed()) {
      resolve(in_data, cfg, "intents.data", o_idata);
      resolve(in_n, cfg, "intents.n", o_in);
      resolve(in_q, cfg, "intents.q", o_iq);
      resolve(in_window, cfg, "intents.window", o_iwindow);
      const Dataset ds = load_dataset(in_data);
      const int k = ds.catalog.n_attributes();
      if (in_n > k)
        throw std::runtime_error("intents: --n (" + std::to_string(in_n) +
                                 ") exceeds attribute count (" + std::to_string(k) + ")");
      const auto raw = raw_train_sequences(ds);
      const auto graph = build_intent_graph(raw, ds.catalog, in_window);
      const auto assignment = spectral_cluster(graph, in_n, in_q, g.seed);
      const auto hybrid = form_hybrid_intents(assignment, build_preliminary_intents(ds.catalog));
      fs::create_directories(g.out);
      const std::string path = g.out + "/intents.json";
      save_intents(hybrid, in_q == 0 ? in_n : in_q, g.seed, path);
      ordered_json resolved;
      resolved["n"] = in_n;
      resolved["q"] = in_q;
      resolved["window"] = in_window;
      write_manifest(g.out, "intents", resolved, g.seed, dataset_inputs(in_data),
                     {"intents.json"});
      std::cout << "intents: " << hybrid.n << " hybrid intents over " << k << " attributes -> "
                << path << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (paper_preset) {
        const bool detach = tc.loss.detach_penalty;
        tc = TrainConfig::paper_hparams();
        tc.loss.detach_penalty = detach;
      }
      resolve(tr_data, cfg, "train.data", o_tdata);
      resolve(tr_intents, cfg, "train.intents", o_tintents);
      resolve(tr_mode, cfg, "train.mode", o_tmode);
      resolve(tr_encoder, cfg, "train.encoder", o_tencoder);
      resolve(tc.batch_size, cfg, "train.batch_size", o_tbatch);
      resolve(tc.learning_rate, cfg, "train.learning_rate", o_tlr);
      resolve(tc.weight_decay, cfg, "train.weight_decay", o_twd);
      resolve(tc.lr_decay, cfg, "train.lr_decay", o_tdecay);
      resolve(tc.max_epochs, cfg, "train.max_epochs", o_tepochs);
      resolve(tc.patience, cfg, "train.patience", o_tpatience);
      resolve(tc.d, cfg, "train.d", o_td);
      resolve(tc.n_intents, cfg, "train.n_intents", o_tn);
      resolve(tc.q, cfg, "train.q", o_tq);
      resolve(tc.k_sem, cfg, "train.k_sem", o_tksem);
      resolve(tc.loss.epsilon, cfg, "train.epsilon", o_teps);
      resolve(tc.loss.sigma, cfg, "train.sigma", o_tsigma);
      resolve(tc.loss.eta, cfg, "train.eta", o_teta);
      resolve(tc.loss.lambda_p, cfg, "train.lambda", o_tlambda);
      resolve(tc.loss.detach_penalty, cfg, "train.detach_penalty", o_tdetach);
      resolve(tc.val_fraction, cfg, "train.val_fraction", o_tval);
      resolve(tc.eval_k, cfg, "train.eval_k", o_tevalk);
      resolve(tc.graph_window, cfg, "train.window", o_twindow);
      tc.seed = g.seed;
      tc.mode = tr_mode == "attribute-free" || tr_mode == "attribute_free"
                    ? IntentMode::attribute_free
                    : IntentMode::attribute;
      tc.encoder = encoder_kind_from_string(tr_encoder);
      if (no_hid) tc.loss.epsilon = 0.0;

      const Dataset ds = load_dataset(tr_data);
      HybridIntentSet hybrid;
      std::vector<std::pair<std::string, std::string>> inputs = dataset_inputs(tr_data);
      if (tc.mode == IntentMode::attribute && tc.loss.epsilon > 0.0) {
        hybrid = load_intents(tr_intents, ds.catalog);
        inputs.push_back({"intents", tr_intents});
      }
      const TrainResult result = train(ds, hybrid, tc);
      fs::create_directories(g.out);
      save_checkpoint(result.model, g.out + "/checkpoint.json");
      save_history_csv(result.history, g.out + "/history.csv");
      ordered_json resolved;
      resolved["mode"] = tr_mode;
      resolved["encoder"] = tr_encoder;
      resolved["batch_size"] = tc.batch_size;
      resolved["learning_rate"] = tc.learning_rate;
      resolved["weight_decay"] = tc.weight_decay;
      resolved["lr_decay"] = tc.lr_decay;
      resolved["max_epochs"] = tc.max_epochs;
      resolved["patience"] = tc.patience;
      resolved["d"] = tc.d;
      resolved["n_intents"] = tc.n_intents;
      resolved["q"] = tc.q;
      resolved["k_sem"] = tc.k_sem;
      resolved["epsilon"] = tc.loss.epsilon;
      resolved["sigma"] = tc.loss.sigma;
      resolved["eta"] = tc.loss.eta;
      resolved["lambda"] = tc.loss.lambda_p;
      resolved["detach_penalty"] = tc.loss.detach_penalty;
      resolved["val_fraction"] = tc.val_fraction;
      resolved["eval_k"] = tc.eval_k;
      resolved["window"] = tc.graph_window;
      write_manifest(g.out, "train", resolved, g.seed, inputs,
                     {"checkpoint.json", "history.csv"});
      std::cout << "train: best epoch " << result.history.best_epoch << ", val HR@" << tc.eval_k
                << " = " << result.history.best_val_hr << " -> " << g.out << "/checkpoint.json\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      resolve(ev_data, cfg, "eval.data", o_edata);
      resolve(ev_ckpt, cfg, "eval.checkpoint", o_eckpt);
      resolve(ev_k, cfg, "eval.k", o_ek);
      resolve(ev_svg, cfg, "eval.svg", o_esvg);
      const Dataset ds = load_dataset(ev_data);
      const Model model = load_checkpoint(ev_ckpt);
      std::vector<Session> test;
      for (const auto& s : ds.sessions)
        if (s.split == Split::test) test.push_back(s);
      if (test.empty()) throw std::runtime_error("eval: dataset has no test split: " + ev_data);
      const MetricReport report = evaluate(model, test, ds.catalog, ev_k);
      ordered_json resolved;
      resolved["data"] = ev_data;
      resolved["checkpoint"] = ev_ckpt;
      resolved["k"] = ev_k;
      const std::string config_hash = fnv1a64_hex(resolved.dump());
      fs::create_directories(g.out);
      save_metrics(report, config_hash, g.out + "/metrics.json");
      std::vector<std::string> outputs{"metrics.json"};
      if (ev_svg) {
        save_metrics_svg(report, g.out + "/metrics.svg");
        outputs.push_back("metrics.svg");
      }
      write_manifest(g.out, "eval", resolved, g.seed,
                     {{"catalog", ev_data + "/catalog.json"},
                      {"sessions", ev_data + "/sessions.jsonl"},
                      {"checkpoint", ev_ckpt}},
                     outputs);
      std::cout << "eval: HR@" << ev_k << " = " << report.hr << ", MRR = " << report.mrr
                << ", tCov = " << report.tcov_tail << ", Tail = " << report.tail_share << " -> "
                << g.out << "/metrics.json\n";
      return 0;
    }

    if (verify_cmd->parsed()) {
      resolve(v_t1_seeds, cfg, "verify.t1_seeds", o_vt1s);
      resolve(v_t1_points, cfg, "verify.t1_points", o_vt1n);
      resolve(v_t1_dim, cfg, "verify.t1_dim", o_vt1d);
      resolve(v_t2_trials, cfg, "verify.t2_trials", o_vt2);

      int t1_pass = 0;
      double max_grad = 0.0, min_pearson = 1.0;
      ordered_json t1_failures = ordered_json::array();
      for (int s = 0; s < v_t1_seeds; ++s) {
        const auto r = verify_theorem1(g.seed + s, v_t1_points, v_t1_dim);
        max_grad = std::max(max_grad, r.gradient_norm);
        min_pearson = std::min(min_pearson, r.pearson_corr);
        if (r.pass)
          ++t1_pass;
        else
          t1_failures.push_back(r.seed);
      }
      const auto t2 = verify_theorem2(g.seed, v_t2_trials);

      ordered_json j;
      j["theorem1"]["pass"] = t1_pass == v_t1_seeds;
      j["theorem1"]["seeds"] = v_t1_seeds;
      j["theorem1"]["passed_seeds"] = t1_pass;
      j["theorem1"]["failed_seeds"] = t1_failures;
      j["theorem1"]["max_gradient_norm"] = max_grad;
      j["theorem1"]["min_pearson"] = min_pearson;
      j["theorem1"]["n_points"] = v_t1_points;
      j["theorem1"]["dim"] = v_t1_dim;
      j["theorem2"]["pass"] = t2.pass;
      j["theorem2"]["trials"] = t2.trials;
      j["theorem2"]["spearman_small_spread"] = t2.spearman_small;
      j["theorem2"]["spearman_wide_spread"] = t2.spearman_wide;
      j["seed"] = g.seed;
      fs::create_directories(g.out);
      write_file(g.out + "/verify_report.json", j.dump(2) + "\n");
      ordered_json resolved;
      resolved["t1_seeds"] = v_t1_seeds;
      resolved["t1_points"] = v_t1_points;
      resolved["t1_dim"] = v_t1_dim;
      resolved["t2_trials"] = v_t2_trials;
      write_manifest(g.out, "verify", resolved, g.seed, {}, {"verify_report.json"});
      std::cout << "verify: theorem1 " << t1_pass << "/" << v_t1_seeds
                << " seeds (max grad " << max_grad << ", min pearson " << min_pearson
                << "), theorem2 spearman " << t2.spearman_small << " (wide "
                << t2.spearman_wide << ")\n";
      const bool all_pass = t1_pass == v_t1_seeds && t2.pass;
      if (!all_pass) std::cerr << "verify: FAILED, see " << g.out << "/verify_report.json\n";
      return all_pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
