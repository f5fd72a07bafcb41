#include "intentrec/encoder.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "intentrec/rng.hpp"

namespace intentrec {

namespace {

constexpr double kInitStd = 0.1;

void fill_gaussian(Tensor& t, Rng& g) {
  for (double& x : t.value) x = kInitStd * normal(g);
}

}  // namespace

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "mean_pool" || s == "mean-pool") return EncoderKind::mean_pool;
  if (s == "gated_recurrent" || s == "gated-recurrent") return EncoderKind::gated_recurrent;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

std::string to_string(EncoderKind k) {
  return k == EncoderKind::mean_pool ? "mean_pool" : "gated_recurrent";
}

EmbeddingSpace EmbeddingSpace::init(int n_items, int d, std::uint64_t seed) {
  if (n_items < 1 || d < 1) throw std::invalid_argument("EmbeddingSpace: bad shape");
  EmbeddingSpace e;
  e.d = d;
  e.items = Tensor("item_embeddings", n_items, d);
  Rng g(seed);
  fill_gaussian(e.items, g);
  return e;
}

EncoderParams EncoderParams::init(EncoderKind kind, int d, std::uint64_t seed) {
  EncoderParams p;
  p.kind = kind;
  p.d = d;
  if (kind == EncoderKind::gated_recurrent) {
    Rng g(seed);
    for (const char* name : {"Wz", "Uz", "bz", "Wh", "Uh", "bh"}) {
      const bool bias = name[0] == 'b';
      Tensor t(name, d, bias ? 1 : d);
      fill_gaussian(t, g);
      p.tensors.push_back(std::move(t));
    }
  }
  return p;
}

Tensor& EncoderParams::tensor(const std::string& name) {
  for (Tensor& t : tensors)
    if (t.name == name) return t;
  throw std::invalid_argument("no encoder tensor named " + name);
}

Tape::Id encode_session(Tape& tape, const std::vector<int>& items, EmbeddingSpace& emb,
                        EncoderParams& params) {
  if (items.empty()) throw std::invalid_argument("encode_session: empty session");
  if (params.kind == EncoderKind::mean_pool) return tape.rows_mean(emb.items, items);

  Tensor& Wz = params.tensor("Wz");
  Tensor& Uz = params.tensor("Uz");
  Tensor& bz = params.tensor("bz");
  Tensor& Wh = params.tensor("Wh");
  Tensor& Uh = params.tensor("Uh");
  Tensor& bh = params.tensor("bh");
  Tape::Id h = tape.constant(std::vector<double>(params.d, 0.0));
  for (int idx : items) {
    const Tape::Id x = tape.row(emb.items, idx);
    const Tape::Id z =
        tape.sigmoid_(tape.add(tape.add(tape.matvec(Wz, x), tape.matvec(Uz, h)), tape.param(bz)));
    const Tape::Id cand =
        tape.tanh_(tape.add(tape.add(tape.matvec(Wh, x), tape.matvec(Uh, h)), tape.param(bh)));
    const Tape::Id keep = tape.add_const(tape.scale(z, -1.0), 1.0);
    h = tape.add(tape.mul(keep, h), tape.mul(z, cand));
  }
  return h;
}

Tape::Id score_items(Tape& tape, Tape::Id session, EmbeddingSpace& emb) {
  return tape.softmax(tape.matvec(emb.items, session));
}

Tape::Id cross_entropy(Tape& tape, Tape::Id probs, int label) {
  return tape.scale(tape.log_(tape.pick(probs, label)), -1.0);
}

std::vector<double> encode_session_value(const std::vector<int>& items, const EmbeddingSpace& emb,
                                         const EncoderParams& params) {
  if (items.empty()) throw std::invalid_argument("encode_session: empty session");
  const int d = emb.d;
  if (params.kind == EncoderKind::mean_pool) {
    std::vector<double> out(d, 0.0);
    for (int r : items) {
      const double* p = emb.items.row_ptr(r);
      for (int j = 0; j < d; ++j) out[j] += p[j];
    }
    const double inv = 1.0 / static_cast<double>(items.size());
    for (double& x : out) x *= inv;
    return out;
  }

  auto mv = [d](const Tensor& t, const std::vector<double>& x) {
    std::vector<double> y(d, 0.0);
    for (int i = 0; i < d; ++i) {
      const double* p = t.row_ptr(i);
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += p[j] * x[j];
      y[i] = acc;
    }
    return y;
  };
  const EncoderParams& cp = params;
  auto find = [&cp](const char* name) -> const Tensor& {
    for (const Tensor& t : cp.tensors)
      if (t.name == name) return t;
    throw std::invalid_argument("missing encoder tensor");
  };
  const Tensor &Wz = find("Wz"), &Uz = find("Uz"), &bz = find("bz");
  const Tensor &Wh = find("Wh"), &Uh = find("Uh"), &bh = find("bh");
  std::vector<double> h(d, 0.0);
  for (int idx : items) {
    std::vector<double> x(emb.items.row_ptr(idx), emb.items.row_ptr(idx) + d);
    std::vector<double> zx = mv(Wz, x), zh = mv(Uz, h);
    std::vector<double> cx = mv(Wh, x), ch = mv(Uh, h);
    std::vector<double> hn(d);
    for (int j = 0; j < d; ++j) {
      const double z = 1.0 / (1.0 + std::exp(-((zx[j] + zh[j]) + bz.value[j])));
      const double cand = std::tanh((cx[j] + ch[j]) + bh.value[j]);
      hn[j] = (z * -1.0 + 1.0) * h[j] + z * cand;
    }
    h = std::move(hn);
  }
  return h;
}

std::vector<double> score_items_value(const std::vector<double>& session,
                                      const EmbeddingSpace& emb) {
  const int m = emb.items.rows;
  std::vector<double> logits(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* p = emb.items.row_ptr(i);
    double acc = 0.0;
    for (int j = 0; j < emb.d; ++j) acc += p[j] * session[j];
    logits[i] = acc;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (double& v : logits) v /= denom;
  return logits;
}

double cross_entropy_value(const std::vector<double>& probs, int label) {
  return -std::log(std::max(probs.at(label), Tape::kLogFloor));
}

std::vector<double> l2_normalized(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < Tape::kNormFloor) throw std::domain_error("l2_normalize: near-zero vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

std::vector<Tensor*> Model::all_tensors() {
  std::vector<Tensor*> out{&embeddings.items};
  for (Tensor& t : encoder.tensors) out.push_back(&t);
  return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = "intentrec-checkpoint";
  j["encoder"] = to_string(model.encoder.kind);
  j["seed"] = model.seed;
  j["d"] = model.embeddings.d;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  auto dump_tensor = [&tensors](const Tensor& t) {
    nlohmann::ordered_json tj;
    tj["name"] = t.name;
    tj["rows"] = t.rows;
    tj["cols"] = t.cols;
    tj["data"] = t.value;
    tensors.push_back(std::move(tj));
  };
  dump_tensor(model.embeddings.items);
  for (const Tensor& t : model.encoder.tensors) dump_tensor(t);
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint not found: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "intentrec-checkpoint")
    throw std::runtime_error("not a checkpoint file: " + path);
  Model model;
  model.seed = j.at("seed").get<std::uint64_t>();
  model.encoder.kind = encoder_kind_from_string(j.at("encoder").get<std::string>());
  model.encoder.d = j.at("d").get<int>();
  model.embeddings.d = model.encoder.d;
  for (const auto& tj : j.at("tensors")) {
    Tensor t(tj.at("name").get<std::string>(), tj.at("rows").get<int>(), tj.at("cols").get<int>());
    t.value = tj.at("data").get<std::vector<double>>();
    if (static_cast<int>(t.value.size()) != t.size())
      throw std::runtime_error("checkpoint tensor shape mismatch: " + t.name);
    if (t.name == "item_embeddings")
      model.embeddings.items = std::move(t);
    else
      model.encoder.tensors.push_back(std::move(t));
  }
  if (model.embeddings.items.rows == 0) throw std::runtime_error("checkpoint missing embeddings");
  return model;
}

}  // namespace intentrec
