#include "intentrec/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace intentrec {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Node& Tape::at(Id id) {
  require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(), "tape: bad node id");
  return nodes_[id];
}

const Tape::Node& Tape::at(Id id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(), "tape: bad node id");
  return nodes_[id];
}

void Tape::touch(Tensor* t) {
  if (std::find(touched_.begin(), touched_.end(), t) == touched_.end()) touched_.push_back(t);
}

const std::vector<double>& Tape::value(Id id) const { return at(id).val; }

double Tape::scalar(Id id) const {
  const Node& n = at(id);
  require(n.val.size() == 1, "tape: node is not a scalar");
  return n.val[0];
}

int Tape::size(Id id) const { return static_cast<int>(at(id).val.size()); }

double Tape::grad_of(Id id, int i) const {
  const Node& n = at(id);
  if (n.grad.empty()) return 0.0;
  require(i >= 0 && static_cast<std::size_t>(i) < n.grad.size(), "tape: bad grad coordinate");
  return n.grad[i];
}

void Tape::clear() {
  nodes_.clear();
  touched_.clear();
}

Tape::Id Tape::constant(std::vector<double> v) {
  Node n;
  n.op = Op::kConstant;
  n.val = std::move(v);
  return push(std::move(n));
}

Tape::Id Tape::scalar_constant(double v) { return constant({v}); }

Tape::Id Tape::row(Tensor& t, int r) {
  require(r >= 0 && r < t.rows, "row: index out of range");
  Node n;
  n.op = Op::kRow;
  n.tensor = &t;
  n.index = r;
  n.val.assign(t.row_ptr(r), t.row_ptr(r) + t.cols);
  touch(&t);
  return push(std::move(n));
}

Tape::Id Tape::rows_mean(Tensor& t, std::vector<int> rows) {
  require(!rows.empty(), "rows_mean: empty row set");
  for (int r : rows) require(r >= 0 && r < t.rows, "rows_mean: index out of range");
  Node n;
  n.op = Op::kRowsMean;
  n.tensor = &t;
  n.val.assign(t.cols, 0.0);
  for (int r : rows) {
    const double* p = t.row_ptr(r);
    for (int j = 0; j < t.cols; ++j) n.val[j] += p[j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& x : n.val) x *= inv;
  n.rows = std::move(rows);
  touch(&t);
  return push(std::move(n));
}

Tape::Id Tape::param(Tensor& t) {
  Node n;
  n.op = Op::kParam;
  n.tensor = &t;
  n.val = t.value;
  touch(&t);
  return push(std::move(n));
}

Tape::Id Tape::matvec(Tensor& t, Id x) {
  const Node& xn = at(x);
  require(static_cast<int>(xn.val.size()) == t.cols, "matvec: size mismatch");
  Node n;
  n.op = Op::kMatvec;
  n.tensor = &t;
  n.a = x;
  n.val.assign(t.rows, 0.0);
  for (int i = 0; i < t.rows; ++i) {
    const double* p = t.row_ptr(i);
    double acc = 0.0;
    for (int j = 0; j < t.cols; ++j) acc += p[j] * xn.val[j];
    n.val[i] = acc;
  }
  touch(&t);
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "add: size mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] + bn.val[i];
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "sub: size mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] - bn.val[i];
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "mul: size mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] * bn.val[i];
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.c0 = c;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] * c;
  return push(std::move(n));
}

Tape::Id Tape::add_const(Id a, double c) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kAddConst;
  n.a = a;
  n.c0 = c;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] + c;
  return push(std::move(n));
}

Tape::Id Tape::exp_(Id a) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::exp(an.val[i]);
  return push(std::move(n));
}

Tape::Id Tape::log_(Id a) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kLog;
  n.a = a;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i)
    n.val[i] = std::log(std::max(an.val[i], kLogFloor));
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::max(an.val[i], 0.0);
  return push(std::move(n));
}

Tape::Id Tape::sigmoid_(Id a) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = 1.0 / (1.0 + std::exp(-an.val[i]));
  return push(std::move(n));
}

Tape::Id Tape::tanh_(Id a) {
  const Node& an = at(a);
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::tanh(an.val[i]);
  return push(std::move(n));
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
  require(lo < hi, "clamp: lo must be < hi");
  const Node& an = at(a);
  Node n;
  n.op = Op::kClamp;
  n.a = a;
  n.c0 = lo;
  n.c1 = hi;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::clamp(an.val[i], lo, hi);
  return push(std::move(n));
}

Tape::Id Tape::sum(Id a) {
  const Node& an = at(a);
  double acc = 0.0;
  for (double x : an.val) acc += x;
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.val = {acc};
  return push(std::move(n));
}

Tape::Id Tape::mean(Id a) {
  const Node& an = at(a);
  require(!an.val.empty(), "mean: empty vector");
  double acc = 0.0;
  for (double x : an.val) acc += x;
  Node n;
  n.op = Op::kMean;
  n.a = a;
  n.val = {acc / static_cast<double>(an.val.size())};
  return push(std::move(n));
}

Tape::Id Tape::variance(Id a) {
  const Node& an = at(a);
  require(!an.val.empty(), "variance: empty vector");
  const double inv = 1.0 / static_cast<double>(an.val.size());
  double mu = 0.0;
  for (double x : an.val) mu += x;
  mu *= inv;
  double var = 0.0;
  for (double x : an.val) var += (x - mu) * (x - mu);
  var *= inv;
  Node n;
  n.op = Op::kVariance;
  n.a = a;
  n.c0 = mu;
  n.val = {var};
  return push(std::move(n));
}

Tape::Id Tape::dot(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < an.val.size(); ++i) acc += an.val[i] * bn.val[i];
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.val = {acc};
  return push(std::move(n));
}

Tape::Id Tape::cosine(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "cosine: size mismatch");
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < an.val.size(); ++i) {
    na += an.val[i] * an.val[i];
    nb += bn.val[i] * bn.val[i];
    ab += an.val[i] * bn.val[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kNormFloor || nb < kNormFloor)
    throw std::domain_error("cosine: near-zero vector");
  Node n;
  n.op = Op::kCosine;
  n.a = a;
  n.b = b;
  n.c0 = na;
  n.c1 = nb;
  n.val = {ab / (na * nb)};
  return push(std::move(n));
}

Tape::Id Tape::distance(Id a, Id b) {
  const Node &an = at(a), &bn = at(b);
  require(an.val.size() == bn.val.size(), "distance: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < an.val.size(); ++i) {
    const double diff = an.val[i] - bn.val[i];
    acc += diff * diff;
  }
  Node n;
  n.op = Op::kDistance;
  n.a = a;
  n.b = b;
  n.val = {std::sqrt(acc)};
  return push(std::move(n));
}

Tape::Id Tape::l2_normalize(Id a) {
  const Node& an = at(a);
  double norm = 0.0;
  for (double x : an.val) norm += x * x;
  norm = std::sqrt(norm);
  if (norm < kNormFloor) throw std::domain_error("l2_normalize: near-zero vector");
  Node n;
  n.op = Op::kL2Normalize;
  n.a = a;
  n.c0 = norm;
  n.val.resize(an.val.size());
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = an.val[i] / norm;
  return push(std::move(n));
}

Tape::Id Tape::softmax(Id a) {
  const Node& an = at(a);
  require(!an.val.empty(), "softmax: empty vector");
  const double mx = *std::max_element(an.val.begin(), an.val.end());
  Node n;
  n.op = Op::kSoftmax;
  n.a = a;
  n.val.resize(an.val.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < an.val.size(); ++i) {
    n.val[i] = std::exp(an.val[i] - mx);
    denom += n.val[i];
  }
  for (double& p : n.val) p /= denom;
  return push(std::move(n));
}

Tape::Id Tape::pick(Id a, int i) {
  const Node& an = at(a);
  require(i >= 0 && static_cast<std::size_t>(i) < an.val.size(), "pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.a = a;
  n.index = i;
  n.val = {an.val[i]};
  return push(std::move(n));
}

Tape::Id Tape::pack(const std::vector<Id>& scalars) {
  Node n;
  n.op = Op::kPack;
  n.val.reserve(scalars.size());
  for (Id id : scalars) {
    const Node& p = at(id);
    require(p.val.size() == 1, "pack: inputs must be scalars");
    n.val.push_back(p.val[0]);
  }
  n.parts = scalars;
  return push(std::move(n));
}

void Tape::ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

void Tape::backward(Id root) {
  Node& r = at(root);
  if (r.val.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  for (Tensor* t : touched_) t->zero_grad();
  for (Node& n : nodes_) n.grad.clear();
  r.grad.assign(1, 1.0);
  for (Id i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    propagate(n);
  }
}

void Tape::propagate(Node& n) {
  auto& g = n.grad;
  switch (n.op) {
    case Op::kConstant:
      break;
    case Op::kRow: {
      double* gp = n.tensor->grad.data() + static_cast<std::size_t>(n.index) * n.tensor->cols;
      for (int j = 0; j < n.tensor->cols; ++j) gp[j] += g[j];
      break;
    }
    case Op::kRowsMean: {
      const double inv = 1.0 / static_cast<double>(n.rows.size());
      for (int r : n.rows) {
        double* gp = n.tensor->grad.data() + static_cast<std::size_t>(r) * n.tensor->cols;
        for (int j = 0; j < n.tensor->cols; ++j) gp[j] += g[j] * inv;
      }
      break;
    }
    case Op::kParam: {
      for (std::size_t i = 0; i < g.size(); ++i) n.tensor->grad[i] += g[i];
      break;
    }
    case Op::kMatvec: {
      Node& xn = nodes_[n.a];
      ensure_grad(xn);
      Tensor& t = *n.tensor;
      for (int i = 0; i < t.rows; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* p = t.row_ptr(i);
        double* gp = t.grad.data() + static_cast<std::size_t>(i) * t.cols;
        for (int j = 0; j < t.cols; ++j) {
          gp[j] += gi * xn.val[j];
          xn.grad[j] += gi * p[j];
        }
      }
      break;
    }
    case Op::kAdd: {
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        an.grad[i] += g[i];
        bn.grad[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        an.grad[i] += g[i];
        bn.grad[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        an.grad[i] += g[i] * bn.val[i];
        bn.grad[i] += g[i] * an.val[i];
      }
      break;
    }
    case Op::kScale: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i) an.grad[i] += g[i] * n.c0;
      break;
    }
    case Op::kAddConst: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i) an.grad[i] += g[i];
      break;
    }
    case Op::kExp: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i) an.grad[i] += g[i] * n.val[i];
      break;
    }
    case Op::kLog: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        an.grad[i] += g[i] / std::max(an.val[i], kLogFloor);
      break;
    }
    case Op::kRelu: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (an.val[i] > 0.0) an.grad[i] += g[i];
      break;
    }
    case Op::kSigmoid: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        an.grad[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
      break;
    }
    case Op::kTanh: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        an.grad[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      break;
    }
    case Op::kClamp: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (an.val[i] > n.c0 && an.val[i] < n.c1) an.grad[i] += g[i];
      break;
    }
    case Op::kSum: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      for (std::size_t i = 0; i < an.grad.size(); ++i) an.grad[i] += g[0];
      break;
    }
    case Op::kMean: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      const double inv = 1.0 / static_cast<double>(an.val.size());
      for (std::size_t i = 0; i < an.grad.size(); ++i) an.grad[i] += g[0] * inv;
      break;
    }
    case Op::kVariance: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      const double inv = 2.0 / static_cast<double>(an.val.size());
      for (std::size_t i = 0; i < an.grad.size(); ++i)
        an.grad[i] += g[0] * inv * (an.val[i] - n.c0);
      break;
    }
    case Op::kDot: {
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      for (std::size_t i = 0; i < an.grad.size(); ++i) {
        an.grad[i] += g[0] * bn.val[i];
        bn.grad[i] += g[0] * an.val[i];
      }
      break;
    }
    case Op::kCosine: {
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      const double na = n.c0, nb = n.c1, c = n.val[0];
      for (std::size_t i = 0; i < an.grad.size(); ++i) {
        an.grad[i] += g[0] * (bn.val[i] / (na * nb) - c * an.val[i] / (na * na));
        bn.grad[i] += g[0] * (an.val[i] / (na * nb) - c * bn.val[i] / (nb * nb));
      }
      break;
    }
    case Op::kDistance: {
      const double d = n.val[0];
      if (d <= kNormFloor) break;  // subgradient 0 at coincident points
      Node &an = nodes_[n.a], &bn = nodes_[n.b];
      ensure_grad(an);
      ensure_grad(bn);
      for (std::size_t i = 0; i < an.grad.size(); ++i) {
        const double diff = (an.val[i] - bn.val[i]) / d;
        an.grad[i] += g[0] * diff;
        bn.grad[i] -= g[0] * diff;
      }
      break;
    }
    case Op::kL2Normalize: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      double gy = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * n.val[i];
      for (std::size_t i = 0; i < g.size(); ++i)
        an.grad[i] += (g[i] - gy * n.val[i]) / n.c0;
      break;
    }
    case Op::kSoftmax: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      double gp = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) gp += g[i] * n.val[i];
      for (std::size_t i = 0; i < g.size(); ++i)
        an.grad[i] += n.val[i] * (g[i] - gp);
      break;
    }
    case Op::kPick: {
      Node& an = nodes_[n.a];
      ensure_grad(an);
      an.grad[n.index] += g[0];
      break;
    }
    case Op::kPack: {
      for (std::size_t i = 0; i < n.parts.size(); ++i) {
        Node& p = nodes_[n.parts[i]];
        ensure_grad(p);
        p.grad[0] += g[i];
      }
      break;
    }
  }
}

}  // namespace intentrec
