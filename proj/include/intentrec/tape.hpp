#pragma once

#include <cstdint>
#include <vector>

#include "intentrec/tensor.hpp"

namespace intentrec {

// Reverse-mode tape over vector-valued nodes (scalars are size-1 vectors).
// Values are computed eagerly at node creation; backward() walks the tape in
// reverse creation order and accumulates into the grad buffers of every
// Tensor the tape touched, zeroing those buffers first.
class Tape {
 public:
  using Id = std::int32_t;

  // leaves
  Id constant(std::vector<double> v);
  Id scalar_constant(double v);
  Id row(Tensor& t, int r);                    // gather one row
  Id rows_mean(Tensor& t, std::vector<int> rows);  // mean of gathered rows
  Id param(Tensor& t);                         // whole tensor, flattened

  Id matvec(Tensor& t, Id x);  // y = T x

  // elementwise
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id add_const(Id a, double c);
  Id exp_(Id a);
  Id log_(Id a);  // argument floored at kLogFloor
  Id relu(Id a);
  Id sigmoid_(Id a);
  Id tanh_(Id a);
  Id clamp(Id a, double lo, double hi);  // subgradient 0 at the kinks

  // reductions and vector ops
  Id sum(Id a);
  Id mean(Id a);
  Id variance(Id a);  // population variance
  Id dot(Id a, Id b);
  Id cosine(Id a, Id b);
  Id distance(Id a, Id b);  // euclidean
  Id l2_normalize(Id a);
  Id softmax(Id a);  // max-subtraction stabilized
  Id pick(Id a, int i);
  Id pack(const std::vector<Id>& scalars);

  const std::vector<double>& value(Id id) const;
  double scalar(Id id) const;
  int size(Id id) const;
  // Adjoint of a node coordinate after backward(); 0 if nothing flowed there.
  double grad_of(Id id, int i = 0) const;

  void backward(Id root);
  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kLogFloor = 1e-12;
  static constexpr double kNormFloor = 1e-12;

 private:
  enum class Op : std::uint8_t {
    kConstant, kRow, kRowsMean, kParam, kMatvec,
    kAdd, kSub, kMul, kScale, kAddConst,
    kExp, kLog, kRelu, kSigmoid, kTanh, kClamp,
    kSum, kMean, kVariance, kDot, kCosine, kDistance,
    kL2Normalize, kSoftmax, kPick, kPack,
  };

  struct Node {
    Op op;
    Id a = -1;
    Id b = -1;
    double c0 = 0.0;  // op constant / cached forward quantity
    double c1 = 0.0;
    Tensor* tensor = nullptr;
    int index = -1;
    std::vector<int> rows;
    std::vector<Id> parts;
    std::vector<double> val;
    std::vector<double> grad;
  };

  Id push(Node n);
  Node& at(Id id);
  const Node& at(Id id) const;
  void touch(Tensor* t);
  void ensure_grad(Node& n);
  void propagate(Node& n);

  std::vector<Node> nodes_;
  std::vector<Tensor*> touched_;
};

}  // namespace intentrec
