#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intentrec/tape.hpp"

namespace intentrec {

enum class EncoderKind { mean_pool, gated_recurrent };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind k);

// Item embedding table, Gaussian(0, 0.1) initialized from the seed.
struct EmbeddingSpace {
  Tensor items;
  int d = 0;
  static EmbeddingSpace init(int n_items, int d, std::uint64_t seed);
};

struct EncoderParams {
  EncoderKind kind = EncoderKind::mean_pool;
  int d = 0;
  // gated_recurrent: Wz, Uz, bz, Wh, Uh, bh (update gate + candidate state)
  std::vector<Tensor> tensors;
  static EncoderParams init(EncoderKind kind, int d, std::uint64_t seed);
  Tensor& tensor(const std::string& name);
};

// Differentiable forward passes.
Tape::Id encode_session(Tape& tape, const std::vector<int>& items, EmbeddingSpace& emb,
                        EncoderParams& params);
Tape::Id score_items(Tape& tape, Tape::Id session, EmbeddingSpace& emb);
Tape::Id cross_entropy(Tape& tape, Tape::Id probs, int label);

// Plain forward passes for evaluation; these mirror the tape ops exactly
// (same accumulation order) so tape and plain values agree bit for bit.
std::vector<double> encode_session_value(const std::vector<int>& items, const EmbeddingSpace& emb,
                                         const EncoderParams& params);
std::vector<double> score_items_value(const std::vector<double>& session,
                                      const EmbeddingSpace& emb);
double cross_entropy_value(const std::vector<double>& probs, int label);
std::vector<double> l2_normalized(const std::vector<double>& v);

struct Model {
  EmbeddingSpace embeddings;
  EncoderParams encoder;
  std::uint64_t seed = 0;
  std::vector<Tensor*> all_tensors();
};

// JSON tensor dump with shape headers; round-trips bit-exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace intentrec
