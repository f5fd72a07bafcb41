#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "intentrec/encoder.hpp"
#include "intentrec/rng.hpp"
#include "intentrec/tape.hpp"

using namespace intentrec;

namespace {

Tensor random_tensor(const std::string& name, int rows, int cols, std::uint64_t seed) {
  Tensor t(name, rows, cols);
  Rng g(seed);
  for (double& x : t.value) x = normal(g);
  return t;
}

}  // namespace

TEST_CASE("dot gradient: d(v.v)/dv = 2v") {
  Tensor t("v", 1, 2);
  t.value = {1.0, 2.0};
  Tape tape;
  const auto v = tape.row(t, 0);
  tape.backward(tape.dot(v, v));
  CHECK(t.grad[0] == doctest::Approx(2.0));
  CHECK(t.grad[1] == doctest::Approx(4.0));
}

TEST_CASE("constant loss has zero gradients") {
  Tensor t = random_tensor("v", 2, 3, 7);
  Tape tape;
  tape.row(t, 0);  // touched but unused by the loss
  const auto loss = tape.scalar_constant(5.0);
  tape.backward(loss);
  for (double g : t.grad) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar roots and zeroes stale gradients") {
  Tensor t = random_tensor("v", 1, 3, 3);
  Tape tape;
  const auto v = tape.row(t, 0);
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
  t.grad.assign(3, 123.0);  // stale state must not leak into fresh gradients
  tape.backward(tape.dot(v, v));
  CHECK(t.grad[0] == doctest::Approx(2.0 * t.value[0]));
}

TEST_CASE("random losses match central finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Tensor t = random_tensor("v", 3, 8, 100 + seed);
    Rng g(seed);
    auto build = [&](Tape& tape) {
      const auto a = tape.row(t, 0);
      const auto b = tape.row(t, 1);
      const auto c = tape.rows_mean(t, {0, 1, 2});
      const auto s = tape.sigmoid_(tape.mul(a, tape.tanh_(b)));
      const auto n = tape.l2_normalize(tape.add(s, c));
      const auto parts = std::vector<Tape::Id>{
          tape.dot(n, c),
          tape.cosine(a, b),
          tape.distance(a, c),
          tape.variance(tape.relu(b)),
          tape.mean(tape.exp_(tape.scale(n, 0.3))),
          tape.log_(tape.add_const(tape.sum(tape.mul(c, c)), 1.0)),
      };
      return tape.sum(tape.pack(parts));
    };
    Tape tape;
    tape.backward(build(tape));
    std::vector<double> analytic = t.grad;
    const double h = 1e-5;
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      const double keep = t.value[i];
      t.value[i] = keep + h;
      Tape up;
      const double fu = up.scalar(build(up));
      t.value[i] = keep - h;
      Tape down;
      const double fd = down.scalar(build(down));
      t.value[i] = keep;
      const double fdiff = (fu - fd) / (2.0 * h);
      CHECK(std::abs(analytic[i] - fdiff) <
            doctest::Approx(1e-6 + 1e-5 * std::max(std::abs(analytic[i]), std::abs(fdiff))));
    }
  }
}

TEST_CASE("softmax is exactly shift invariant under max subtraction") {
  // Values and shift chosen exactly representable so the stabilized
  // exponents are bitwise identical.
  Tape tape;
  const auto base = tape.softmax(tape.constant({0.5, -1.25, 3.0}));
  const auto shifted = tape.softmax(tape.constant({0.5 + 16.0, -1.25 + 16.0, 3.0 + 16.0}));
  for (int i = 0; i < 3; ++i) CHECK(tape.value(base)[i] == tape.value(shifted)[i]);

  // Random shifts stay within tight tolerance.
  Rng g(11);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(5), w(5);
    const double c = uniform(g, -40.0, 40.0);
    for (int i = 0; i < 5; ++i) {
      v[i] = normal(g);
      w[i] = v[i] + c;
    }
    Tape t2;
    const auto p = t2.softmax(t2.constant(v));
    const auto q = t2.softmax(t2.constant(w));
    for (int i = 0; i < 5; ++i)
      CHECK(t2.value(p)[i] == doctest::Approx(t2.value(q)[i]).epsilon(1e-12));
  }
}

TEST_CASE("l2_normalize: unit output, idempotence, zero-vector error") {
  Tape tape;
  const auto n = tape.l2_normalize(tape.constant({3.0, 4.0}));
  CHECK(tape.value(n)[0] == doctest::Approx(0.6));
  CHECK(tape.value(n)[1] == doctest::Approx(0.8));
  const auto again = tape.l2_normalize(n);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(tape.value(again)[i] - tape.value(n)[i]) < 1e-12);
  CHECK_THROWS_AS(tape.l2_normalize(tape.constant({0.0, 0.0})), std::domain_error);

  Rng g(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v(6);
    for (double& x : v) x = normal(g) * std::exp(normal(g));
    Tape t2;
    const auto u = t2.l2_normalize(t2.constant(v));
    double norm = 0.0;
    for (double x : t2.value(u)) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    const auto uu = t2.l2_normalize(u);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(std::abs(t2.value(uu)[i] - t2.value(u)[i]) < 1e-12);
  }
}

TEST_CASE("mean-pool encoder") {
  EmbeddingSpace emb;
  emb.d = 2;
  emb.items = Tensor("item_embeddings", 2, 2);
  emb.items.value = {1.0, 0.0, 0.0, 1.0};
  EncoderParams params = EncoderParams::init(EncoderKind::mean_pool, 2, 0);
  Tape tape;
  const auto s = encode_session(tape, {0, 1}, emb, params);
  CHECK(tape.value(s)[0] == doctest::Approx(0.5));
  CHECK(tape.value(s)[1] == doctest::Approx(0.5));
  const auto single = encode_session(tape, {1}, emb, params);
  CHECK(tape.value(single)[0] == doctest::Approx(0.0));
  CHECK(tape.value(single)[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(encode_session(tape, {}, emb, params), std::invalid_argument);
}

TEST_CASE("gated encoder with zero weights and carry-forcing bias keeps the initial state") {
  const int d = 4;
  EmbeddingSpace emb = EmbeddingSpace::init(3, d, 42);
  EncoderParams params = EncoderParams::init(EncoderKind::gated_recurrent, d, 43);
  for (Tensor& t : params.tensors) std::fill(t.value.begin(), t.value.end(), 0.0);
  for (double& b : params.tensor("bz").value) b = -40.0;  // update gate ~ 0 -> carry h0
  Tape tape;
  const auto h = encode_session(tape, {0, 1, 2}, emb, params);
  for (int j = 0; j < d; ++j) CHECK(tape.value(h)[j] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("tape and plain encoder forwards agree bitwise") {
  for (EncoderKind kind : {EncoderKind::mean_pool, EncoderKind::gated_recurrent}) {
    EmbeddingSpace emb = EmbeddingSpace::init(9, 6, 7);
    EncoderParams params = EncoderParams::init(kind, 6, 8);
    const std::vector<int> session{3, 1, 4, 1, 5};
    Tape tape;
    const auto node = encode_session(tape, session, emb, params);
    const auto plain = encode_session_value(session, emb, params);
    for (int j = 0; j < 6; ++j) CHECK(tape.value(node)[j] == plain[j]);

    const auto probs_node = score_items(tape, node, emb);
    const auto plain_probs = score_items_value(plain, emb);
    for (int i = 0; i < 9; ++i) CHECK(tape.value(probs_node)[i] == plain_probs[i]);
  }
}

TEST_CASE("score_items: hand softmax, uniform case, probabilities sum to one") {
  EmbeddingSpace emb;
  emb.d = 2;
  emb.items = Tensor("item_embeddings", 2, 2);
  emb.items.value = {1.0, 0.0, 0.0, 0.0};
  Tape tape;
  const auto s = tape.constant({1.0, 0.0});
  const auto probs = tape.value(score_items(tape, s, emb));
  const double e = std::exp(1.0);
  CHECK(probs[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-6));  // 0.7311
  CHECK(probs[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-6));  // 0.2689
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-9));

  EmbeddingSpace same;
  same.d = 2;
  same.items = Tensor("item_embeddings", 4, 2);
  for (int i = 0; i < 4; ++i) {
    same.items.at(i, 0) = 0.25;
    same.items.at(i, 1) = -1.5;
  }
  const auto uniform_probs = tape.value(score_items(tape, tape.constant({0.3, 0.7}), same));
  for (double p : uniform_probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("cross_entropy values") {
  CHECK(cross_entropy_value({0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(1.386294).epsilon(1e-5));
  CHECK(cross_entropy_value({1.0, 0.0}, 0) == doctest::Approx(0.0));
  CHECK(cross_entropy_value({0.5, 0.5}, 1) == doctest::Approx(0.693147).epsilon(1e-5));
}

TEST_CASE("embedding init is seed deterministic and finite") {
  const EmbeddingSpace a = EmbeddingSpace::init(20, 8, 99);
  const EmbeddingSpace b = EmbeddingSpace::init(20, 8, 99);
  const EmbeddingSpace c = EmbeddingSpace::init(20, 8, 100);
  CHECK(a.items.value == b.items.value);
  CHECK(a.items.value != c.items.value);
  for (double x : a.items.value) CHECK(std::isfinite(x));
}

TEST_CASE("gradient buffers mirror parameter shapes") {
  const EncoderParams p = EncoderParams::init(EncoderKind::gated_recurrent, 5, 1);
  CHECK(p.tensors.size() == 6);
  for (const Tensor& t : p.tensors) {
    CHECK(t.grad.size() == t.value.size());
    CHECK(static_cast<int>(t.value.size()) == t.rows * t.cols);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Model model;
  model.seed = 1234;
  model.embeddings = EmbeddingSpace::init(7, 5, 21);
  model.encoder = EncoderParams::init(EncoderKind::gated_recurrent, 5, 22);
  const auto path = std::filesystem::temp_directory_path() / "intentrec_ckpt_test.json";
  save_checkpoint(model, path.string());
  const Model back = load_checkpoint(path.string());
  CHECK(back.seed == model.seed);
  CHECK(back.encoder.kind == model.encoder.kind);
  CHECK(back.embeddings.items.value == model.embeddings.items.value);
  REQUIRE(back.encoder.tensors.size() == model.encoder.tensors.size());
  for (std::size_t i = 0; i < model.encoder.tensors.size(); ++i)
    CHECK(back.encoder.tensors[i].value == model.encoder.tensors[i].value);
  std::filesystem::remove(path);
}
