#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mtrnn/lstm.hpp"
#include "testutil.hpp"

using namespace mtrnn;
using testutil::check_gradients;

namespace {

using testutil::Vec;
using testutil::ScalarLstm;

LstmParams zero_params(int d, int e) {
  Rng rng(0);
  LstmParams p = LstmParams::init("z", d, e, rng);
  for (Parameter* q : p.all()) q->value.setZero();
  return p;
}

Matrix colv(std::initializer_list<double> xs) {
  Matrix m(static_cast<long>(xs.size()), 1);
  int i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

std::vector<Var> random_inputs(Tape& t, Rng& rng, int e, int n,
                               double lo = -1.0, double hi = 1.0) {
  std::vector<Var> xs;
  for (int k = 0; k < n; ++k) {
    Matrix x(e, 1);
    for (int i = 0; i < e; ++i) x(i, 0) = rng.uniform(lo, hi);
    xs.push_back(t.constant(x));
  }
  return xs;
}

}  // namespace

TEST_CASE("init shapes and forget-gate bias") {
  Rng rng(1);
  LstmParams p = LstmParams::init("cell", 3, 5, rng);
  CHECK(p.W_i.value.rows() == 3);
  CHECK(p.W_i.value.cols() == 5);
  CHECK(p.U_c.value.rows() == 3);
  CHECK(p.U_c.value.cols() == 3);
  CHECK(p.v_o.value.rows() == 3);
  CHECK(p.v_o.value.cols() == 1);
  CHECK(p.b_f.value.minCoeff() == 1.0);
  CHECK(p.b_f.value.maxCoeff() == 1.0);
  CHECK(p.b_i.value.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.all().size() == 15);
  CHECK(p.W_i.value.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(p.W_i.value.cwiseAbs().maxCoeff() > 0.0);
  CHECK(p.W_i.name == "cell.W_i");
}

TEST_CASE("zero params: half-open gates, zero state") {
  LstmParams p = zero_params(2, 3);
  Tape t;
  Var x = t.constant(colv({0.3, -0.8, 1.5}));
  LstmState s0 = zero_state(t, 2);
  LstmStep step =
      lstm_step_with_candidate(t, p, x, s0, lstm_candidate(t, p, x, s0.h));
  for (int r = 0; r < 2; ++r) {
    CHECK(t.value(step.i)(r, 0) == 0.5);
    CHECK(t.value(step.f)(r, 0) == 0.5);
    CHECK(t.value(step.o)(r, 0) == 0.5);
    CHECK(t.value(step.candidate)(r, 0) == 0.0);
    CHECK(t.value(step.state.c)(r, 0) == 0.0);
    CHECK(t.value(step.state.h)(r, 0) == 0.0);
  }
}

TEST_CASE("step matches the scalar reference") {
  SUBCASE("d=2 e=1 hand-set weights") {
    Rng rng(5);
    LstmParams p = LstmParams::init("cell", 2, 1, rng);
    // overwrite a few entries with distinctive values so the test does not
    // depend only on tiny random weights
    p.W_c.value << 0.9, -1.2;
    p.U_c.value << 0.5, -0.25, 0.75, 0.1;
    p.v_o.value << -0.6, 0.8;
    ScalarLstm ref = ScalarLstm::from(p);

    Tape t;
    LstmState s = zero_state(t, 2);
    Vec h(2, 0.0), c(2, 0.0);
    for (double xv : {0.7, -1.1, 0.4}) {
      s = lstm_step(t, p, t.constant(colv({xv})), s);
      ref.step(Vec{xv}, h, c);
    }
    for (int r = 0; r < 2; ++r) {
      CHECK(t.value(s.h)(r, 0) == doctest::Approx(h[r]).epsilon(1e-12));
      CHECK(t.value(s.c)(r, 0) == doctest::Approx(c[r]).epsilon(1e-12));
    }
  }
  SUBCASE("random params, 6 steps, d=4 e=3, gates too") {
    Rng rng(17);
    LstmParams p = LstmParams::init("cell", 4, 3, rng);
    ScalarLstm ref = ScalarLstm::from(p);
    Tape t;
    LstmState s = zero_state(t, 4);
    Vec h(4, 0.0), c(4, 0.0), gi, gf, go;
    for (int step = 0; step < 6; ++step) {
      Matrix x(3, 1);
      Vec xs(3);
      for (int i = 0; i < 3; ++i) {
        xs[i] = rng.uniform(-2, 2);
        x(i, 0) = xs[i];
      }
      LstmStep d =
          lstm_step_with_candidate(t, p, t.constant(x), s,
                                   lstm_candidate(t, p, t.constant(x), s.h));
      s = d.state;
      ref.step(xs, h, c, &gi, &gf, &go);
      for (int r = 0; r < 4; ++r) {
        CHECK(t.value(s.h)(r, 0) == doctest::Approx(h[r]).epsilon(1e-12));
        CHECK(t.value(s.c)(r, 0) == doctest::Approx(c[r]).epsilon(1e-12));
        CHECK(t.value(d.i)(r, 0) == doctest::Approx(gi[r]).epsilon(1e-12));
        CHECK(t.value(d.f)(r, 0) == doctest::Approx(gf[r]).epsilon(1e-12));
        CHECK(t.value(d.o)(r, 0) == doctest::Approx(go[r]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("saturated gates preserve the cell") {
  LstmParams p = zero_params(2, 1);
  p.b_f.value.setConstant(50.0);   // f -> 1
  p.b_i.value.setConstant(-50.0);  // i -> 0
  Tape t;
  LstmState prev{t.constant(colv({0.2, -0.4})), t.constant(colv({0.7, -0.3}))};
  LstmState s = lstm_step(t, p, t.constant(colv({1.3})), prev);
  CHECK(t.value(s.c)(0, 0) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(t.value(s.c)(1, 0) == doctest::Approx(-0.3).epsilon(1e-10));
}

TEST_CASE("gate ranges on random inputs") {
  Rng rng(23);
  LstmParams p = LstmParams::init("cell", 5, 4, rng);
  Tape t;
  LstmState s = zero_state(t, 5);
  for (int step = 0; step < 10; ++step) {
    Matrix x(4, 1);
    for (int i = 0; i < 4; ++i) x(i, 0) = rng.uniform(-3, 3);
    LstmStep d = lstm_step_with_candidate(
        t, p, t.constant(x), s, lstm_candidate(t, p, t.constant(x), s.h));
    s = d.state;
    for (Var g : {d.i, d.f, d.o}) {
      CHECK(t.value(g).minCoeff() > 0.0);
      CHECK(t.value(g).maxCoeff() < 1.0);
    }
    CHECK(t.value(s.h).cwiseAbs().maxCoeff() < 1.0);
    CHECK(t.value(s.h).array().isFinite().all());
    CHECK(t.value(s.c).array().isFinite().all());
  }
}

TEST_CASE("encode_sequence") {
  Rng rng(31);
  LstmParams p = LstmParams::init("cell", 3, 2, rng);

  SUBCASE("empty input") {
    Tape t;
    std::vector<Var> xs;
    CHECK_THROWS_AS(encode_sequence(t, p, xs), InputError);
  }
  SUBCASE("length-1 equals a single step") {
    Tape t;
    Var x = t.constant(colv({0.4, -0.9}));
    Encoding enc = encode_sequence(t, p, {x});
    Tape t2;
    Var x2 = t2.constant(colv({0.4, -0.9}));
    LstmState s = lstm_step(t2, p, x2, zero_state(t2, 3));
    CHECK((t.value(enc.final.h) - t2.value(s.h)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.value(enc.final.c) - t2.value(s.c)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(enc.hidden.size() == 1);
  }
  SUBCASE("zero params give zero h_T") {
    LstmParams z = zero_params(3, 2);
    Tape t;
    Encoding enc = encode_sequence(t, z, random_inputs(t, rng, 2, 4));
    CHECK(t.value(enc.final.h).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("length-3 equals three chained steps bitwise") {
    std::vector<Matrix> xs;
    for (int k = 0; k < 3; ++k) {
      Matrix x(2, 1);
      x << rng.uniform(-1, 1), rng.uniform(-1, 1);
      xs.push_back(x);
    }
    Tape t;
    std::vector<Var> vs;
    for (auto& x : xs) vs.push_back(t.constant(x));
    Encoding enc = encode_sequence(t, p, vs);

    Tape t2;
    LstmState s = zero_state(t2, 3);
    for (auto& x : xs) s = lstm_step(t2, p, t2.constant(x), s);
    CHECK((t.value(enc.final.h) - t2.value(s.h)).cwiseAbs().maxCoeff() == 0.0);
    for (int k = 0; k < 3; ++k) CHECK(enc.hidden.size() == 3);
  }
  SUBCASE("deterministic across runs") {
    Matrix x1(2, 1), x2(2, 1);
    x1 << 0.3, 0.9;
    x2 << -1.2, 0.05;
    Tape ta;
    Encoding a = encode_sequence(ta, p, {ta.constant(x1), ta.constant(x2)});
    Tape tb;
    Encoding b = encode_sequence(tb, p, {tb.constant(x1), tb.constant(x2)});
    CHECK((ta.value(a.final.h) - tb.value(b.final.h)).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("encode_bidirectional") {
  Rng rng(41);
  LstmParams fwd = LstmParams::init("fwd", 3, 2, rng);
  LstmParams bwd = LstmParams::init("bwd", 3, 2, rng);

  SUBCASE("hidden size mismatch") {
    LstmParams other = LstmParams::init("other", 4, 2, rng);
    Tape t;
    auto xs = random_inputs(t, rng, 2, 2);
    CHECK_THROWS_AS(encode_bidirectional(t, fwd, other, xs), DimensionError);
  }
  SUBCASE("length-1: both halves are single-step outputs") {
    Tape t;
    Matrix x(2, 1);
    x << 0.8, -0.6;
    auto out = encode_bidirectional(t, fwd, bwd, {t.constant(x)});
    REQUIRE(out.size() == 1);
    REQUIRE(t.value(out[0]).rows() == 6);
    Tape t2;
    LstmState f = lstm_step(t2, fwd, t2.constant(x), zero_state(t2, 3));
    LstmState b = lstm_step(t2, bwd, t2.constant(x), zero_state(t2, 3));
    CHECK((t.value(out[0]).topRows(3) - t2.value(f.h)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(
        (t.value(out[0]).bottomRows(3) - t2.value(b.h)).cwiseAbs().maxCoeff() ==
        0.0);
  }
  SUBCASE("palindrome with shared params is mirror-symmetric") {
    Matrix a(2, 1), b(2, 1);
    a << 0.5, -0.2;
    b << -1.0, 0.7;
    Tape t;
    // sequence a b a: position 0 and position 2 swap halves
    auto out = encode_bidirectional(
        t, fwd, fwd, {t.constant(a), t.constant(b), t.constant(a)});
    REQUIRE(out.size() == 3);
    Matrix first = t.value(out[0]);
    Matrix last = t.value(out[2]);
    CHECK((first.topRows(3) - last.bottomRows(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((first.bottomRows(3) - last.topRows(3)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("length-4 matches composed unidirectional encodings") {
    std::vector<Matrix> xs;
    for (int k = 0; k < 4; ++k) {
      Matrix x(2, 1);
      x << rng.uniform(-1, 1), rng.uniform(-1, 1);
      xs.push_back(x);
    }
    Tape t;
    std::vector<Var> vs;
    for (auto& x : xs) vs.push_back(t.constant(x));
    auto out = encode_bidirectional(t, fwd, bwd, vs);

    Tape t2;
    std::vector<Var> v2, r2;
    for (auto& x : xs) v2.push_back(t2.constant(x));
    for (auto it = xs.rbegin(); it != xs.rend(); ++it)
      r2.push_back(t2.constant(*it));
    Encoding ef = encode_sequence(t2, fwd, v2);
    Encoding eb = encode_sequence(t2, bwd, r2);
    for (int k = 0; k < 4; ++k) {
      CHECK((t.value(out[k]).topRows(3) - t2.value(ef.hidden[k]))
                .cwiseAbs()
                .maxCoeff() == 0.0);
      CHECK((t.value(out[k]).bottomRows(3) - t2.value(eb.hidden[3 - k]))
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("finite differences through a 5-step sequence") {
  Rng rng(53);
  LstmParams p = LstmParams::init("cell", 3, 2, rng);
  std::vector<Matrix> xs;
  for (int k = 0; k < 5; ++k) {
    Matrix x(2, 1);
    x << rng.uniform(-1, 1), rng.uniform(-1, 1);
    xs.push_back(x);
  }
  Matrix w(1, 3);
  w << 0.8, -1.4, 0.3;
  auto build = [&](Tape& t) {
    std::vector<Var> vs;
    for (auto& x : xs) vs.push_back(t.constant(x));
    Encoding enc = encode_sequence(t, p, vs);
    // weight every timestep so gradients reach all unrolled copies
    Var acc = matmul(t, t.constant(w), enc.hidden[0]);
    for (std::size_t k = 1; k < enc.hidden.size(); ++k)
      acc = add(t, acc,
                scale(t, matmul(t, t.constant(w), enc.hidden[k]),
                      1.0 + 0.25 * static_cast<double>(k)));
    return acc;
  };
  std::vector<Parameter*> params = p.all();
  auto rep = check_gradients(
      params, [&] { Tape t; return t.value(build(t))(0, 0); },
      [&] { Tape t; t.backward(build(t)); });
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("embedding table") {
  Rng rng(61);
  EmbeddingTable tab = EmbeddingTable::init("emb", 6, 4, rng);

  SUBCASE("row 0 reserved as zeros, others in range") {
    CHECK(tab.table.value.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tab.table.value.row(1).cwiseAbs().maxCoeff() > 0.0);
    CHECK(tab.table.value.cwiseAbs().maxCoeff() <= 0.1);
    CHECK(tab.vocab_size() == 6);
    CHECK(tab.dim() == 4);
  }
  SUBCASE("embed looks up rows; id 0 is the zero vector") {
    Tape t;
    auto vs = embed(t, tab, {0, 3, 3});
    REQUIRE(vs.size() == 3);
    CHECK(t.value(vs[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.value(vs[1]) - tab.table.value.row(3).transpose())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  SUBCASE("id out of range") {
    Tape t;
    CHECK_THROWS_AS(embed(t, tab, {6}), IndexError);
  }
  SUBCASE("repeated id accumulates gradient x count") {
    Matrix w(1, 4);
    w << 1.0, -2.0, 0.5, 3.0;
    tab.table.grad.setZero();
    Tape t;
    auto vs = embed(t, tab, {2, 2, 2});
    Var loss = matmul(t, t.constant(w), vs[0]);
    loss = add(t, loss, matmul(t, t.constant(w), vs[1]));
    loss = add(t, loss, matmul(t, t.constant(w), vs[2]));
    t.backward(loss);
    for (int j = 0; j < 4; ++j)
      CHECK(tab.table.grad(2, j) == doctest::Approx(3.0 * w(0, j)));
    CHECK(tab.table.grad.row(1).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("frozen table receives no gradient") {
    tab.trainable = false;
    tab.table.grad.setZero();
    Matrix w(1, 4);
    w << 1, 1, 1, 1;
    Tape t;
    auto vs = embed(t, tab, {4});
    t.backward(matmul(t, t.constant(w), vs[0]));
    CHECK(tab.table.grad.cwiseAbs().maxCoeff() == 0.0);
  }
}
