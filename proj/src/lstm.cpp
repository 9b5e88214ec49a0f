#include "mtrnn/lstm.hpp"

namespace mtrnn {

LstmParams LstmParams::init(const std::string& prefix, int d, int e,
                            Rng& rng) {
  auto u = [&](const char* n, int rows, int cols, int rank = 2) {
    return Parameter::uniform(prefix + "." + n, rows, cols, rng, -0.1, 0.1,
                              rank);
  };
  LstmParams p;
  p.W_i = u("W_i", d, e);
  p.W_f = u("W_f", d, e);
  p.W_o = u("W_o", d, e);
  p.W_c = u("W_c", d, e);
  p.U_i = u("U_i", d, d);
  p.U_f = u("U_f", d, d);
  p.U_o = u("U_o", d, d);
  p.U_c = u("U_c", d, d);
  p.v_i = u("v_i", d, 1, 1);
  p.v_f = u("v_f", d, 1, 1);
  p.v_o = u("v_o", d, 1, 1);
  p.b_i = Parameter::zeros(prefix + ".b_i", d, 1, 1);
  p.b_f = Parameter::constant(prefix + ".b_f", d, 1, 1.0, 1);
  p.b_o = Parameter::zeros(prefix + ".b_o", d, 1, 1);
  p.b_c = Parameter::zeros(prefix + ".b_c", d, 1, 1);
  p.d = d;
  p.e = e;
  return p;
}

std::vector<Parameter*> LstmParams::all() {
  return {&W_i, &W_f, &W_o, &W_c, &U_i, &U_f, &U_o, &U_c,
          &v_i, &v_f, &v_o, &b_i, &b_f, &b_o, &b_c};
}

Var lstm_candidate(Tape& t, LstmParams& p, Var x, Var h_prev) {
  return tanh(t, add(t, add(t, matmul(t, t.use(p.W_c), x),
                            matmul(t, t.use(p.U_c), h_prev)),
                     t.use(p.b_c)));
}

namespace {

// sigma(W x + U h + v . c_peek + b)
Var gate(Tape& t, Parameter& W, Parameter& U, Parameter& v, Parameter& b,
         Var x, Var h_prev, Var c_peek) {
  Var pre = add(t, add(t, matmul(t, t.use(W), x), matmul(t, t.use(U), h_prev)),
                add(t, mul(t, t.use(v), c_peek), t.use(b)));
  return sigmoid(t, pre);
}

}  // namespace

LstmStep lstm_step_with_candidate(Tape& t, LstmParams& p, Var x,
                                  const LstmState& prev, Var candidate) {
  Var i = gate(t, p.W_i, p.U_i, p.v_i, p.b_i, x, prev.h, prev.c);
  Var f = gate(t, p.W_f, p.U_f, p.v_f, p.b_f, x, prev.h, prev.c);
  Var c = add(t, mul(t, f, prev.c), mul(t, i, candidate));
  Var o = gate(t, p.W_o, p.U_o, p.v_o, p.b_o, x, prev.h, c);
  Var h = mul(t, o, tanh(t, c));
  return LstmStep{LstmState{h, c}, i, f, o, candidate};
}

LstmState lstm_step(Tape& t, LstmParams& p, Var x, const LstmState& prev) {
  return lstm_step_with_candidate(t, p, x, prev,
                                  lstm_candidate(t, p, x, prev.h))
      .state;
}

Encoding encode_sequence(Tape& t, LstmParams& p, const std::vector<Var>& xs) {
  if (xs.empty()) throw InputError("encode_sequence: empty sequence");
  Encoding enc;
  LstmState s = zero_state(t, p.d);
  enc.hidden.reserve(xs.size());
  for (Var x : xs) {
    s = lstm_step(t, p, x, s);
    enc.hidden.push_back(s.h);
  }
  enc.final = s;
  return enc;
}

std::vector<Var> encode_bidirectional(Tape& t, LstmParams& fwd,
                                      LstmParams& bwd,
                                      const std::vector<Var>& xs) {
  if (xs.empty()) throw InputError("encode_bidirectional: empty sequence");
  if (fwd.d != bwd.d)
    throw DimensionError("encode_bidirectional: hidden sizes disagree, " +
                         std::to_string(fwd.d) + " vs " +
                         std::to_string(bwd.d));
  Encoding f = encode_sequence(t, fwd, xs);
  std::vector<Var> reversed(xs.rbegin(), xs.rend());
  Encoding b = encode_sequence(t, bwd, reversed);
  std::size_t n = xs.size();
  std::vector<Var> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(concat(t, f.hidden[i], b.hidden[n - 1 - i]));
  return out;
}

EmbeddingTable EmbeddingTable::init(const std::string& name, int vocab_size,
                                    int dim, Rng& rng) {
  if (vocab_size < 1 || dim < 1)
    throw ContractError("embedding table: vocab_size and dim must be >= 1");
  Parameter p =
      Parameter::uniform(name, vocab_size, dim, rng, -0.1, 0.1);
  p.value.row(0).setZero();
  EmbeddingTable e;
  e.table = std::move(p);
  return e;
}

std::vector<Var> embed(Tape& t, EmbeddingTable& table,
                       const std::vector<int>& ids) {
  std::vector<Var> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(t.lookup(table.table, id, table.trainable));
  return out;
}

}  // namespace mtrnn
