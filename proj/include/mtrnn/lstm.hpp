#ifndef MTRNN_LSTM_HPP
#define MTRNN_LSTM_HPP

#include <string>
#include <vector>

#include "mtrnn/tape.hpp"

namespace mtrnn {

/// Peephole LSTM cell weights for hidden size d and input size e. The
/// peepholes v_* are diagonal maps stored as d-vectors; applying one is an
/// elementwise product, so off-diagonal mass never exists.
struct LstmParams {
  Parameter W_i, W_f, W_o, W_c;  // d x e
  Parameter U_i, U_f, U_o, U_c;  // d x d
  Parameter v_i, v_f, v_o;       // d x 1
  Parameter b_i, b_f, b_o, b_c;  // d x 1
  int d = 0;
  int e = 0;

  /// Uniform [-0.1, 0.1] weights; biases zero except b_f = 1 so memory is
  /// kept by default early in training.
  static LstmParams init(const std::string& prefix, int d, int e, Rng& rng);

  std::vector<Parameter*> all();
};

/// Hidden and cell state at one timestep, as tape variables. The zero
/// state is the t=0 boundary condition.
struct LstmState {
  Var h;
  Var c;
};

inline LstmState zero_state(Tape& t, int d) {
  return LstmState{t.zeros(d), t.zeros(d)};
}

/// tanh(W_c x + U_c h_prev + b_c), the cell's own candidate input.
Var lstm_candidate(Tape& t, LstmParams& p, Var x, Var h_prev);

/// Full record of one transition, gates included.
struct LstmStep {
  LstmState state;
  Var i, f, o, candidate;
};

/// One transition with a caller-supplied candidate:
///   i = sigma(W_i x + U_i h + v_i . c_prev + b_i)
///   f = sigma(W_f x + U_f h + v_f . c_prev + b_f)
///   c = f . c_prev + i . candidate
///   o = sigma(W_o x + U_o h + v_o . c + b_o)   -- peeks the NEW cell
///   h = o . tanh(c)
/// The model architectures reuse this with candidates that mix in other
/// layers' states.
LstmStep lstm_step_with_candidate(Tape& t, LstmParams& p, Var x,
                                  const LstmState& prev, Var candidate);

LstmState lstm_step(Tape& t, LstmParams& p, Var x, const LstmState& prev);

struct Encoding {
  LstmState final;
  std::vector<Var> hidden;  // h_1 .. h_T
};

/// Runs lstm_step from the zero state over xs. Throws InputError on an
/// empty sequence.
Encoding encode_sequence(Tape& t, LstmParams& p, const std::vector<Var>& xs);

/// Position t carries concat(forward hidden over x_1..x_t, backward hidden
/// over x_T..x_t); each output is 2d wide.
std::vector<Var> encode_bidirectional(Tape& t, LstmParams& fwd,
                                      LstmParams& bwd,
                                      const std::vector<Var>& xs);

/// Token-id rows of a V x e matrix. Row 0 is the reserved padding/unknown
/// id and starts as zeros; the remaining rows start uniform [-0.1, 0.1].
struct EmbeddingTable {
  Parameter table;
  bool trainable = true;

  static EmbeddingTable init(const std::string& name, int vocab_size, int dim,
                             Rng& rng);

  int vocab_size() const { return static_cast<int>(table.value.rows()); }
  int dim() const { return static_cast<int>(table.value.cols()); }
};

std::vector<Var> embed(Tape& t, EmbeddingTable& table,
                       const std::vector<int>& ids);

}  // namespace mtrnn

#endif
