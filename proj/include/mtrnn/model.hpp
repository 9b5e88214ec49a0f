#ifndef MTRNN_MODEL_HPP
#define MTRNN_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mtrnn/lstm.hpp"

namespace mtrnn {

/// The single-task baseline and the three sharing schemes: one LSTM over
/// concatenated embeddings, two LSTMs with gated cross-connections, and a
/// shared bidirectional LSTM feeding gated task LSTMs.
enum class Architecture { SingleTask, UniformLayer, CoupledLayer, SharedLayer };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct TaskSpec {
  std::string name;
  int class_count = 2;
  double lambda = 1.0;  // loss weight, > 0
};

struct ModelConfig {
  Architecture architecture = Architecture::SingleTask;
  int hidden_size = 50;
  int task_embedding_size = 64;
  int shared_embedding_size = 64;
  /// The shared-layer gate g^(s->m) gets its own input matrix by default;
  /// set to reuse the task gate's input matrix instead.
  bool share_gate_input_weights = false;
  bool trainable_embeddings = true;
  std::uint64_t seed = 1;
};

struct TaskHead {
  Parameter W;  // C_m x d
  Parameter b;  // C_m x 1
};

/// Per-step activations of the shared-to-task gate g^(s->m), for export.
/// neuron_order sorts 0..d-1 descending by the last step's activation.
struct GateTrace {
  int task_id = 0;
  std::vector<std::string> tokens;
  Matrix activations;  // T x d, entries in (0,1)
  std::vector<int> neuron_order;
};

class MultiTaskModel {
 public:
  MultiTaskModel(const ModelConfig& cfg, std::vector<TaskSpec> tasks,
                 int vocab_size);

  MultiTaskModel(const MultiTaskModel&) = delete;
  MultiTaskModel& operator=(const MultiTaskModel&) = delete;
  MultiTaskModel(MultiTaskModel&&) = default;

  /// Class logits for the sequence: task head applied to the task-layer
  /// h_T. With gate_rows non-null (SharedLayer only) the g^(s->m)
  /// activations are copied out as a T x d matrix; the logits are
  /// unaffected.
  Var logits(Tape& t, int task, const std::vector<int>& tokens,
             Matrix* gate_rows = nullptr);

  /// Softmax class distribution after each prefix x_1..x_t, the
  /// per-timestep trajectory of the prediction.
  std::vector<Matrix> predict_per_timestep(int task,
                                           const std::vector<int>& tokens);

  /// SharedLayer only: run with tracing and package the gate activations.
  GateTrace trace(int task, const std::vector<int>& token_ids,
                  const std::vector<std::string>& token_strings);

  /// Every trainable tensor, in a fixed documented order (construction
  /// order): embeddings, shared encoders, task encoders, coupling, heads.
  std::vector<Parameter*> parameters();

  /// Parameters receiving gradients from every task's loss.
  std::vector<Parameter*> shared_parameters();

  /// The shared layer proper — shared embedding plus shared LSTM weights,
  /// excluding cross-connection matrices into task layers. Severing those
  /// connections makes task losses independent of exactly this set.
  std::vector<Parameter*> shared_layer_parameters();

  /// Parameters reachable only from this task's loss.
  std::vector<Parameter*> private_parameters(int task);

  // SharedLayer pre-training access.
  EmbeddingTable& shared_embedding();
  LstmParams& shared_forward();
  LstmParams& shared_backward();

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TaskSpec>& task_specs() const { return tasks_; }
  int task_count() const { return static_cast<int>(tasks_.size()); }
  int vocab_size() const;

 private:
  int check_task(int task) const;
  Var head_logits(Tape& t, int task, Var h);

  /// Task-layer hidden state after the full sequence; optionally collects
  /// every intermediate hidden state and the traced gate rows.
  Var encode(Tape& t, int task, const std::vector<int>& tokens,
             std::vector<Var>* all_hidden, Matrix* gate_rows);

  Var encode_uniform(Tape& t, int task, const std::vector<int>& tokens,
                     std::vector<Var>* all_hidden);
  Var encode_coupled(Tape& t, int task, const std::vector<int>& tokens,
                     std::vector<Var>* all_hidden);
  Var encode_shared(Tape& t, int task, const std::vector<int>& tokens,
                    std::vector<Var>* all_hidden, Matrix* gate_rows);

  ModelConfig cfg_;
  std::vector<TaskSpec> tasks_;

  std::vector<EmbeddingTable> task_emb_;  // one per task
  std::vector<LstmParams> task_lstm_;     // per task (not used by UniformLayer)
  std::vector<TaskHead> heads_;

  // UniformLayer / SharedLayer
  EmbeddingTable shared_emb_;
  LstmParams shared_lstm_;  // UniformLayer: input is task ++ shared embedding
  LstmParams shared_fwd_, shared_bwd_;  // SharedLayer bidirectional pair

  // CoupledLayer: gate input weights per target task, gate recurrent
  // weights per source task, biases per (source, target), and the
  // cross-candidate matrix U_c^(n->m) per target.
  std::vector<Parameter> c2_Wg_, c2_Ug_, c2_bg_, c2_Uc_cross_;

  // SharedLayer: task self-gate g^(m) and shared gate g^(s->m) weights,
  // plus the global U_c^(s) mixing the bidirectional state into candidates.
  std::vector<Parameter> s3_self_W_, s3_self_U_, s3_self_b_;
  std::vector<Parameter> s3_cross_W_, s3_cross_U_, s3_cross_b_;
  Parameter s3_Ucs_;
};

}  // namespace mtrnn

#endif
