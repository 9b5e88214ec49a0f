#include "mtrnn/model.hpp"

#include <algorithm>
#include <numeric>

namespace mtrnn {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::SingleTask: return "single";
    case Architecture::UniformLayer: return "uniform";
    case Architecture::CoupledLayer: return "coupled";
    case Architecture::SharedLayer: return "shared";
  }
  throw ContractError("architecture: unknown enum value");
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "single") return Architecture::SingleTask;
  if (s == "uniform") return Architecture::UniformLayer;
  if (s == "coupled") return Architecture::CoupledLayer;
  if (s == "shared") return Architecture::SharedLayer;
  throw ConfigError("architecture: expected one of single|uniform|coupled|shared, got \"" + s + "\"");
}

namespace {

std::string task_tag(int m) { return "task" + std::to_string(m); }

void validate(const ModelConfig& cfg, const std::vector<TaskSpec>& tasks,
              int vocab_size) {
  int m = static_cast<int>(tasks.size());
  if (m < 1) throw ConfigError("model: at least one task required");
  switch (cfg.architecture) {
    case Architecture::SingleTask:
      if (m != 1)
        throw ConfigError("model: single architecture takes exactly 1 task, got " + std::to_string(m));
      break;
    case Architecture::CoupledLayer:
      if (m != 2)
        throw ConfigError("model: coupled architecture takes exactly 2 tasks, got " + std::to_string(m));
      break;
    case Architecture::UniformLayer:
    case Architecture::SharedLayer:
      if (m < 2)
        throw ConfigError("model: " + to_string(cfg.architecture) + " architecture needs at least 2 tasks, got " + std::to_string(m));
      break;
  }
  if (cfg.hidden_size < 1 || cfg.task_embedding_size < 1 ||
      cfg.shared_embedding_size < 1)
    throw ConfigError("model: hidden and embedding sizes must be >= 1");
  if (vocab_size < 1) throw ConfigError("model: vocab_size must be >= 1");
  for (const TaskSpec& t : tasks) {
    if (t.class_count < 2)
      throw ConfigError("model: task \"" + t.name + "\" needs >= 2 classes");
    if (!(t.lambda > 0))
      throw ConfigError("model: task \"" + t.name + "\" needs lambda > 0");
  }
}

}  // namespace

MultiTaskModel::MultiTaskModel(const ModelConfig& cfg,
                               std::vector<TaskSpec> tasks, int vocab_size)
    : cfg_(cfg), tasks_(std::move(tasks)) {
  validate(cfg_, tasks_, vocab_size);
  Rng rng(cfg_.seed);
  const int d = cfg_.hidden_size;
  const int et = cfg_.task_embedding_size;
  const int es = cfg_.shared_embedding_size;
  const int M = task_count();
  const bool has_shared_emb = cfg_.architecture == Architecture::UniformLayer ||
                              cfg_.architecture == Architecture::SharedLayer;

  // Initialization draws happen in one fixed documented order so a seed
  // pins every weight: shared embedding, task embeddings, shared
  // encoder(s), task encoders, coupling weights, heads.
  if (has_shared_emb) {
    shared_emb_ = EmbeddingTable::init("emb.shared", vocab_size, es, rng);
    shared_emb_.trainable = cfg_.trainable_embeddings;
  }
  for (int m = 0; m < M; ++m) {
    task_emb_.push_back(
        EmbeddingTable::init("emb." + task_tag(m), vocab_size, et, rng));
    task_emb_.back().trainable = cfg_.trainable_embeddings;
  }

  switch (cfg_.architecture) {
    case Architecture::SingleTask:
      task_lstm_.push_back(LstmParams::init("lstm.task0", d, et, rng));
      break;
    case Architecture::UniformLayer:
      shared_lstm_ = LstmParams::init("lstm.shared", d, et + es, rng);
      break;
    case Architecture::CoupledLayer: {
      for (int m = 0; m < M; ++m)
        task_lstm_.push_back(
            LstmParams::init("lstm." + task_tag(m), d, et, rng));
      for (int m = 0; m < M; ++m)
        c2_Wg_.push_back(Parameter::uniform("couple.Wg." + task_tag(m), d, et,
                                            rng, -0.1, 0.1));
      for (int m = 0; m < M; ++m)
        c2_Ug_.push_back(Parameter::uniform("couple.Ug." + task_tag(m), d, d,
                                            rng, -0.1, 0.1));
      for (int src = 0; src < M; ++src)
        for (int dst = 0; dst < M; ++dst)
          c2_bg_.push_back(Parameter::zeros(
              "couple.bg." + task_tag(src) + "." + task_tag(dst), d, 1, 1));
      for (int m = 0; m < M; ++m)
        c2_Uc_cross_.push_back(Parameter::uniform(
            "couple.Uc_cross." + task_tag(m), d, d, rng, -0.1, 0.1));
      break;
    }
    case Architecture::SharedLayer: {
      shared_fwd_ = LstmParams::init("lstm.fwd", d, es, rng);
      shared_bwd_ = LstmParams::init("lstm.bwd", d, es, rng);
      for (int m = 0; m < M; ++m)
        task_lstm_.push_back(
            LstmParams::init("lstm." + task_tag(m), d, et, rng));
      s3_Ucs_ = Parameter::uniform("shared.Uc_s", d, 2 * d, rng, -0.1, 0.1);
      for (int m = 0; m < M; ++m) {
        s3_self_W_.push_back(Parameter::uniform("gate.self.W." + task_tag(m),
                                                d, et, rng, -0.1, 0.1));
        s3_self_U_.push_back(Parameter::uniform("gate.self.U." + task_tag(m),
                                                d, d, rng, -0.1, 0.1));
        s3_self_b_.push_back(
            Parameter::zeros("gate.self.b." + task_tag(m), d, 1, 1));
        if (!cfg_.share_gate_input_weights)
          s3_cross_W_.push_back(Parameter::uniform(
              "gate.cross.W." + task_tag(m), d, et, rng, -0.1, 0.1));
        s3_cross_U_.push_back(Parameter::uniform("gate.cross.U." + task_tag(m),
                                                 d, 2 * d, rng, -0.1, 0.1));
        s3_cross_b_.push_back(
            Parameter::zeros("gate.cross.b." + task_tag(m), d, 1, 1));
      }
      break;
    }
  }

  for (int m = 0; m < M; ++m) {
    int c = tasks_[static_cast<std::size_t>(m)].class_count;
    TaskHead head;
    head.W = Parameter::uniform("head." + task_tag(m) + ".W", c, d, rng, -0.1,
                                0.1);
    head.b = Parameter::zeros("head." + task_tag(m) + ".b", c, 1, 1);
    heads_.push_back(std::move(head));
  }
}

int MultiTaskModel::vocab_size() const {
  return task_emb_.empty() ? 0 : task_emb_.front().vocab_size();
}

int MultiTaskModel::check_task(int task) const {
  if (task < 0 || task >= task_count())
    throw TaskError("task index " + std::to_string(task) +
                    " out of range for " + std::to_string(task_count()) +
                    " tasks");
  return task;
}

Var MultiTaskModel::head_logits(Tape& t, int task, Var h) {
  TaskHead& head = heads_[static_cast<std::size_t>(task)];
  return add(t, matmul(t, t.use(head.W), h), t.use(head.b));
}

Var MultiTaskModel::logits(Tape& t, int task, const std::vector<int>& tokens,
                           Matrix* gate_rows) {
  check_task(task);
  if (tokens.empty()) throw InputError("model: empty token sequence");
  Var h = encode(t, task, tokens, nullptr, gate_rows);
  return head_logits(t, task, h);
}

Var MultiTaskModel::encode(Tape& t, int task, const std::vector<int>& tokens,
                           std::vector<Var>* all_hidden, Matrix* gate_rows) {
  switch (cfg_.architecture) {
    case Architecture::SingleTask: {
      EmbeddingTable& emb = task_emb_[static_cast<std::size_t>(task)];
      Encoding enc = encode_sequence(t, task_lstm_[0], embed(t, emb, tokens));
      if (all_hidden) *all_hidden = enc.hidden;
      return enc.final.h;
    }
    case Architecture::UniformLayer:
      return encode_uniform(t, task, tokens, all_hidden);
    case Architecture::CoupledLayer:
      return encode_coupled(t, task, tokens, all_hidden);
    case Architecture::SharedLayer:
      return encode_shared(t, task, tokens, all_hidden, gate_rows);
  }
  throw ContractError("model: unknown architecture");
}

Var MultiTaskModel::encode_uniform(Tape& t, int task,
                                   const std::vector<int>& tokens,
                                   std::vector<Var>* all_hidden) {
  EmbeddingTable& emb = task_emb_[static_cast<std::size_t>(task)];
  std::vector<Var> task_x = embed(t, emb, tokens);
  std::vector<Var> shared_x = embed(t, shared_emb_, tokens);
  std::vector<Var> xs;
  xs.reserve(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k)
    xs.push_back(concat(t, task_x[k], shared_x[k]));
  Encoding enc = encode_sequence(t, shared_lstm_, xs);
  if (all_hidden) *all_hidden = enc.hidden;
  return enc.final.h;
}

Var MultiTaskModel::encode_coupled(Tape& t, int task,
                                   const std::vector<int>& tokens,
                                   std::vector<Var>* all_hidden) {
  // Both task cells consume the active task's embedding of the shared
  // token sequence and advance in lockstep; each candidate gates its own
  // recurrent path and the other cell's, from the pre-step states.
  EmbeddingTable& emb = task_emb_[static_cast<std::size_t>(task)];
  std::vector<Var> xs = embed(t, emb, tokens);
  const int d = cfg_.hidden_size;
  LstmState st[2] = {zero_state(t, d), zero_state(t, d)};
  if (all_hidden) all_hidden->clear();
  for (Var x : xs) {
    Var cand[2];
    for (int m = 0; m < 2; ++m) {
      int n = 1 - m;
      LstmParams& pm = task_lstm_[static_cast<std::size_t>(m)];
      Var g_self = sigmoid(
          t, add(t, add(t, matmul(t, t.use(c2_Wg_[m]), x),
                        matmul(t, t.use(c2_Ug_[m]), st[m].h)),
                 t.use(c2_bg_[static_cast<std::size_t>(m * 2 + m)])));
      Var g_cross = sigmoid(
          t, add(t, add(t, matmul(t, t.use(c2_Wg_[m]), x),
                        matmul(t, t.use(c2_Ug_[n]), st[n].h)),
                 t.use(c2_bg_[static_cast<std::size_t>(n * 2 + m)])));
      Var pre = add(t, matmul(t, t.use(pm.W_c), x),
                    add(t, mul(t, g_self, matmul(t, t.use(pm.U_c), st[m].h)),
                        mul(t, g_cross,
                            matmul(t, t.use(c2_Uc_cross_[m]), st[n].h))));
      cand[m] = tanh(t, add(t, pre, t.use(pm.b_c)));
    }
    LstmState next[2];
    for (int m = 0; m < 2; ++m)
      next[m] = lstm_step_with_candidate(t, task_lstm_[static_cast<std::size_t>(m)], x,
                                         st[m], cand[m])
                    .state;
    st[0] = next[0];
    st[1] = next[1];
    if (all_hidden) all_hidden->push_back(st[task].h);
  }
  return st[task].h;
}

Var MultiTaskModel::encode_shared(Tape& t, int task,
                                  const std::vector<int>& tokens,
                                  std::vector<Var>* all_hidden,
                                  Matrix* gate_rows) {
  const std::size_t m = static_cast<std::size_t>(task);
  std::vector<Var> hs =
      encode_bidirectional(t, shared_fwd_, shared_bwd_,
                           embed(t, shared_emb_, tokens));
  std::vector<Var> xs = embed(t, task_emb_[m], tokens);
  LstmParams& pm = task_lstm_[m];
  Parameter& cross_W =
      cfg_.share_gate_input_weights ? s3_self_W_[m] : s3_cross_W_[m];

  if (gate_rows)
    *gate_rows = Matrix(static_cast<long>(tokens.size()), cfg_.hidden_size);
  if (all_hidden) all_hidden->clear();
  LstmState st = zero_state(t, cfg_.hidden_size);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Var x = xs[k];
    Var g_self = sigmoid(t, add(t, add(t, matmul(t, t.use(s3_self_W_[m]), x),
                                       matmul(t, t.use(s3_self_U_[m]), st.h)),
                                t.use(s3_self_b_[m])));
    Var g_shared =
        sigmoid(t, add(t, add(t, matmul(t, t.use(cross_W), x),
                              matmul(t, t.use(s3_cross_U_[m]), hs[k])),
                       t.use(s3_cross_b_[m])));
    Var pre = add(t, matmul(t, t.use(pm.W_c), x),
                  add(t, mul(t, g_self, matmul(t, t.use(pm.U_c), st.h)),
                      mul(t, g_shared, matmul(t, t.use(s3_Ucs_), hs[k]))));
    Var cand = tanh(t, add(t, pre, t.use(pm.b_c)));
    st = lstm_step_with_candidate(t, pm, x, st, cand).state;
    if (gate_rows)
      gate_rows->row(static_cast<long>(k)) = t.value(g_shared).transpose();
    if (all_hidden) all_hidden->push_back(st.h);
  }
  return st.h;
}

std::vector<Matrix> MultiTaskModel::predict_per_timestep(
    int task, const std::vector<int>& tokens) {
  check_task(task);
  if (tokens.empty()) throw InputError("model: empty token sequence");
  Tape t;
  std::vector<Var> hidden;
  encode(t, task, tokens, &hidden, nullptr);
  std::vector<Matrix> out;
  out.reserve(hidden.size());
  for (Var h : hidden)
    out.push_back(t.value(softmax(t, head_logits(t, task, h))));
  return out;
}

GateTrace MultiTaskModel::trace(int task, const std::vector<int>& token_ids,
                                const std::vector<std::string>& token_strings) {
  check_task(task);
  if (cfg_.architecture != Architecture::SharedLayer)
    throw UnsupportedError("gate trace requires the shared architecture, got " +
                           to_string(cfg_.architecture));
  if (token_ids.empty()) throw InputError("model: empty token sequence");
  GateTrace trace;
  trace.task_id = task;
  trace.tokens = token_strings;
  Tape t;
  logits(t, task, token_ids, &trace.activations);
  const long T = trace.activations.rows();
  trace.neuron_order.resize(static_cast<std::size_t>(cfg_.hidden_size));
  std::iota(trace.neuron_order.begin(), trace.neuron_order.end(), 0);
  std::stable_sort(trace.neuron_order.begin(), trace.neuron_order.end(),
                   [&](int a, int b) {
                     return trace.activations(T - 1, a) >
                            trace.activations(T - 1, b);
                   });
  return trace;
}

std::vector<Parameter*> MultiTaskModel::parameters() {
  std::vector<Parameter*> out;
  auto push_emb = [&](EmbeddingTable& e) { out.push_back(&e.table); };
  auto push_lstm = [&](LstmParams& p) {
    for (Parameter* q : p.all()) out.push_back(q);
  };
  const bool has_shared_emb = cfg_.architecture == Architecture::UniformLayer ||
                              cfg_.architecture == Architecture::SharedLayer;
  if (has_shared_emb) push_emb(shared_emb_);
  for (EmbeddingTable& e : task_emb_) push_emb(e);
  switch (cfg_.architecture) {
    case Architecture::SingleTask:
      push_lstm(task_lstm_[0]);
      break;
    case Architecture::UniformLayer:
      push_lstm(shared_lstm_);
      break;
    case Architecture::CoupledLayer:
      for (LstmParams& p : task_lstm_) push_lstm(p);
      for (Parameter& p : c2_Wg_) out.push_back(&p);
      for (Parameter& p : c2_Ug_) out.push_back(&p);
      for (Parameter& p : c2_bg_) out.push_back(&p);
      for (Parameter& p : c2_Uc_cross_) out.push_back(&p);
      break;
    case Architecture::SharedLayer:
      push_lstm(shared_fwd_);
      push_lstm(shared_bwd_);
      for (LstmParams& p : task_lstm_) push_lstm(p);
      out.push_back(&s3_Ucs_);
      for (std::size_t m = 0; m < task_emb_.size(); ++m) {
        out.push_back(&s3_self_W_[m]);
        out.push_back(&s3_self_U_[m]);
        out.push_back(&s3_self_b_[m]);
        if (!cfg_.share_gate_input_weights) out.push_back(&s3_cross_W_[m]);
        out.push_back(&s3_cross_U_[m]);
        out.push_back(&s3_cross_b_[m]);
      }
      break;
  }
  for (TaskHead& h : heads_) {
    out.push_back(&h.W);
    out.push_back(&h.b);
  }
  return out;
}

std::vector<Parameter*> MultiTaskModel::shared_layer_parameters() {
  std::vector<Parameter*> out;
  switch (cfg_.architecture) {
    case Architecture::UniformLayer:
      out.push_back(&shared_emb_.table);
      for (Parameter* q : shared_lstm_.all()) out.push_back(q);
      break;
    case Architecture::SharedLayer:
      out.push_back(&shared_emb_.table);
      for (Parameter* q : shared_fwd_.all()) out.push_back(q);
      for (Parameter* q : shared_bwd_.all()) out.push_back(q);
      break;
    case Architecture::SingleTask:
    case Architecture::CoupledLayer:
      break;  // no shared layer
  }
  return out;
}

std::vector<Parameter*> MultiTaskModel::shared_parameters() {
  std::vector<Parameter*> out = shared_layer_parameters();
  if (cfg_.architecture == Architecture::SharedLayer) out.push_back(&s3_Ucs_);
  if (cfg_.architecture == Architecture::CoupledLayer) {
    // Every non-private parameter is reachable from both losses through
    // the lockstep trajectories.
    for (LstmParams& p : task_lstm_)
      for (Parameter* q : p.all()) out.push_back(q);
    for (Parameter& p : c2_Wg_) out.push_back(&p);
    for (Parameter& p : c2_Ug_) out.push_back(&p);
    for (Parameter& p : c2_bg_) out.push_back(&p);
    for (Parameter& p : c2_Uc_cross_) out.push_back(&p);
  }
  return out;
}

std::vector<Parameter*> MultiTaskModel::private_parameters(int task) {
  check_task(task);
  const std::size_t m = static_cast<std::size_t>(task);
  std::vector<Parameter*> out;
  out.push_back(&task_emb_[m].table);
  out.push_back(&heads_[m].W);
  out.push_back(&heads_[m].b);
  if (cfg_.architecture == Architecture::SingleTask ||
      cfg_.architecture == Architecture::SharedLayer) {
    for (Parameter* q : task_lstm_[m].all()) out.push_back(q);
  }
  if (cfg_.architecture == Architecture::SharedLayer) {
    out.push_back(&s3_self_W_[m]);
    out.push_back(&s3_self_U_[m]);
    out.push_back(&s3_self_b_[m]);
    if (!cfg_.share_gate_input_weights) out.push_back(&s3_cross_W_[m]);
    out.push_back(&s3_cross_U_[m]);
    out.push_back(&s3_cross_b_[m]);
  }
  return out;
}

EmbeddingTable& MultiTaskModel::shared_embedding() {
  if (cfg_.architecture != Architecture::UniformLayer &&
      cfg_.architecture != Architecture::SharedLayer)
    throw UnsupportedError("no shared embedding in architecture " +
                           to_string(cfg_.architecture));
  return shared_emb_;
}

LstmParams& MultiTaskModel::shared_forward() {
  if (cfg_.architecture != Architecture::SharedLayer)
    throw UnsupportedError("shared forward LSTM requires the shared architecture");
  return shared_fwd_;
}

LstmParams& MultiTaskModel::shared_backward() {
  if (cfg_.architecture != Architecture::SharedLayer)
    throw UnsupportedError("shared backward LSTM requires the shared architecture");
  return shared_bwd_;
}

}  // namespace mtrnn
