// SPDX-License-Identifier: Apache-2.0

#include "semlink/seq2seq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semlink/sample_io.hpp"

namespace semlink::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------- Vocab

Vocab::Vocab() {
  for (const char* t : kReservedTokens) {
    lookup_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocab Vocab::build(const std::vector<const Tokens*>& sequences) {
  std::vector<Token> all;
  for (const Tokens* seq : sequences) all.insert(all.end(), seq->begin(), seq->end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  Vocab v;
  for (auto& t : all) {
    if (v.lookup_.count(t)) continue;  // reserved strings keep their slots
    v.lookup_.emplace(t, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<Token> tokens) {
  if (tokens.size() < static_cast<std::size_t>(kReserved)) {
    throw Error(ErrorKind::Format, "vocabulary lacks reserved symbols");
  }
  for (int i = 0; i < kReserved; ++i) {
    if (tokens[static_cast<std::size_t>(i)] != kReservedTokens[i]) {
      throw Error(ErrorKind::Format, "vocabulary reserved symbols out of place");
    }
  }
  Vocab v;
  v.tokens_.clear();
  v.lookup_.clear();
  for (auto& t : tokens) {
    if (!v.lookup_.emplace(t, static_cast<int>(v.tokens_.size())).second) {
      throw Error(ErrorKind::Format, "duplicate vocabulary entry '" + t + "'");
    }
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

int Vocab::index(const Token& token) const {
  auto it = lookup_.find(token);
  return it == lookup_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

Tokens Vocab::decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == kEos) break;
    out.push_back(token(id));
  }
  return out;
}

// ---------------------------------------------------------- ModelConfig

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.embed_dim = 512;
  c.enc_hidden_per_dir = 256;
  c.enc_layers = 2;
  c.dec_hidden = 512;
  c.attn_dim = 128;
  c.dropout_rate = 0.5;
  c.teacher_forcing_rate = 0.5;
  c.learning_rate = 1e-4;
  c.grad_clip_l2 = 5.0;
  c.batch_size = 128;
  c.max_epochs = 640;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::Usage, "model config: " + why); };
  if (embed_dim < 1 || enc_hidden_per_dir < 1 || enc_layers < 1 || attn_dim < 1) {
    fail("dimensions must be positive");
  }
  if (dec_hidden != 2 * enc_hidden_per_dir) {
    fail("dec_hidden must equal 2 x enc_hidden_per_dir");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
  if (!(teacher_forcing_rate >= 0.0 && teacher_forcing_rate <= 1.0)) {
    fail("teacher_forcing_rate must be in [0, 1]");
  }
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(grad_clip_l2 > 0.0)) fail("grad_clip_l2 must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (max_epochs < 0) fail("max_epochs must be non-negative");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["embed_dim"] = embed_dim;
  j["enc_hidden_per_dir"] = enc_hidden_per_dir;
  j["enc_layers"] = enc_layers;
  j["dec_hidden"] = dec_hidden;
  j["attn_dim"] = attn_dim;
  j["dropout_rate"] = dropout_rate;
  j["teacher_forcing_rate"] = teacher_forcing_rate;
  j["learning_rate"] = learning_rate;
  j["grad_clip_l2"] = grad_clip_l2;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::merge_json(ModelConfig c, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Format, "model config must be a JSON object");
  if (j.contains("preset")) {
    const auto name = j.at("preset").get<std::string>();
    if (name == "desk") {
      c = desk();
    } else if (name == "full") {
      c = full();
    } else {
      throw Error(ErrorKind::Usage, "unknown model preset '" + name + "'");
    }
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") continue;
      if (key == "embed_dim") c.embed_dim = value.get<int>();
      else if (key == "enc_hidden_per_dir") c.enc_hidden_per_dir = value.get<int>();
      else if (key == "enc_layers") c.enc_layers = value.get<int>();
      else if (key == "dec_hidden") c.dec_hidden = value.get<int>();
      else if (key == "attn_dim") c.attn_dim = value.get<int>();
      else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
      else if (key == "teacher_forcing_rate") c.teacher_forcing_rate = value.get<double>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "grad_clip_l2") c.grad_clip_l2 = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(ErrorKind::Usage, "unknown model config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("model config: ") + e.what());
  }
  return c;
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  return merge_json(ModelConfig{}, text);
}

// ---------------------------------------------------------- ParamLayout

ParamLayout ParamLayout::build(const ModelConfig& cfg, int src_vocab, int tgt_vocab) {
  ParamLayout l;
  auto add = [&](std::string name, int rows, int cols) {
    l.specs.push_back({std::move(name), rows, cols, l.total});
    l.total += static_cast<std::size_t>(rows) * cols;
  };
  const int E = cfg.embed_dim, H = cfg.enc_hidden_per_dir, D = cfg.dec_hidden, A = cfg.attn_dim;
  add("src_embed", E, src_vocab);
  add("tgt_embed", E, tgt_vocab);
  for (int layer = 0; layer < cfg.enc_layers; ++layer) {
    const int in = layer == 0 ? E : 2 * H;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = "enc.l" + std::to_string(layer) + "." + dir + ".";
      add(p + "w_x", 4 * H, in);
      add(p + "w_h", 4 * H, H);
      add(p + "b", 4 * H, 1);
    }
  }
  add("dec.w_x", 4 * D, E);
  add("dec.w_h", 4 * D, D);
  add("dec.b", 4 * D, 1);
  add("attn.w_dec", A, D);
  add("attn.w_enc", A, 2 * H);
  add("attn.v", A, 1);
  add("out.w", tgt_vocab, D + 2 * H);
  add("out.b", tgt_vocab, 1);
  return l;
}

const ParamSpec& ParamLayout::find(const std::string& name) const {
  for (const auto& s : specs) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::NotFound, "no parameter tensor named " + name);
}

std::size_t closed_form_parameter_count(const ModelConfig& cfg, int src_vocab,
                                        int tgt_vocab) {
  const std::size_t E = cfg.embed_dim, H = cfg.enc_hidden_per_dir, D = cfg.dec_hidden,
                    A = cfg.attn_dim, L = cfg.enc_layers, Vs = src_vocab, Vt = tgt_vocab;
  const std::size_t embeddings = E * (Vs + Vt);
  const std::size_t lstm_first = 2 * (4 * H * (E + H) + 4 * H);
  const std::size_t lstm_upper = (L - 1) * 2 * (4 * H * (2 * H + H) + 4 * H);
  const std::size_t decoder = 4 * D * (E + D) + 4 * D;
  const std::size_t attention = A * D + A * 2 * H + A;
  const std::size_t output = Vt * (D + 2 * H) + Vt;
  return embeddings + lstm_first + lstm_upper + decoder + attention + output;
}

// ---------------------------------------------------------------- Batch

Batch Batch::make(std::span<const std::vector<int>* const> sources,
                  std::span<const std::vector<int>* const> targets) {
  if (!targets.empty() && targets.size() != sources.size()) {
    throw Error(ErrorKind::ShapeMismatch, "batch: source/target count mismatch");
  }
  Batch b;
  b.size = static_cast<int>(sources.size());
  for (const auto* s : sources) {
    if (s->empty()) throw Error(ErrorKind::ShapeMismatch, "batch: empty source");
    b.src_len = std::max(b.src_len, static_cast<int>(s->size()));
    b.src_lengths.push_back(static_cast<int>(s->size()));
  }
  for (const auto* t : targets) {
    b.tgt_len = std::max(b.tgt_len, static_cast<int>(t->size()) + 1);
    b.tgt_lengths.push_back(static_cast<int>(t->size()) + 1);
  }
  const auto B = static_cast<std::size_t>(b.size);
  b.src.assign(static_cast<std::size_t>(b.src_len) * B, Vocab::kPad);
  for (std::size_t j = 0; j < B; ++j) {
    for (std::size_t t = 0; t < sources[j]->size(); ++t) b.src[t * B + j] = (*sources[j])[t];
  }
  b.tgt.assign(static_cast<std::size_t>(b.tgt_len) * B, Vocab::kPad);
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto& tg = *targets[j];
    for (std::size_t t = 0; t < tg.size(); ++t) b.tgt[t * B + j] = tg[t];
    b.tgt[tg.size() * B + j] = Vocab::kEos;
  }
  return b;
}

// ---------------------------------------------------------------- Model

namespace {

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowT = Eigen::Array<T, 1, Eigen::Dynamic>;
template <typename T>
using CMap = Eigen::Map<const MatT<T>>;
template <typename T>
using GMap = Eigen::Map<MatT<T>>;

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return (x * S(0.5)).tanh() * S(0.5) + S(0.5);
}

// Cache for one LSTM direction over a padded, time-major sequence.
template <typename T>
struct LstmTape {
  MatT<T> x;      // input [in x T*B]
  MatT<T> gates;  // post-activation i, f, g, o [4H x T*B]
  MatT<T> c;      // [H x T*B], after masking
  MatT<T> h;      // [H x T*B], after masking
  MatT<T> tanh_c; // tanh of the unmasked candidate cell
};

template <typename T>
void fill_mask(RowT<T>& m, const std::vector<int>& lengths, int t) {
  for (Eigen::Index b = 0; b < m.size(); ++b) {
    m(b) = t < lengths[static_cast<std::size_t>(b)] ? T(1) : T(0);
  }
}

// Masked recurrence: beyond a sequence's length the state is carried
// unchanged (forward) or stays at zero until the sequence starts (reverse).
template <typename T>
void lstm_forward(LstmTape<T>& tape, const MatT<T>& x, const CMap<T>& wx, const CMap<T>& wh,
                  const CMap<T>& bias, const std::vector<int>& lengths, int steps, int B,
                  bool reverse) {
  const Eigen::Index H = wh.cols();
  tape.x = x;
  tape.gates.noalias() = wx * x;
  tape.gates.colwise() += bias.col(0);
  tape.c.resize(H, x.cols());
  tape.h.resize(H, x.cols());
  tape.tanh_c.resize(H, x.cols());
  MatT<T> h_prev = MatT<T>::Zero(H, B);
  MatT<T> c_prev = MatT<T>::Zero(H, B);
  RowT<T> m(B);
  for (int k = 0; k < steps; ++k) {
    const int t = reverse ? steps - 1 - k : k;
    fill_mask(m, lengths, t);
    auto g = tape.gates.middleCols(static_cast<Eigen::Index>(t) * B, B);
    g.noalias() += wh * h_prev;
    g.topRows(2 * H) = sigmoid(g.topRows(2 * H).array()).matrix();
    g.middleRows(2 * H, H) = g.middleRows(2 * H, H).array().tanh().matrix();
    g.bottomRows(H) = sigmoid(g.bottomRows(H).array()).matrix();
    const auto gi = g.topRows(H).array();
    const auto gf = g.middleRows(H, H).array();
    const auto gg = g.middleRows(2 * H, H).array();
    const auto go = g.bottomRows(H).array();
    auto tc = tape.tanh_c.middleCols(static_cast<Eigen::Index>(t) * B, B);
    auto cc = tape.c.middleCols(static_cast<Eigen::Index>(t) * B, B);
    auto hh = tape.h.middleCols(static_cast<Eigen::Index>(t) * B, B);
    const MatT<T> cand = (gf * c_prev.array() + gi * gg).matrix();
    tc = cand.array().tanh().matrix();
    cc = (c_prev.array() + (cand.array() - c_prev.array()).rowwise() * m).matrix();
    hh = (h_prev.array() + ((go * tc.array()) - h_prev.array()).rowwise() * m).matrix();
    h_prev = hh;
    c_prev = cc;
  }
}

// Returns d(loss)/d(x). `d_out` holds gradients w.r.t. every emitted h,
// `dh_final`/`dc_final` w.r.t. the state after the last processed step.
template <typename T>
MatT<T> lstm_backward(const LstmTape<T>& tape, const MatT<T>& d_out, MatT<T> dh_next,
                      MatT<T> dc_next, const CMap<T>& wx, const CMap<T>& wh, GMap<T>& g_wx,
                      GMap<T>& g_wh, GMap<T>& g_b, const std::vector<int>& lengths,
                      int steps, int B, bool reverse) {
  const Eigen::Index H = wh.cols();
  MatT<T> d_gates(4 * H, tape.x.cols());
  const MatT<T> zero = MatT<T>::Zero(H, B);
  RowT<T> m(B);
  RowT<T> keep(B);
  for (int k = steps - 1; k >= 0; --k) {
    const int t = reverse ? steps - 1 - k : k;
    const Eigen::Index col = static_cast<Eigen::Index>(t) * B;
    const Eigen::Index prev_col = static_cast<Eigen::Index>(reverse ? t + 1 : t - 1) * B;
    fill_mask(m, lengths, t);
    keep = T(1) - m;
    const auto h_prev = k > 0 ? tape.h.middleCols(prev_col, B) : zero.middleCols(0, B);
    const auto c_prev = k > 0 ? tape.c.middleCols(prev_col, B) : zero.middleCols(0, B);
    const auto g = tape.gates.middleCols(col, B);
    const auto gi = g.topRows(H).array();
    const auto gf = g.middleRows(H, H).array();
    const auto gg = g.middleRows(2 * H, H).array();
    const auto go = g.bottomRows(H).array();
    const auto tc = tape.tanh_c.middleCols(col, B).array();

    const MatT<T> dh = d_out.middleCols(col, B) + dh_next;
    const auto dht = (dh.array().rowwise() * m).eval();
    const auto dct =
        ((dc_next.array().rowwise() * m) + dht * go * (T(1) - tc.square())).eval();
    auto dg = d_gates.middleCols(col, B);
    dg.topRows(H) = (dct * gg * gi * (T(1) - gi)).matrix();
    dg.middleRows(H, H) = (dct * c_prev.array() * gf * (T(1) - gf)).matrix();
    dg.middleRows(2 * H, H) = (dct * gi * (T(1) - gg.square())).matrix();
    dg.bottomRows(H) = (dht * tc * go * (T(1) - go)).matrix();

    dc_next = (dct * gf + (dc_next.array().rowwise() * keep)).matrix();
    MatT<T> dh_prev = (dh.array().rowwise() * keep).matrix();
    dh_prev.noalias() += wh.transpose() * dg;
    if (k > 0) g_wh.noalias() += dg * h_prev.transpose();
    dh_next = std::move(dh_prev);
  }
  g_wx.noalias() += d_gates * tape.x.transpose();
  g_b.col(0) += d_gates.rowwise().sum();
  return wx.transpose() * d_gates;
}

template <typename T>
MatT<T> dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
  MatT<T> m(rows, cols);
  const T scale = T(1.0 / (1.0 - p));
  T* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = rng.uniform() < p ? T(0) : scale;
  return m;
}

template <typename T>
struct Views {
  struct Lstm {
    std::size_t wx, wh, b;
  };
  std::size_t src_embed, tgt_embed;
  std::vector<Lstm> enc[2];
  Lstm dec;
  std::size_t att_dec, att_enc, att_v, out_w, out_b;

  explicit Views(const ParamLayout& l) {
    auto idx = [&](const std::string& name) {
      for (std::size_t i = 0; i < l.specs.size(); ++i) {
        if (l.specs[i].name == name) return i;
      }
      throw Error(ErrorKind::NotFound, "layout lacks " + name);
    };
    src_embed = idx("src_embed");
    tgt_embed = idx("tgt_embed");
    for (std::size_t layer = 0;; ++layer) {
      const std::string p = "enc.l" + std::to_string(layer) + ".";
      bool found = false;
      for (const auto& s : l.specs) found = found || s.name == p + "fwd.w_x";
      if (!found) break;
      enc[0].push_back({idx(p + "fwd.w_x"), idx(p + "fwd.w_h"), idx(p + "fwd.b")});
      enc[1].push_back({idx(p + "bwd.w_x"), idx(p + "bwd.w_h"), idx(p + "bwd.b")});
    }
    dec = {idx("dec.w_x"), idx("dec.w_h"), idx("dec.b")};
    att_dec = idx("attn.w_dec");
    att_enc = idx("attn.w_enc");
    att_v = idx("attn.v");
    out_w = idx("out.w");
    out_b = idx("out.b");
  }
};

}  // namespace

template <typename T>
struct Seq2Seq<T>::Workspace {
  struct Layer {
    MatT<T> in_mask;  // empty when dropout is off
    LstmTape<T> dir[2];
    MatT<T> out;      // [2H x Ts*B]
  };
  std::vector<Layer> layers;
  MatT<T> enc;        // top encoder output after dropout
  MatT<T> enc_mask;
  MatT<T> keys;       // attn.w_enc * enc
  MatT<T> h0, c0;

  std::vector<int> inputs;  // decoder input ids [Tt*B]
  MatT<T> x, x_mask;        // decoder input embeddings after dropout [E x Tt*B]
  MatT<T> gates, c, s, tanh_c;
  MatT<T> sd, s_mask;       // decoder output after dropout
  std::vector<MatT<T>> att_pre;  // per step: tanh(keys + W_dec s) [A x Ts*B]
  MatT<T> alpha;            // [Ts x Tt*B]
  MatT<T> ctx;              // [2H x Tt*B]
  MatT<T> probs;            // [V x Tt*B]
};

template <typename T>
Seq2Seq<T>::Seq2Seq(ModelConfig cfg, Vocab src, Vocab tgt)
    : cfg_(cfg), src_vocab_(std::move(src)), tgt_vocab_(std::move(tgt)) {
  cfg_.validate();
  layout_ = ParamLayout::build(cfg_, src_vocab_.size(), tgt_vocab_.size());
  params_.assign(layout_.total, T(0));
}

template <typename T>
Seq2Seq<T>::~Seq2Seq() = default;

template <typename T>
Seq2Seq<T>::Seq2Seq(const Seq2Seq& o)
    : cfg_(o.cfg_), src_vocab_(o.src_vocab_), tgt_vocab_(o.tgt_vocab_), layout_(o.layout_),
      params_(o.params_) {}

template <typename T>
Seq2Seq<T>& Seq2Seq<T>::operator=(const Seq2Seq& o) {
  if (this != &o) {
    cfg_ = o.cfg_;
    src_vocab_ = o.src_vocab_;
    tgt_vocab_ = o.tgt_vocab_;
    layout_ = o.layout_;
    params_ = o.params_;
    ws_.reset();
  }
  return *this;
}

template <typename T>
Seq2Seq<T>::Seq2Seq(Seq2Seq&&) noexcept = default;
template <typename T>
Seq2Seq<T>& Seq2Seq<T>::operator=(Seq2Seq&&) noexcept = default;

template <typename T>
void Seq2Seq<T>::init_params(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) p = static_cast<T>(rng.uniform(-0.08, 0.08));
}

template <typename T>
ForwardResult Seq2Seq<T>::forward(const Batch& batch, Mode mode, Rng* rng,
                                  Buffer<T>* grad,
                                  const AttentionObserver& observer) const {
  if (mode == Mode::Train) {
    if (!rng) throw Error(ErrorKind::Usage, "forward: Train mode needs an rng");
    return run(batch, cfg_.dropout_rate, cfg_.teacher_forcing_rate, rng, grad, observer, false);
  }
  return run(batch, 0.0, 1.0, nullptr, grad, observer, false);
}

template <typename T>
ForwardResult Seq2Seq<T>::run(const Batch& batch, double p_drop, double teacher_forcing,
                              Rng* rng, Buffer<T>* grad,
                              const AttentionObserver& observer, bool greedy) const {
  const int B = batch.size;
  const int Ts = batch.src_len;
  const int Tt = batch.tgt_len;
  if (B < 1 || Ts < 1 || Tt < 1 ||
      batch.src.size() != static_cast<std::size_t>(Ts) * B ||
      batch.tgt.size() != static_cast<std::size_t>(Tt) * B ||
      batch.src_lengths.size() != static_cast<std::size_t>(B) ||
      batch.tgt_lengths.size() != static_cast<std::size_t>(B)) {
    throw Error(ErrorKind::ShapeMismatch, "forward: malformed batch");
  }
  for (int id : batch.src) {
    if (id < 0 || id >= src_vocab_.size()) {
      throw Error(ErrorKind::ShapeMismatch, "forward: source id out of range");
    }
  }
  for (int id : batch.tgt) {
    if (id < 0 || id >= tgt_vocab_.size()) {
      throw Error(ErrorKind::ShapeMismatch, "forward: target id out of range");
    }
  }
  if (grad && grad->size() != params_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "forward: gradient buffer has wrong size");
  }

  if (!ws_) ws_ = std::make_unique<Workspace>();
  Workspace& w = *ws_;
  const Views<T> v(layout_);
  auto P = [&](std::size_t i) {
    const auto& s = layout_.specs[i];
    return CMap<T>(params_.data() + s.offset, s.rows, s.cols);
  };
  const int H = cfg_.enc_hidden_per_dir;
  const int D = cfg_.dec_hidden;
  const int L = cfg_.enc_layers;
  const int V = tgt_vocab_.size();
  const Eigen::Index SB = static_cast<Eigen::Index>(Ts) * B;
  const Eigen::Index TB = static_cast<Eigen::Index>(Tt) * B;

  // Encoder.
  const auto src_embed = P(v.src_embed);
  MatT<T> x(cfg_.embed_dim, SB);
  for (Eigen::Index j = 0; j < SB; ++j) x.col(j) = src_embed.col(batch.src[static_cast<std::size_t>(j)]);
  w.layers.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    auto& layer = w.layers[static_cast<std::size_t>(l)];
    if (p_drop > 0) {
      layer.in_mask = dropout_mask<T>(*rng, x.rows(), x.cols(), p_drop);
      x.array() *= layer.in_mask.array();
    } else {
      layer.in_mask.resize(0, 0);
    }
    layer.out.resize(2 * H, SB);
    for (int d = 0; d < 2; ++d) {
      const auto& lv = v.enc[d][static_cast<std::size_t>(l)];
      lstm_forward<T>(layer.dir[d], x, P(lv.wx), P(lv.wh), P(lv.b), batch.src_lengths, Ts, B,
                      d == 1);
      layer.out.middleRows(static_cast<Eigen::Index>(d) * H, H) = layer.dir[d].h;
    }
    x = layer.out;
  }
  if (p_drop > 0) {
    w.enc_mask = dropout_mask<T>(*rng, x.rows(), x.cols(), p_drop);
    w.enc = (x.array() * w.enc_mask.array()).matrix();
  } else {
    w.enc_mask.resize(0, 0);
    w.enc = x;
  }
  w.keys.noalias() = P(v.att_enc) * w.enc;
  const auto& top = w.layers.back();
  w.h0.resize(D, B);
  w.c0.resize(D, B);
  w.h0.topRows(H) = top.dir[0].h.middleCols(static_cast<Eigen::Index>(Ts - 1) * B, B);
  w.h0.bottomRows(H) = top.dir[1].h.middleCols(0, B);
  w.c0.topRows(H) = top.dir[0].c.middleCols(static_cast<Eigen::Index>(Ts - 1) * B, B);
  w.c0.bottomRows(H) = top.dir[1].c.middleCols(0, B);

  // Decoder.
  std::vector<char> gold_fed(static_cast<std::size_t>(B), greedy ? 0 : 1);
  if (!greedy && teacher_forcing < 1.0) {
    for (auto& g : gold_fed) g = rng->bernoulli(teacher_forcing) ? 1 : 0;
  }
  std::vector<char> finished(static_cast<std::size_t>(B), 0);
  int steps_run = Tt;
  const auto tgt_embed = P(v.tgt_embed);
  const auto dec_wx = P(v.dec.wx);
  const auto dec_wh = P(v.dec.wh);
  const auto dec_b = P(v.dec.b);
  const auto att_dec = P(v.att_dec);
  const auto att_v = P(v.att_v);
  const auto out_w = P(v.out_w);
  const auto out_b = P(v.out_b);

  w.inputs.assign(static_cast<std::size_t>(TB), Vocab::kSos);
  w.x.resize(cfg_.embed_dim, TB);
  w.gates.resize(4 * D, TB);
  w.c.resize(D, TB);
  w.s.resize(D, TB);
  w.tanh_c.resize(D, TB);
  w.sd.resize(D, TB);
  w.att_pre.resize(static_cast<std::size_t>(Tt));
  w.alpha.resize(Ts, TB);
  w.ctx.resize(2 * H, TB);
  w.probs.resize(V, TB);
  if (p_drop > 0) {
    w.x_mask = dropout_mask<T>(*rng, w.x.rows(), w.x.cols(), p_drop);
    w.s_mask = dropout_mask<T>(*rng, D, TB, p_drop);
  } else {
    w.x_mask.resize(0, 0);
    w.s_mask.resize(0, 0);
  }

  ForwardResult res;
  res.predicted.assign(static_cast<std::size_t>(TB), Vocab::kPad);
  double loss_sum = 0.0;
  for (int b = 0; b < B; ++b) res.tokens += batch.tgt_lengths[static_cast<std::size_t>(b)];

  const T neg_inf = -std::numeric_limits<T>::infinity();
  MatT<T> q(cfg_.attn_dim, B);
  MatT<T> scores(Ts, B);
  for (int t = 0; t < Tt; ++t) {
    const Eigen::Index col = static_cast<Eigen::Index>(t) * B;
    for (int b = 0; b < B; ++b) {
      const auto j = static_cast<std::size_t>(col + b);
      int in = Vocab::kSos;
      if (t > 0) {
        const auto prev = static_cast<std::size_t>(col - B + b);
        in = gold_fed[static_cast<std::size_t>(b)] ? batch.tgt[prev] : res.predicted[prev];
      }
      w.inputs[j] = in;
      w.x.col(col + b) = tgt_embed.col(in);
    }
    auto xt = w.x.middleCols(col, B);
    if (p_drop > 0) xt.array() *= w.x_mask.middleCols(col, B).array();

    const auto s_prev = t == 0 ? w.h0.middleCols(0, B) : w.s.middleCols(col - B, B);
    const auto c_prev = t == 0 ? w.c0.middleCols(0, B) : w.c.middleCols(col - B, B);
    auto g = w.gates.middleCols(col, B);
    g.noalias() = dec_wx * xt;
    g.noalias() += dec_wh * s_prev;
    g.colwise() += dec_b.col(0);
    g.topRows(2 * D) = sigmoid(g.topRows(2 * D).array()).matrix();
    g.middleRows(2 * D, D) = g.middleRows(2 * D, D).array().tanh().matrix();
    g.bottomRows(D) = sigmoid(g.bottomRows(D).array()).matrix();
    auto cc = w.c.middleCols(col, B);
    cc = (g.middleRows(D, D).array() * c_prev.array() +
          g.topRows(D).array() * g.middleRows(2 * D, D).array())
             .matrix();
    auto tc = w.tanh_c.middleCols(col, B);
    tc = cc.array().tanh().matrix();
    auto st = w.s.middleCols(col, B);
    st = (g.bottomRows(D).array() * tc.array()).matrix();
    auto sd = w.sd.middleCols(col, B);
    sd = p_drop > 0 ? (st.array() * w.s_mask.middleCols(col, B).array()).matrix() : MatT<T>(st);

    // Additive attention over unpadded source positions.
    q.noalias() = att_dec * sd;
    auto& pre = w.att_pre[static_cast<std::size_t>(t)];
    pre.resize(cfg_.attn_dim, SB);
    for (int i = 0; i < Ts; ++i) {
      const Eigen::Index ic = static_cast<Eigen::Index>(i) * B;
      pre.middleCols(ic, B) = (w.keys.middleCols(ic, B) + q).array().tanh().matrix();
    }
    const MatT<T> flat = att_v.transpose() * pre;  // 1 x Ts*B
    for (int b = 0; b < B; ++b) {
      const int len = batch.src_lengths[static_cast<std::size_t>(b)];
      T mx = neg_inf;
      for (int i = 0; i < Ts; ++i) {
        const T e = i < len ? flat(0, static_cast<Eigen::Index>(i) * B + b) : neg_inf;
        scores(i, b) = e;
        mx = std::max(mx, e);
      }
      T sum = 0;
      for (int i = 0; i < Ts; ++i) {
        const T a = i < len ? std::exp(scores(i, b) - mx) : T(0);
        scores(i, b) = a;
        sum += a;
      }
      for (int i = 0; i < Ts; ++i) scores(i, b) /= sum;
    }
    w.alpha.middleCols(col, B) = scores;
    if (observer) observer(t, scores.template cast<double>());
    auto ctx = w.ctx.middleCols(col, B);
    ctx.setZero();
    for (int i = 0; i < Ts; ++i) {
      ctx.array() += w.enc.middleCols(static_cast<Eigen::Index>(i) * B, B).array().rowwise() *
                     scores.row(i).array();
    }

    auto probs = w.probs.middleCols(col, B);
    probs.noalias() = out_w.leftCols(D) * sd;
    probs.noalias() += out_w.rightCols(2 * H) * ctx;
    probs.colwise() += out_b.col(0);
    for (int b = 0; b < B; ++b) {
      auto z = probs.col(b);
      Eigen::Index arg = 0;
      const T mx = z.maxCoeff(&arg);
      z.array() = (z.array() - mx).exp();
      const T sum = z.sum();
      z /= sum;
      res.predicted[static_cast<std::size_t>(col + b)] = static_cast<int>(arg);
      if (t < batch.tgt_lengths[static_cast<std::size_t>(b)]) {
        const int y = batch.tgt[static_cast<std::size_t>(col + b)];
        loss_sum -= static_cast<double>(std::log(std::max(z(y), std::numeric_limits<T>::min())));
      }
    }
    if (greedy) {
      bool all = true;
      for (int b = 0; b < B; ++b) {
        auto& f = finished[static_cast<std::size_t>(b)];
        f = f || res.predicted[static_cast<std::size_t>(col + b)] == Vocab::kEos;
        all = all && f;
      }
      if (all) {
        steps_run = t + 1;
        break;
      }
    }
  }
  if (greedy) {
    res.predicted.resize(static_cast<std::size_t>(steps_run) * B);
    return res;
  }
  res.loss = loss_sum / static_cast<double>(res.tokens);
  if (!grad) return res;

  // Backward.
  auto G = [&](std::size_t i) {
    const auto& s = layout_.specs[i];
    return GMap<T>(grad->data() + s.offset, s.rows, s.cols);
  };
  auto g_tgt_embed = G(v.tgt_embed);
  auto g_dec_wx = G(v.dec.wx);
  auto g_dec_wh = G(v.dec.wh);
  auto g_dec_b = G(v.dec.b);
  auto g_att_dec = G(v.att_dec);
  auto g_att_enc = G(v.att_enc);
  auto g_att_v = G(v.att_v);
  auto g_out_w = G(v.out_w);
  auto g_out_b = G(v.out_b);

  const T inv_tokens = T(1.0 / static_cast<double>(res.tokens));
  MatT<T> d_enc = MatT<T>::Zero(2 * H, SB);
  MatT<T> d_keys = MatT<T>::Zero(cfg_.attn_dim, SB);
  MatT<T> dh_next = MatT<T>::Zero(D, B);
  MatT<T> dc_next = MatT<T>::Zero(D, B);
  MatT<T> d_logits(V, B), d_sd(D, B), d_ctx(2 * H, B), d_alpha(Ts, B), d_q(cfg_.attn_dim, B);
  MatT<T> d_gate(4 * D, B);
  for (int t = Tt - 1; t >= 0; --t) {
    const Eigen::Index col = static_cast<Eigen::Index>(t) * B;
    d_logits = w.probs.middleCols(col, B);
    for (int b = 0; b < B; ++b) {
      if (t < batch.tgt_lengths[static_cast<std::size_t>(b)]) {
        d_logits(batch.tgt[static_cast<std::size_t>(col + b)], b) -= T(1);
        d_logits.col(b) *= inv_tokens;
      } else {
        d_logits.col(b).setZero();
      }
    }
    const auto sd = w.sd.middleCols(col, B);
    const auto ctx = w.ctx.middleCols(col, B);
    g_out_w.leftCols(D).noalias() += d_logits * sd.transpose();
    g_out_w.rightCols(2 * H).noalias() += d_logits * ctx.transpose();
    g_out_b.col(0) += d_logits.rowwise().sum();
    d_sd.noalias() = out_w.leftCols(D).transpose() * d_logits;
    d_ctx.noalias() = out_w.rightCols(2 * H).transpose() * d_logits;

    const auto alpha = w.alpha.middleCols(col, B);
    for (int i = 0; i < Ts; ++i) {
      const Eigen::Index ic = static_cast<Eigen::Index>(i) * B;
      d_alpha.row(i) = (d_ctx.array() * w.enc.middleCols(ic, B).array()).colwise().sum().matrix();
      d_enc.middleCols(ic, B).array() += d_ctx.array().rowwise() * alpha.row(i).array();
    }
    const RowT<T> weighted = (alpha.array() * d_alpha.array()).colwise().sum();
    const MatT<T> d_score = (alpha.array() * (d_alpha.array().rowwise() - weighted)).matrix();
    const auto& pre = w.att_pre[static_cast<std::size_t>(t)];
    d_q.setZero();
    for (int i = 0; i < Ts; ++i) {
      const Eigen::Index ic = static_cast<Eigen::Index>(i) * B;
      const auto pi = pre.middleCols(ic, B);
      g_att_v.col(0).noalias() += pi * d_score.row(i).transpose();
      const MatT<T> d_arg =
          ((att_v.col(0) * d_score.row(i)).array() * (T(1) - pi.array().square())).matrix();
      d_q += d_arg;
      d_keys.middleCols(ic, B) += d_arg;
    }
    g_att_dec.noalias() += d_q * sd.transpose();
    d_sd.noalias() += att_dec.transpose() * d_q;

    // Through output dropout into the decoder recurrence.
    MatT<T> ds = p_drop > 0 ? MatT<T>(d_sd.array() * w.s_mask.middleCols(col, B).array())
                            : d_sd;
    ds += dh_next;
    const auto g = w.gates.middleCols(col, B);
    const auto gi = g.topRows(D).array();
    const auto gf = g.middleRows(D, D).array();
    const auto gg = g.middleRows(2 * D, D).array();
    const auto go = g.bottomRows(D).array();
    const auto tc = w.tanh_c.middleCols(col, B).array();
    const auto s_prev = t == 0 ? w.h0.middleCols(0, B) : w.s.middleCols(col - B, B);
    const auto c_prev = t == 0 ? w.c0.middleCols(0, B) : w.c.middleCols(col - B, B);
    const auto dct = (dc_next.array() + ds.array() * go * (T(1) - tc.square())).eval();
    d_gate.topRows(D) = (dct * gg * gi * (T(1) - gi)).matrix();
    d_gate.middleRows(D, D) = (dct * c_prev.array() * gf * (T(1) - gf)).matrix();
    d_gate.middleRows(2 * D, D) = (dct * gi * (T(1) - gg.square())).matrix();
    d_gate.bottomRows(D) = (ds.array() * tc * go * (T(1) - go)).matrix();
    dc_next = (dct * gf).matrix();
    dh_next.noalias() = dec_wh.transpose() * d_gate;
    g_dec_wh.noalias() += d_gate * s_prev.transpose();
    const auto xt = w.x.middleCols(col, B);
    g_dec_wx.noalias() += d_gate * xt.transpose();
    g_dec_b.col(0) += d_gate.rowwise().sum();
    MatT<T> dx = dec_wx.transpose() * d_gate;
    if (p_drop > 0) dx.array() *= w.x_mask.middleCols(col, B).array();
    for (int b = 0; b < B; ++b) {
      g_tgt_embed.col(w.inputs[static_cast<std::size_t>(col + b)]) += dx.col(b);
    }
  }

  g_att_enc.noalias() += d_keys * w.enc.transpose();
  d_enc.noalias() += P(v.att_enc).transpose() * d_keys;
  if (p_drop > 0) d_enc.array() *= w.enc_mask.array();

  MatT<T> d_out = std::move(d_enc);
  for (int l = L - 1; l >= 0; --l) {
    auto& layer = w.layers[static_cast<std::size_t>(l)];
    MatT<T> d_x;
    for (int d = 0; d < 2; ++d) {
      const auto& lv = v.enc[d][static_cast<std::size_t>(l)];
      MatT<T> dh_final = MatT<T>::Zero(H, B);
      MatT<T> dc_final = MatT<T>::Zero(H, B);
      if (l == L - 1) {
        dh_final = dh_next.middleRows(static_cast<Eigen::Index>(d) * H, H);
        dc_final = dc_next.middleRows(static_cast<Eigen::Index>(d) * H, H);
      }
      auto g_wx = G(lv.wx);
      auto g_wh = G(lv.wh);
      auto g_b = G(lv.b);
      MatT<T> part = lstm_backward<T>(layer.dir[d], d_out.middleRows(static_cast<Eigen::Index>(d) * H, H),
                                      std::move(dh_final), std::move(dc_final), P(lv.wx), P(lv.wh),
                                      g_wx, g_wh, g_b, batch.src_lengths, Ts, B, d == 1);
      if (d == 0) {
        d_x = std::move(part);
      } else {
        d_x += part;
      }
    }
    if (layer.in_mask.size() > 0) d_x.array() *= layer.in_mask.array();
    d_out = std::move(d_x);
  }
  auto g_src_embed = G(v.src_embed);
  for (Eigen::Index j = 0; j < SB; ++j) {
    g_src_embed.col(batch.src[static_cast<std::size_t>(j)]) += d_out.col(j);
  }
  return res;
}

template <typename T>
std::vector<Tokens> Seq2Seq<T>::greedy_decode(const std::vector<Tokens>& sources,
                                              int max_len) const {
  std::vector<Tokens> out(sources.size());
  if (sources.empty() || max_len <= 0) return out;

  std::vector<std::vector<int>> encoded;
  encoded.reserve(sources.size());
  for (const auto& s : sources) {
    if (s.empty()) throw Error(ErrorKind::ShapeMismatch, "greedy_decode: empty source");
    encoded.push_back(src_vocab_.encode(s));
  }
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return encoded[a].size() < encoded[b].size();
  });

  const std::size_t chunk = 256;
  const std::vector<int> dummy(static_cast<std::size_t>(max_len - 1), Vocab::kPad);
  for (std::size_t start = 0; start < order.size(); start += chunk) {
    const std::size_t n = std::min(chunk, order.size() - start);
    std::vector<const std::vector<int>*> srcs, tgts;
    for (std::size_t k = 0; k < n; ++k) {
      srcs.push_back(&encoded[order[start + k]]);
      tgts.push_back(&dummy);
    }
    const Batch batch = Batch::make(srcs, tgts);
    const ForwardResult r = run(batch, 0.0, 0.0, nullptr, nullptr, {}, true);
    const std::size_t steps = r.predicted.size() / n;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<int> ids;
      for (std::size_t t = 0; t < steps; ++t) {
        const int id = r.predicted[t * n + k];
        if (id == Vocab::kEos) break;
        ids.push_back(id);
      }
      Tokens toks;
      for (int id : ids) toks.push_back(tgt_vocab_.token(id));
      out[order[start + k]] = std::move(toks);
    }
  }
  return out;
}

template <typename T>
Tokens Seq2Seq<T>::greedy_decode(const Tokens& source, int max_len) const {
  return greedy_decode(std::vector<Tokens>{source}, max_len).front();
}

template class Seq2Seq<float>;
template class Seq2Seq<double>;

// ------------------------------------------------------------ Optimizer

template <typename T>
double clip_global_norm(std::span<T> grad, double max_norm) {
  double sq = 0.0;
  for (T g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const T scale = static_cast<T>(max_norm / norm);
    for (T& g : grad) g *= scale;
  }
  return norm;
}

template double clip_global_norm<float>(std::span<float>, double);
template double clip_global_norm<double>(std::span<double>, double);

template <typename T>
Adam<T>::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, T(0)), v_(n, T(0)) {}

template <typename T>
void Adam<T>::step(std::span<T> params, std::span<const T> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T eps = static_cast<T>(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const T g = grad[i];
    m_[i] = b1 * m_[i] + (T(1) - b1) * g;
    v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
    params[i] -= step * m_[i] / (std::sqrt(v_[i]) + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

// ------------------------------------------------------------- Training

namespace {

struct Encoded {
  std::vector<std::vector<int>> src, tgt;
};

Encoded encode_all(const Model& model, const std::vector<Sample>& data) {
  Encoded e;
  e.src.reserve(data.size());
  e.tgt.reserve(data.size());
  for (const auto& s : data) {
    e.src.push_back(model.source_vocab().encode(s.source));
    e.tgt.push_back(model.target_vocab().encode(s.target));
  }
  return e;
}

// Shuffle, sort windows of 32 batches by length, cut, shuffle batch order.
std::vector<std::vector<std::size_t>> make_batches(const Encoded& e, int batch_size, Rng& rng) {
  std::vector<std::size_t> idx(e.src.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  const std::size_t B = static_cast<std::size_t>(batch_size);
  const std::size_t window = B * 32;
  for (std::size_t start = 0; start < idx.size(); start += window) {
    const auto first = idx.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      if (e.tgt[a].size() != e.tgt[b].size()) return e.tgt[a].size() < e.tgt[b].size();
      return e.src[a].size() < e.src[b].size();
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < idx.size(); start += B) {
    batches.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + B)));
  }
  rng.shuffle(batches);
  return batches;
}

Batch gather(const Encoded& e, const std::vector<std::size_t>& ids) {
  std::vector<const std::vector<int>*> srcs, tgts;
  srcs.reserve(ids.size());
  tgts.reserve(ids.size());
  for (std::size_t i : ids) {
    srcs.push_back(&e.src[i]);
    tgts.push_back(&e.tgt[i]);
  }
  return Batch::make(srcs, tgts);
}

}  // namespace

Model make_model(const ModelConfig& cfg, const std::vector<Sample>& train_set) {
  std::vector<const Tokens*> srcs, tgts;
  for (const auto& s : train_set) {
    srcs.push_back(&s.source);
    tgts.push_back(&s.target);
  }
  Model m(cfg, Vocab::build(srcs), Vocab::build(tgts));
  m.init_params(cfg.seed);
  return m;
}

int default_max_len(const std::vector<Sample>& train_set) {
  std::size_t longest = 0;
  for (const auto& s : train_set) longest = std::max(longest, s.target.size());
  return static_cast<int>(2 * longest + 2);
}

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw Error(ErrorKind::Usage, "train: empty training set");
  const ModelConfig& cfg = model.config();
  const Encoded data = encode_all(model, train_set);
  Rng rng(derive_seed(cfg.seed, 0x747261696eULL));
  Adam<float> adam(model.parameter_count(), cfg.learning_rate);
  Buffer<float> grad(model.parameter_count());

  TrainResult result;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    long tokens = 0;
    double tok_acc_sum = 0.0;
    std::size_t exact = 0;
    for (const auto& ids : make_batches(data, cfg.batch_size, rng)) {
      const Batch batch = gather(data, ids);
      std::fill(grad.begin(), grad.end(), 0.0f);
      const ForwardResult r = model.forward(batch, Mode::Train, &rng, &grad);
      const double norm = clip_global_norm<float>(grad, cfg.grad_clip_l2);
      if (!std::isfinite(r.loss) || !std::isfinite(norm)) {
        std::ostringstream os;
        os << "non-finite training signal at epoch " << epoch + 1 << " step " << result.steps
           << " (loss " << r.loss << ", gradient norm " << norm << ", batch of " << batch.size
           << ", target length " << batch.tgt_len << ")";
        throw Error(ErrorKind::NonFiniteLoss, os.str());
      }
      adam.step(model.params(), grad);
      ++result.steps;
      loss_sum += r.loss * static_cast<double>(r.tokens);
      tokens += r.tokens;
      for (int b = 0; b < batch.size; ++b) {
        const int len = batch.tgt_lengths[static_cast<std::size_t>(b)];
        int hits = 0;
        for (int t = 0; t < len; ++t) {
          const auto j = static_cast<std::size_t>(t) * static_cast<std::size_t>(batch.size) +
                         static_cast<std::size_t>(b);
          hits += r.predicted[j] == batch.tgt[j];
        }
        tok_acc_sum += static_cast<double>(hits) / len;
        exact += hits == len;
      }
      if (options.max_steps > 0 && result.steps >= options.max_steps) break;
    }
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.seed = cfg.seed;
    rec.loss = loss_sum / static_cast<double>(std::max(tokens, 1L));
    rec.token_acc = tok_acc_sum / static_cast<double>(train_set.size());
    rec.seq_acc = static_cast<double>(exact) / static_cast<double>(train_set.size());
    result.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (options.max_steps > 0 && result.steps >= options.max_steps) break;
  }
  return result;
}

double evaluate_loss(const Model& model, const std::vector<Sample>& data) {
  if (data.empty()) return 0.0;
  const Encoded e = encode_all(model, data);
  double loss_sum = 0.0;
  long tokens = 0;
  const std::size_t B = 256;
  for (std::size_t start = 0; start < data.size(); start += B) {
    std::vector<std::size_t> ids;
    for (std::size_t i = start; i < std::min(data.size(), start + B); ++i) ids.push_back(i);
    const ForwardResult r = model.forward(gather(e, ids), Mode::Eval, nullptr, nullptr);
    loss_sum += r.loss * static_cast<double>(r.tokens);
    tokens += r.tokens;
  }
  return loss_sum / static_cast<double>(tokens);
}

// ----------------------------------------------------------- Checkpoint

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::Format, "checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'S', 'E', 'M', 'L', 'I', 'N', 'K', '1'};

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  nlohmann::ordered_json header;
  header["config"] = nlohmann::ordered_json::parse(model.config().to_json());
  header["source_vocab"] = model.source_vocab().tokens();
  header["target_vocab"] = model.target_vocab().tokens();
  header["choices"] = {
      {"init", "uniform(-0.08,0.08)"},
      {"embedding_tying", "none"},
      {"decoder_init", "concat(final fwd, final bwd) of top encoder layer, h and c"},
      {"decoder_input", "previous target token embedding"},
      {"attention", "additive, scored with decoder output state"},
      {"output", "linear([decoder state; context])"},
  };
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  const auto& specs = model.layout().specs;
  put_u32(out, static_cast<std::uint32_t>(specs.size()));
  for (const auto& s : specs) {
    put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    put_u32(out, static_cast<std::uint32_t>(s.rows));
    put_u32(out, static_cast<std::uint32_t>(s.cols));
    out.append(reinterpret_cast<const char*>(model.params().data() + s.offset),
               s.size() * sizeof(float));
  }
  return out;
}

Model deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw Error(ErrorKind::Format, "not a semlink checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("checkpoint header: ") + e.what());
  }
  Model model(ModelConfig::from_json(header.at("config").dump()),
              Vocab::from_tokens(header.at("source_vocab").get<std::vector<Token>>()),
              Vocab::from_tokens(header.at("target_vocab").get<std::vector<Token>>()));
  const auto& specs = model.layout().specs;
  if (r.u32() != specs.size()) throw Error(ErrorKind::Format, "checkpoint tensor count mismatch");
  for (const auto& s : specs) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (name != s.name || rows != static_cast<std::uint32_t>(s.rows) ||
        cols != static_cast<std::uint32_t>(s.cols)) {
      throw Error(ErrorKind::Format, "checkpoint tensor '" + name + "' does not match the config");
    }
    r.floats(model.params().data() + s.offset, s.size());
  }
  if (!r.done()) throw Error(ErrorKind::Format, "trailing bytes after checkpoint");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace semlink::nn
