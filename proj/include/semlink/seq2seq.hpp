// SPDX-License-Identifier: Apache-2.0
//
// Attention-based recurrent encoder-decoder with hand-written
// backpropagation.
//
// Encoder: stacked bidirectional LSTM over source embeddings. Decoder: a
// single LSTM layer fed the previous target token, initialised with the
// concatenated final (h, c) of the top encoder layer. At each step the
// decoder state s_t scores every source position with
//   e_ti = v . tanh(W_dec s_t + W_enc h_i),
// the softmax over unpadded positions weights the context vector, and
// [s_t; context] is projected onto the target vocabulary.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "semlink/common.hpp"
#include "semlink/rng.hpp"

namespace semlink::nn {

/// Allocator with a fixed 64-byte base alignment. Vectorised reductions
/// split their work at alignment boundaries, so a fixed base keeps results
/// bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocab();

  /// Reserved symbols first, then every distinct corpus token in sorted order.
  static Vocab build(const std::vector<const Tokens*>& sequences);
  static Vocab from_tokens(std::vector<Token> tokens);

  int index(const Token& token) const;  // kUnk when absent
  const Token& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  const std::vector<Token>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  /// Stops at the first end-of-sequence index.
  Tokens decode(std::span<const int> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<Token> tokens_;
  std::unordered_map<Token, int> lookup_;
};

/// Reserved token strings; "<unk>" doubles as the masking token of
/// entity rules.
inline constexpr const char* kReservedTokens[Vocab::kReserved] = {"<pad>", "<s>", "</s>",
                                                                  "<unk>"};

struct ModelConfig {
  int embed_dim = 64;
  int enc_hidden_per_dir = 32;
  int enc_layers = 2;
  int dec_hidden = 64;
  int attn_dim = 64;
  double dropout_rate = 0.1;
  double teacher_forcing_rate = 0.5;
  double learning_rate = 2e-3;
  double grad_clip_l2 = 5.0;
  int batch_size = 128;
  int max_epochs = 64;
  std::uint64_t seed = 1;

  static ModelConfig desk();
  static ModelConfig full();

  /// Throws Error(Usage) on a violated invariant.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  /// Overlays keys present in `text` onto `base`.
  static ModelConfig merge_json(ModelConfig base, const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Mode { Train, Eval };

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

/// Index of a model's parameter tensors inside one flat buffer.
struct ParamLayout {
  std::vector<ParamSpec> specs;
  std::size_t total = 0;

  static ParamLayout build(const ModelConfig& cfg, int src_vocab, int tgt_vocab);
  const ParamSpec& find(const std::string& name) const;
};

/// Sum of tensor sizes computed from the shape formulas alone.
std::size_t closed_form_parameter_count(const ModelConfig& cfg, int src_vocab,
                                        int tgt_vocab);

/// Source/target index sequences, time-major and padded.
struct Batch {
  int size = 0;
  int src_len = 0;
  int tgt_len = 0;                   // includes the end-of-sequence step
  std::vector<int> src;              // src_len * size, [t * size + b]
  std::vector<int> src_lengths;
  std::vector<int> tgt;              // tgt_len * size, gold outputs, kPad beyond
  std::vector<int> tgt_lengths;      // target tokens + 1 (end of sequence)

  static Batch make(std::span<const std::vector<int>* const> sources,
                    std::span<const std::vector<int>* const> targets);
};

struct ForwardResult {
  double loss = 0.0;          // mean cross-entropy per target token
  long tokens = 0;
  std::vector<int> predicted;  // tgt_len * size argmax ids under the fed inputs
};

/// Inspection hook: attention weights (src_len x size) for one decoder step.
using AttentionObserver = std::function<void(int step, const Eigen::MatrixXd& weights)>;

template <typename T>
class Seq2Seq {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Seq2Seq(ModelConfig cfg, Vocab src, Vocab tgt);
  ~Seq2Seq();
  Seq2Seq(const Seq2Seq& other);
  Seq2Seq& operator=(const Seq2Seq& other);
  Seq2Seq(Seq2Seq&&) noexcept;
  Seq2Seq& operator=(Seq2Seq&&) noexcept;

  /// Seeded uniform initialisation in [-0.08, 0.08].
  void init_params(std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  const Vocab& source_vocab() const noexcept { return src_vocab_; }
  const Vocab& target_vocab() const noexcept { return tgt_vocab_; }
  const ParamLayout& layout() const noexcept { return layout_; }

  Buffer<T>& params() noexcept { return params_; }
  const Buffer<T>& params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  /// Loss over the batch. In Train mode `rng` drives dropout and the
  /// per-sample teacher-forcing coin; Eval mode feeds gold tokens and is
  /// deterministic. When `grad` is non-null it receives d(loss)/d(params),
  /// accumulated into its current contents.
  ForwardResult forward(const Batch& batch, Mode mode, Rng* rng, Buffer<T>* grad,
                        const AttentionObserver& observer = {}) const;

  /// Greedy decoding of many sources at once; output excludes end-of-sequence.
  std::vector<Tokens> greedy_decode(const std::vector<Tokens>& sources, int max_len) const;
  Tokens greedy_decode(const Tokens& source, int max_len) const;

 private:
  struct Workspace;

  // Shared core of forward() and greedy_decode(). With `greedy` set the
  // decoder feeds back its own argmax and stops once every row has emitted
  // end-of-sequence.
  ForwardResult run(const Batch& batch, double p_drop, double teacher_forcing, Rng* rng,
                    Buffer<T>* grad, const AttentionObserver& observer,
                    bool greedy) const;

  ModelConfig cfg_;
  Vocab src_vocab_;
  Vocab tgt_vocab_;
  ParamLayout layout_;
  Buffer<T> params_;
  mutable std::unique_ptr<Workspace> ws_;
};

extern template class Seq2Seq<float>;
extern template class Seq2Seq<double>;

using Model = Seq2Seq<float>;

struct MetricsRecord {
  double loss = 0.0;
  double token_acc = 0.0;
  double seq_acc = 0.0;
  int epoch = 0;
  std::uint64_t seed = 0;
};

/// Rescales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::span<T> grad, double max_norm);

template <typename T>
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(std::span<T> params, std::span<const T> grad);
  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Buffer<T> m_, v_;
};

struct TrainOptions {
  /// Called after every epoch with its record.
  std::function<void(const MetricsRecord&)> on_epoch;
  /// Optional step cap (0 = none), used by sanity runs.
  long max_steps = 0;
};

struct TrainResult {
  std::vector<MetricsRecord> epochs;
  long steps = 0;
};

/// Builds vocabularies over `train_set` and returns a freshly initialised model.
Model make_model(const ModelConfig& cfg, const std::vector<Sample>& train_set);

/// Fixed-epoch training: seeded length-bucketed shuffles, forward/backward,
/// global-norm clipping, Adam. Throws Error(NonFiniteLoss).
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const TrainOptions& options = {});

/// 2 x longest target + 2.
int default_max_len(const std::vector<Sample>& train_set);

/// Eval-mode (gold-fed) mean per-token loss over a dataset.
double evaluate_loss(const Model& model, const std::vector<Sample>& data);

// Checkpoints: "SEMLINK1" magic, u32 format version, u32 header length,
// JSON header (config, vocabularies, modelling choices), u32 tensor count,
// then per tensor: u32 name length, name, u32 rows, u32 cols, float32 data.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace semlink::nn
