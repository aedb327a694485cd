#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iotzsl/nn.hpp"

namespace iotzsl {

// Frozen text encoder consumed as a black box: tokenizer, token embedding
// table, and a sequence encoder producing one unit-norm vector per input.
// Implementations must be deterministic; nothing here is ever trained.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual int embed_dim() const = 0;     // output dimension d
  virtual int token_width() const = 0;   // token embedding width
  virtual int context_limit() const = 0;

  // Content tokens only; sequences longer than context_limit are truncated.
  virtual std::vector<int> tokenize(const std::string& text) const = 0;
  virtual Mat token_embedding(const std::vector<int>& ids) const = 0;  // [L x width]

  // Differentiable path for learnable inputs; encoder weights stay constants.
  virtual nn::Var encode_seq(nn::Tape& t, nn::Var seq) const = 0;

  // Convenience wrappers running a local tape.
  Mat encode(const Mat& seq) const;
  Mat encode_text(const std::string& text) const;
};

// Deterministic toy backend: a frozen transformer with weights generated from
// a seed and a hashing word tokenizer. Small enough for CI and property tests.
class ToyTextEncoder : public TextEncoder {
 public:
  struct Config {
    int width = 32;
    int embed_dim = 32;
    int depth = 2;
    int heads = 2;
    int context_limit = 77;
    int vocab_size = 512;
    uint64_t seed = 20240901;
  };

  explicit ToyTextEncoder(const Config& cfg);

  int embed_dim() const override { return cfg_.embed_dim; }
  int token_width() const override { return cfg_.width; }
  int context_limit() const override { return cfg_.context_limit; }
  std::vector<int> tokenize(const std::string& text) const override;
  Mat token_embedding(const std::vector<int>& ids) const override;
  nn::Var encode_seq(nn::Tape& t, nn::Var seq) const override;

 private:
  Config cfg_;
  Mat token_table_;  // [vocab x width]
  Mat pos_table_;    // [context_limit x width]
  mutable nn::TransformerStack stack_;
  mutable nn::Linear readout_;
};

// Backend loading pre-trained weights from a tensor archive (same transformer
// family, word-level vocabulary stored alongside the weights).
class FileTextEncoder : public TextEncoder {
 public:
  explicit FileTextEncoder(const std::string& weights_path);

  int embed_dim() const override { return embed_dim_; }
  int token_width() const override { return width_; }
  int context_limit() const override { return context_limit_; }
  std::vector<int> tokenize(const std::string& text) const override;
  Mat token_embedding(const std::vector<int>& ids) const override;
  nn::Var encode_seq(nn::Tape& t, nn::Var seq) const override;

  // Writes a randomly initialized weights archive; used to exercise the
  // loader and as a template for converted weights.
  static void write_template(const std::string& path, int width, int depth, int heads,
                             int embed_dim, int context_limit,
                             const std::vector<std::string>& vocab, uint64_t seed);

 private:
  int width_ = 0, embed_dim_ = 0, context_limit_ = 0;
  std::map<std::string, int> vocab_;
  int unk_id_ = 0;
  Mat token_table_;
  Mat pos_table_;
  mutable nn::TransformerStack stack_;
  mutable nn::Linear readout_;
};

// The M learnable context vectors shared across classes. The class token is
// inserted after the first ceil(M/2) vectors.
struct SoftPromptState {
  Mat context;  // [M x token_width]

  int size() const { return context.rows(); }
  int leading() const { return (context.rows() + 1) / 2; }

  static SoftPromptState init(int m, int token_width, Rng& rng, double sigma = 0.02);
};

// Prompt embedding sequence for one class: leading context vectors, the
// class's token embeddings, trailing context vectors. Class tokens that
// overflow the encoder's context budget are truncated with a warning.
Mat build_soft_prompt(const std::string& class_name, const SoftPromptState& state,
                      const TextEncoder& encoder);
nn::Var build_soft_prompt_var(nn::Tape& t, nn::ParamBag* bag, const std::string& class_name,
                              SoftPromptState& state, const TextEncoder& encoder);

// Natural-language class descriptions backing the auxiliary prompt.
struct HardPromptSet {
  enum class Provenance { file, llm_generated };

  std::map<std::string, std::string> descriptions;
  Provenance provenance = Provenance::file;

  const std::string& description_for(const std::string& class_name) const;
  static HardPromptSet from_file(const std::string& path);
  void save(const std::string& path) const;
};

// t_a(c) = encode(tokenize(description(c))); unit norm.
Mat encode_hard_prompt(const std::string& class_name, const HardPromptSet& prompts,
                       const TextEncoder& encoder);

// The three learnable maps of the cross-attention fusion.
struct CrossAttention {
  nn::Linear rho_q, rho_k, rho_v;  // each d -> d

  static CrossAttention init(int d, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

// T = softmax(Q K^T / sqrt(d)) V with Q = rho_q(T_l), K = rho_k(T_a),
// V = rho_v(T_l); rows of T_l / T_a are per-class embeddings over the same
// ordered class set. Returns the raw attention output (no normalization).
Mat fuse_prototypes(const Mat& t_learn, const Mat& t_aux, CrossAttention& params);
nn::Var fuse_prototypes_var(nn::Tape& t, nn::ParamBag* bag, nn::Var t_learn, nn::Var t_aux,
                            CrossAttention& params);

// Full learnable text branch: recomputes prototypes from the current soft
// prompt and attention parameters (training), or produces a frozen snapshot.
struct TextBranch {
  std::shared_ptr<TextEncoder> encoder;
  std::vector<std::string> class_names;  // ordered; row i is class id i
  SoftPromptState soft_prompt;
  CrossAttention cross_attn;
  Mat aux_embeddings;  // [N_c x d] frozen t_a rows

  static TextBranch create(std::shared_ptr<TextEncoder> enc,
                           std::vector<std::string> class_names,
                           const HardPromptSet& prompts, int soft_prompt_len, Rng& rng);

  // Unit-norm prototype rows [N_c x d]; bag==nullptr evaluates frozen.
  nn::Var prototypes_var(nn::Tape& t, nn::ParamBag* bag);
  Mat prototypes();

  void visit(const nn::ParamVisitor& f);
};

// Prototypes from a fixed template ("The human action of [CLASS]"), the
// no-prompt-engineering path; unit-norm rows.
Mat template_prototypes(const TextEncoder& encoder, const std::vector<std::string>& class_names,
                        const std::string& template_text = "The human action of [CLASS]");

}  // namespace iotzsl
