#include "iotzsl/text_branch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iotzsl/archive.hpp"

#include <json.hpp>

using nlohmann::json;
using namespace iotzsl::nn;

namespace iotzsl {

Mat TextEncoder::encode(const Mat& seq) const {
  Tape t;
  Var out = encode_seq(t, t.constant(seq));
  return t.val(out);
}

Mat TextEncoder::encode_text(const std::string& text) const {
  return encode(token_embedding(tokenize(text)));
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

Mat rows_from_table(const Mat& table, const std::vector<int>& ids) {
  Mat out(static_cast<int>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    IOTZSL_REQUIRE(ids[i] >= 0 && ids[i] < table.rows(), ErrKind::validation,
                   "token id out of range");
    for (int j = 0; j < table.cols(); ++j) out(static_cast<int>(i), j) = table(ids[i], j);
  }
  return out;
}

// Shared forward: add positions, run the frozen stack, mean-pool, project,
// normalize onto the unit sphere.
Var encode_embedded(Tape& t, Var seq, const Mat& pos_table, TransformerStack& stack,
                    Linear& readout, int context_limit) {
  const int L = t.val(seq).rows();
  IOTZSL_REQUIRE(L >= 1, ErrKind::validation, "encode: empty token sequence");
  IOTZSL_REQUIRE(L <= context_limit, ErrKind::validation, "encode: sequence exceeds context limit");
  Var x = t.add(seq, t.constant(slice_rows(pos_table, 0, L)));
  x = stack.apply(t, nullptr, x);
  Mat pool(1, L, 1.0 / L);
  Var pooled = t.matmul(t.constant(pool), x);
  Var projected = readout.apply(t, nullptr, pooled);
  return t.l2normalize_rows(projected);
}

}  // namespace

ToyTextEncoder::ToyTextEncoder(const Config& cfg) : cfg_(cfg) {
  Rng rng(cfg_.seed);
  token_table_ = randn(rng, cfg_.vocab_size, cfg_.width, 0.35);
  pos_table_ = randn(rng, cfg_.context_limit, cfg_.width, 0.10);
  stack_ = TransformerStack(cfg_.width, cfg_.depth, cfg_.heads, rng);
  readout_ = Linear(cfg_.width, cfg_.embed_dim, rng);
}

std::vector<int> ToyTextEncoder::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) >= cfg_.context_limit) break;
    const uint64_t h = fnv1a64(w.data(), w.size());
    ids.push_back(static_cast<int>(h % static_cast<uint64_t>(cfg_.vocab_size)));
  }
  return ids;
}

Mat ToyTextEncoder::token_embedding(const std::vector<int>& ids) const {
  return rows_from_table(token_table_, ids);
}

Var ToyTextEncoder::encode_seq(Tape& t, Var seq) const {
  return encode_embedded(t, seq, pos_table_, stack_, readout_, cfg_.context_limit);
}

FileTextEncoder::FileTextEncoder(const std::string& weights_path) {
  TensorArchive ar = TensorArchive::load(weights_path);
  const json meta = json::parse(ar.blob("meta"));
  width_ = meta.at("width").get<int>();
  embed_dim_ = meta.at("embed_dim").get<int>();
  context_limit_ = meta.at("context_limit").get<int>();
  const int depth = meta.at("depth").get<int>();
  const int heads = meta.at("heads").get<int>();

  const auto vocab = meta.at("vocab").get<std::vector<std::string>>();
  for (size_t i = 0; i < vocab.size(); ++i) vocab_[vocab[i]] = static_cast<int>(i);
  unk_id_ = meta.value("unk_id", 0);

  token_table_ = ar.tensor("token_table");
  pos_table_ = ar.tensor("pos_table");
  IOTZSL_REQUIRE(token_table_.cols() == width_ && pos_table_.rows() == context_limit_,
                 ErrKind::io, "text encoder weights: table shape mismatch");

  Rng throwaway(0);
  stack_ = TransformerStack(width_, depth, heads, throwaway);
  readout_ = Linear(width_, embed_dim_, throwaway);
  stack_.visit("stack", [&ar](const std::string& name, Mat& m) {
    const Mat& src = ar.tensor(name);
    IOTZSL_REQUIRE(src.rows() == m.rows() && src.cols() == m.cols(), ErrKind::io,
                   "text encoder weights: shape mismatch for " + name);
    m = src;
  });
  readout_.visit("readout", [&ar](const std::string& name, Mat& m) { m = ar.tensor(name); });
}

void FileTextEncoder::write_template(const std::string& path, int width, int depth, int heads,
                                     int embed_dim, int context_limit,
                                     const std::vector<std::string>& vocab, uint64_t seed) {
  Rng rng(seed);
  TensorArchive ar;
  ar.tensors["token_table"] = randn(rng, static_cast<int>(vocab.size()), width, 0.35);
  ar.tensors["pos_table"] = randn(rng, context_limit, width, 0.10);
  TransformerStack stack(width, depth, heads, rng);
  stack.visit("stack", [&ar](const std::string& name, Mat& m) { ar.tensors[name] = m; });
  Linear readout(width, embed_dim, rng);
  readout.visit("readout", [&ar](const std::string& name, Mat& m) { ar.tensors[name] = m; });

  json meta;
  meta["width"] = width;
  meta["depth"] = depth;
  meta["heads"] = heads;
  meta["embed_dim"] = embed_dim;
  meta["context_limit"] = context_limit;
  meta["vocab"] = vocab;
  meta["unk_id"] = 0;
  ar.blobs["meta"] = meta.dump();
  ar.save(path);
}

std::vector<int> FileTextEncoder::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) >= context_limit_) break;
    auto it = vocab_.find(w);
    ids.push_back(it == vocab_.end() ? unk_id_ : it->second);
  }
  return ids;
}

Mat FileTextEncoder::token_embedding(const std::vector<int>& ids) const {
  return rows_from_table(token_table_, ids);
}

Var FileTextEncoder::encode_seq(Tape& t, Var seq) const {
  return encode_embedded(t, seq, pos_table_, stack_, readout_, context_limit_);
}

SoftPromptState SoftPromptState::init(int m, int token_width, Rng& rng, double sigma) {
  IOTZSL_REQUIRE(m >= 0, ErrKind::validation, "soft prompt length must be >= 0");
  SoftPromptState s;
  s.context = m == 0 ? Mat(0, token_width) : randn(rng, m, token_width, sigma);
  return s;
}

namespace {

// Class token embeddings, truncated so that M + class tokens fit the budget.
Mat class_token_rows(const std::string& class_name, const SoftPromptState& state,
                     const TextEncoder& encoder) {
  std::vector<int> ids = encoder.tokenize(class_name);
  IOTZSL_REQUIRE(!ids.empty(), ErrKind::validation,
                 "class name tokenizes to no tokens: '" + class_name + "'");
  const int budget = encoder.context_limit() - state.size();
  IOTZSL_REQUIRE(budget >= 1, ErrKind::config, "soft prompt leaves no room for the class token");
  if (static_cast<int>(ids.size()) > budget) {
    warn("class tokens for '" + class_name + "' overflow the context budget; truncating to " +
         std::to_string(budget));
    ids.resize(static_cast<size_t>(budget));
  }
  return encoder.token_embedding(ids);
}

}  // namespace

Mat build_soft_prompt(const std::string& class_name, const SoftPromptState& state,
                      const TextEncoder& encoder) {
  const Mat cls = class_token_rows(class_name, state, encoder);
  if (state.size() == 0) return cls;
  const int lead = state.leading();
  return concat_rows({slice_rows(state.context, 0, lead), cls,
                      slice_rows(state.context, lead, state.size())});
}

Var build_soft_prompt_var(Tape& t, ParamBag* bag, const std::string& class_name,
                          SoftPromptState& state, const TextEncoder& encoder) {
  Var cls = t.constant(class_token_rows(class_name, state, encoder));
  if (state.size() == 0) return cls;
  Var ctx = bag ? bag->use(t, state.context) : t.constant(state.context);
  const int lead = state.leading();
  return t.concat_rows({t.slice_rows(ctx, 0, lead), cls, t.slice_rows(ctx, lead, state.size())});
}

const std::string& HardPromptSet::description_for(const std::string& class_name) const {
  auto it = descriptions.find(class_name);
  IOTZSL_REQUIRE(it != descriptions.end() && !it->second.empty(), ErrKind::config,
                 "no hard-prompt description for class '" + class_name + "'");
  return it->second;
}

HardPromptSet HardPromptSet::from_file(const std::string& path) {
  std::ifstream f(path);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot open prompt file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw Error(ErrKind::io, "prompt file is not valid JSON: " + path + " (" + e.what() + ")");
  }
  HardPromptSet set;
  set.provenance = Provenance::file;
  for (auto it = j.begin(); it != j.end(); ++it)
    set.descriptions[it.key()] = it.value().get<std::string>();
  return set;
}

void HardPromptSet::save(const std::string& path) const {
  json j;
  for (const auto& [k, v] : descriptions) j[k] = v;
  std::ofstream f(path, std::ios::trunc);
  IOTZSL_REQUIRE(f.good(), ErrKind::io, "cannot write prompt file: " + path);
  f << j.dump(2) << '\n';
}

Mat encode_hard_prompt(const std::string& class_name, const HardPromptSet& prompts,
                       const TextEncoder& encoder) {
  return encoder.encode_text(prompts.description_for(class_name));
}

CrossAttention CrossAttention::init(int d, Rng& rng) {
  CrossAttention ca;
  ca.rho_q = Linear(d, d, rng);
  ca.rho_k = Linear(d, d, rng);
  ca.rho_v = Linear(d, d, rng);
  return ca;
}

void CrossAttention::visit(const std::string& prefix, const ParamVisitor& f) {
  rho_q.visit(prefix + ".rho_q", f);
  rho_k.visit(prefix + ".rho_k", f);
  rho_v.visit(prefix + ".rho_v", f);
}

Var fuse_prototypes_var(Tape& t, ParamBag* bag, Var t_learn, Var t_aux, CrossAttention& params) {
  const Mat& tl = t.val(t_learn);
  const Mat& ta = t.val(t_aux);
  IOTZSL_REQUIRE(tl.rows() == ta.rows(), ErrKind::validation,
                 "fuse_prototypes: row-count mismatch (" + std::to_string(tl.rows()) + " vs " +
                     std::to_string(ta.rows()) + ")");
  IOTZSL_REQUIRE(tl.cols() == params.rho_q.in_dim() && ta.cols() == params.rho_k.in_dim(),
                 ErrKind::validation, "fuse_prototypes: dimension mismatch with rho maps");
  Var q = params.rho_q.apply(t, bag, t_learn);
  Var k = params.rho_k.apply(t, bag, t_aux);
  Var v = params.rho_v.apply(t, bag, t_learn);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(t.val(k).cols()));
  Var att = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv_sqrt_dk));
  return t.matmul(att, v);
}

Mat fuse_prototypes(const Mat& t_learn, const Mat& t_aux, CrossAttention& params) {
  Tape t;
  Var out = fuse_prototypes_var(t, nullptr, t.constant(t_learn), t.constant(t_aux), params);
  return t.val(out);
}

TextBranch TextBranch::create(std::shared_ptr<TextEncoder> enc,
                              std::vector<std::string> class_names,
                              const HardPromptSet& prompts, int soft_prompt_len, Rng& rng) {
  IOTZSL_REQUIRE(enc != nullptr, ErrKind::config, "text branch needs an encoder");
  IOTZSL_REQUIRE(!class_names.empty(), ErrKind::config, "text branch needs class names");
  TextBranch tb;
  tb.encoder = std::move(enc);
  tb.class_names = std::move(class_names);
  tb.soft_prompt = SoftPromptState::init(soft_prompt_len, tb.encoder->token_width(), rng);
  tb.cross_attn = CrossAttention::init(tb.encoder->embed_dim(), rng);
  tb.aux_embeddings = Mat(static_cast<int>(tb.class_names.size()), tb.encoder->embed_dim());
  for (size_t i = 0; i < tb.class_names.size(); ++i) {
    const Mat t_a = encode_hard_prompt(tb.class_names[i], prompts, *tb.encoder);
    for (int j = 0; j < t_a.cols(); ++j) tb.aux_embeddings(static_cast<int>(i), j) = t_a(0, j);
  }
  return tb;
}

Var TextBranch::prototypes_var(Tape& t, ParamBag* bag) {
  std::vector<Var> rows;
  rows.reserve(class_names.size());
  for (const auto& name : class_names) {
    Var seq = build_soft_prompt_var(t, bag, name, soft_prompt, *encoder);
    rows.push_back(encoder->encode_seq(t, seq));
  }
  Var t_learn = t.concat_rows(rows);
  Var t_aux = t.constant(aux_embeddings);
  Var fused = fuse_prototypes_var(t, bag, t_learn, t_aux, cross_attn);
  return t.l2normalize_rows(fused);
}

Mat TextBranch::prototypes() {
  Tape t;
  Var out = prototypes_var(t, nullptr);
  return t.val(out);
}

void TextBranch::visit(const ParamVisitor& f) {
  f("text.soft_prompt", soft_prompt.context);
  cross_attn.visit("text.cross_attn", f);
}

Mat template_prototypes(const TextEncoder& encoder, const std::vector<std::string>& class_names,
                        const std::string& template_text) {
  Mat out(static_cast<int>(class_names.size()), encoder.embed_dim());
  for (size_t i = 0; i < class_names.size(); ++i) {
    std::string text = template_text;
    const auto pos = text.find("[CLASS]");
    if (pos != std::string::npos) text.replace(pos, 7, class_names[i]);
    const Mat e = encoder.encode_text(text);
    for (int j = 0; j < e.cols(); ++j) out(static_cast<int>(i), j) = e(0, j);
  }
  l2_normalize_rows(out);
  return out;
}

}  // namespace iotzsl
