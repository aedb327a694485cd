#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "iotzsl/llm_client.hpp"
#include "iotzsl/loaders.hpp"
#include "iotzsl/text_branch.hpp"
#include "support/gradcheck.hpp"

using namespace iotzsl;
using namespace iotzsl::nn;
namespace fs = std::filesystem;
using testsupport::allclose;
using testsupport::numeric_grad;

namespace {

std::shared_ptr<ToyTextEncoder> toy_encoder(int width = 16, int d = 16) {
  ToyTextEncoder::Config cfg;
  cfg.width = width;
  cfg.embed_dim = d;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.context_limit = 24;
  cfg.vocab_size = 64;
  cfg.seed = 77;
  return std::make_shared<ToyTextEncoder>(cfg);
}

HardPromptSet tiny_prompts() {
  HardPromptSet set;
  set.descriptions["sitting"] = "stationary posture with near zero accelerometer variance";
  set.descriptions["walking forward"] =
      "periodic gait with accelerometer readings around zero along the walking direction";
  set.descriptions["running"] = "high frequency strides with large vertical acceleration";
  return set;
}

}  // namespace

TEST_CASE("soft prompt layout follows the middle-insertion rule") {
  auto enc = toy_encoder();
  Rng rng(5);

  // one-token class, M=8: sequence length 9, class token at row 4
  auto state8 = SoftPromptState::init(8, enc->token_width(), rng);
  const auto ids = enc->tokenize("sitting");
  REQUIRE(ids.size() == 1);
  const Mat cls_emb = enc->token_embedding(ids);
  Mat seq = build_soft_prompt("sitting", state8, *enc);
  CHECK(seq.rows() == 9);
  for (int j = 0; j < seq.cols(); ++j) {
    CHECK(seq(4, j) == cls_emb(0, j));
    CHECK(seq(0, j) == state8.context(0, j));
    CHECK(seq(8, j) == state8.context(7, j));
  }

  // M=0: bare class tokens
  auto state0 = SoftPromptState::init(0, enc->token_width(), rng);
  Mat bare = build_soft_prompt("sitting", state0, *enc);
  CHECK(allclose(bare, cls_emb, 0, 0));

  // M=2, two-token class: l1, c1, c2, l2
  auto state2 = SoftPromptState::init(2, enc->token_width(), rng);
  const auto ids2 = enc->tokenize("walking forward");
  REQUIRE(ids2.size() == 2);
  const Mat cls2 = enc->token_embedding(ids2);
  Mat seq2 = build_soft_prompt("walking forward", state2, *enc);
  REQUIRE(seq2.rows() == 4);
  for (int j = 0; j < seq2.cols(); ++j) {
    CHECK(seq2(0, j) == state2.context(0, j));
    CHECK(seq2(1, j) == cls2(0, j));
    CHECK(seq2(2, j) == cls2(1, j));
    CHECK(seq2(3, j) == state2.context(1, j));
  }
}

TEST_CASE("encoder is frozen, deterministic, unit-norm") {
  auto enc = toy_encoder();
  const Mat a = enc->encode_text("running");
  const Mat b = enc->encode_text("running");
  CHECK(allclose(a, b, 0, 0));  // bit-identical
  CHECK(std::fabs(row_norm(a, 0) - 1.0) < 1e-6);

  auto enc2 = toy_encoder();  // same seed -> same weights
  CHECK(allclose(enc2->encode_text("running"), a, 0, 0));

  // identical descriptions give identical embeddings
  HardPromptSet set;
  set.descriptions["a"] = "same words here";
  set.descriptions["b"] = "same words here";
  CHECK(allclose(encode_hard_prompt("a", set, *enc), encode_hard_prompt("b", set, *enc), 0, 0));

  // missing description names the class
  CHECK_THROWS_WITH_AS(encode_hard_prompt("missing", set, *enc),
                       doctest::Contains("missing"), Error);
}

TEST_CASE("over-long descriptions encode like their truncated token sequence") {
  auto enc = toy_encoder();
  std::string long_text = "word";
  for (int i = 0; i < 100; ++i) long_text += " filler" + std::to_string(i);
  auto ids = enc->tokenize(long_text);
  CHECK(static_cast<int>(ids.size()) == enc->context_limit());
  const Mat direct = enc->encode_text(long_text);
  const Mat manual = enc->encode(enc->token_embedding(ids));
  CHECK(allclose(direct, manual, 0, 0));
}

TEST_CASE("cross-attention fusion: single class and row-stochastic attention") {
  // identity rho maps: with one class, A = [[1]] and T = rho_v(t_l) = t_l
  CrossAttention ca;
  ca.rho_q = Linear::identity_init(2);
  ca.rho_k = Linear::identity_init(2);
  ca.rho_v = Linear::identity_init(2);

  Mat tl(1, 2);
  tl(0, 0) = 0.3; tl(0, 1) = -0.7;
  Mat ta(1, 2, 0.5);
  Mat fused = fuse_prototypes(tl, ta, ca);
  CHECK(allclose(fused, tl, 1e-12, 0));

  // random inputs: every attention row sums to 1
  Rng rng(9);
  const int n_c = 5, d = 4;
  CrossAttention car = CrossAttention::init(d, rng);
  Mat tlr = randn(rng, n_c, d), tar = randn(rng, n_c, d);
  Tape t;
  Var q = car.rho_q.apply(t, nullptr, t.constant(tlr));
  Var k = car.rho_k.apply(t, nullptr, t.constant(tar));
  Var att = t.softmax_rows(t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(d)));
  const Mat& a = t.val(att);
  for (int i = 0; i < n_c; ++i) {
    double s = 0.0;
    for (int j = 0; j < n_c; ++j) {
      CHECK(a(i, j) >= 0.0);
      s += a(i, j);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross-attention 2x2 fusion matches hand-evaluated softmax") {
  // identity rho, t_l = t_a = I2, d_K = 2:
  // QK^T = I, scaled by 1/sqrt(2); each row softmax over {1/sqrt(2), 0}
  CrossAttention ca;
  ca.rho_q = Linear::identity_init(2);
  ca.rho_k = Linear::identity_init(2);
  ca.rho_v = Linear::identity_init(2);
  Mat eye = Mat::identity(2);

  const double z = std::exp(1.0 / std::sqrt(2.0));
  const double p_diag = z / (z + 1.0);
  const double p_off = 1.0 / (z + 1.0);

  Mat fused = fuse_prototypes(eye, eye, ca);  // A * I = A
  CHECK(fused(0, 0) == doctest::Approx(p_diag).epsilon(1e-12));
  CHECK(fused(0, 1) == doctest::Approx(p_off).epsilon(1e-12));
  CHECK(fused(1, 0) == doctest::Approx(p_off).epsilon(1e-12));
  CHECK(fused(1, 1) == doctest::Approx(p_diag).epsilon(1e-12));
}

TEST_CASE("fuse_prototypes rejects row mismatch") {
  Rng rng(3);
  CrossAttention ca = CrossAttention::init(3, rng);
  CHECK_THROWS_AS(fuse_prototypes(randn(rng, 2, 3), randn(rng, 4, 3), ca), Error);
}

TEST_CASE("fusion gradients match finite differences (rho maps and inputs)") {
  Rng rng(17);
  const int n_c = 3, d = 5;
  CrossAttention ca = CrossAttention::init(d, rng);
  Mat tl = randn(rng, n_c, d), ta = randn(rng, n_c, d), probe = randn(rng, n_c, d);

  auto loss_with = [&]() {
    Tape t;
    ParamBag bag;
    Var vtl = t.constant(tl);
    Var out = fuse_prototypes_var(t, &bag, vtl, t.constant(ta), ca);
    Var s = t.sum_all(t.mul_const(out, probe));
    return std::tuple<double, Mat, Mat>{t.val(s)(0, 0), [&] {
      t.backward(s);
      Mat g;
      bag.for_each_grad(t, [&](Mat& p, const Mat& gr) {
        if (&p == &ca.rho_q.W) g = gr;
      });
      return g;
    }(), t.grad(vtl)};
  };

  auto [val, grad_q, grad_tl] = loss_with();
  (void)val;

  Mat numeric_q = numeric_grad(ca.rho_q.W, [&](const Mat& w) {
    Mat saved = ca.rho_q.W;
    ca.rho_q.W = w;
    Mat out = fuse_prototypes(tl, ta, ca);
    ca.rho_q.W = saved;
    return dot_all(out, probe);
  });
  CHECK(allclose(grad_q, numeric_q, 1e-4, 1e-7));

  Mat numeric_tl = numeric_grad(tl, [&](const Mat& x) {
    Mat out = fuse_prototypes(x, ta, ca);
    return dot_all(out, probe);
  });
  CHECK(allclose(grad_tl, numeric_tl, 1e-4, 1e-7));
}

TEST_CASE("soft prompt receives gradients through the frozen encoder") {
  auto enc = toy_encoder(12, 12);
  Rng rng(23);
  SoftPromptState state = SoftPromptState::init(4, enc->token_width(), rng);
  Mat probe = randn(rng, 1, enc->embed_dim());

  Tape t;
  ParamBag bag;
  Var seq = build_soft_prompt_var(t, &bag, "sitting", state, *enc);
  Var emb = enc->encode_seq(t, seq);
  Var s = t.sum_all(t.mul_const(emb, probe));
  t.backward(s);

  Mat analytic;
  bag.for_each_grad(t, [&](Mat& p, const Mat& g) {
    if (&p == &state.context) analytic = g;
  });
  REQUIRE(!analytic.empty());

  Mat numeric = numeric_grad(state.context, [&](const Mat& ctx) {
    Mat saved = state.context;
    state.context = ctx;
    Mat seq2 = build_soft_prompt("sitting", state, *enc);
    Mat out = enc->encode(seq2);
    state.context = saved;
    return dot_all(out, probe);
  }, 1e-5);
  CHECK(allclose(analytic, numeric, 1e-4, 1e-6));
}

TEST_CASE("text branch prototypes: determinism and unit norms") {
  auto enc = toy_encoder();
  Rng rng(31);
  std::vector<std::string> classes = {"sitting", "walking forward", "running"};
  TextBranch tb = TextBranch::create(enc, classes, tiny_prompts(), 4, rng);

  Mat p1 = tb.prototypes();
  Mat p2 = tb.prototypes();
  CHECK(allclose(p1, p2, 0, 0));  // pure function of state
  CHECK(p1.rows() == 3);
  for (int i = 0; i < p1.rows(); ++i)
    CHECK(std::fabs(row_norm(p1, i) - 1.0) < 1e-9);
}

TEST_CASE("template prototypes are deterministic unit rows") {
  auto enc = toy_encoder();
  std::vector<std::string> classes = {"sitting", "running"};
  Mat p = template_prototypes(*enc, classes);
  CHECK(p.rows() == 2);
  for (int i = 0; i < 2; ++i) CHECK(std::fabs(row_norm(p, i) - 1.0) < 1e-9);
  CHECK(allclose(p, template_prototypes(*enc, classes), 0, 0));
}

TEST_CASE("file-backed encoder loads the template archive") {
  const auto path = fs::temp_directory_path() / "iotzsl_textenc.bin";
  std::vector<std::string> vocab = {"<unk>", "sitting", "walking", "running", "human", "action",
                                    "the", "of"};
  FileTextEncoder::write_template(path.string(), 16, 1, 2, 16, 12, vocab, 99);
  FileTextEncoder enc(path.string());
  CHECK(enc.embed_dim() == 16);
  CHECK(enc.context_limit() == 12);
  const Mat e = enc.encode_text("walking running");
  CHECK(std::fabs(row_norm(e, 0) - 1.0) < 1e-9);
  // unknown words map to the unk token
  CHECK(enc.tokenize("zzzz")[0] == 0);
  CHECK(enc.tokenize("sitting")[0] == 1);
  fs::remove(path);
}

TEST_CASE("hard prompt generation: file wins, llm fallback, errors") {
  const auto dir = fs::temp_directory_path() / "iotzsl_prompts";
  fs::create_directories(dir);
  const auto file = dir / "prompts.json";
  fs::remove(file);

  std::vector<std::string> classes = {"sitting", "running"};

  // no provider, no file -> configuration error
  CHECK_THROWS_AS(generate_hard_prompts(classes, nullptr, file.string()), Error);

  // local fake provider
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const std::string prompt = body["messages"][0]["content"];
    CHECK(prompt.find("distinguish class") != std::string::npos);
    nlohmann::json answer = {
        {"sitting", "still body, flat accelerometer traces"},
        {"running", "fast periodic strides, high accelerometer energy"}};
    nlohmann::json payload = {
        {"choices", {{{"message", {{"role", "assistant"}, {"content", answer.dump()}}}}}}};
    res.set_content(payload.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LlmConfig cfg;
  cfg.host = "127.0.0.1";
  cfg.port = port;
  LlmClient client(cfg);

  HardPromptSet generated = generate_hard_prompts(classes, &client, file.string());
  CHECK(generated.provenance == HardPromptSet::Provenance::llm_generated);
  CHECK(generated.descriptions.size() == 2);
  CHECK(fs::exists(file));

  server.stop();
  server_thread.join();

  // provider now unreachable: cached file is used (manual edits authoritative)
  HardPromptSet edited = HardPromptSet::from_file(file.string());
  edited.descriptions["sitting"] = "manually edited description";
  edited.save(file.string());
  HardPromptSet reloaded = generate_hard_prompts(classes, &client, file.string());
  CHECK(reloaded.descriptions.at("sitting") == "manually edited description");

  fs::remove_all(dir);
}

#ifdef IOTZSL_SOURCE_DIR
TEST_CASE("shipped prompt files cover their datasets") {
  const fs::path src = IOTZSL_SOURCE_DIR;
  struct Entry { const char* file; const char* dataset; };
  for (const Entry& e : {Entry{"usc_had.json", "usc_had"}, Entry{"pamap2.json", "pamap2"},
                         Entry{"mmfi.json", "mmfi"}, Entry{"synthetic.json", "synthetic"}}) {
    CAPTURE(e.file);
    HardPromptSet set = HardPromptSet::from_file((src / "prompts" / e.file).string());
    for (const auto& cls : default_class_list(e.dataset)) {
      CAPTURE(cls);
      CHECK(!set.description_for(cls).empty());
    }
  }
  // the walking-forward description carries the physics hint about the
  // accelerometer staying near zero along the walking direction
  HardPromptSet usc = HardPromptSet::from_file((src / "prompts" / "usc_had.json").string());
  const std::string desc = usc.description_for("Walking Forward");
  CHECK(desc.find("around zero") != std::string::npos);
  CHECK(desc.find("walking direction") != std::string::npos);
}
#endif

TEST_CASE("prompt file round trip keeps one entry per class") {
  const auto file = fs::temp_directory_path() / "iotzsl_prompt_rt.json";
  HardPromptSet set = tiny_prompts();
  set.save(file.string());
  HardPromptSet back = HardPromptSet::from_file(file.string());
  CHECK(back.descriptions.size() == set.descriptions.size());
  CHECK(back.descriptions.at("running") == set.descriptions.at("running"));
  fs::remove(file);
}
