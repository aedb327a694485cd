// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs self-contained in a scratch directory; the directional
// reproductions train the full pipeline on the synthetic corpus.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iotzsl/contrastive.hpp"
#include "iotzsl/experiment.hpp"
#include "iotzsl/gan.hpp"
#include "iotzsl/loaders.hpp"
#include "iotzsl/openset.hpp"
#include "support/eq1_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace iotzsl;
namespace fs = std::filesystem;

#ifndef IOTZSL_SOURCE_DIR
#define IOTZSL_SOURCE_DIR "."
#endif

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
  std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void report_skip(int number, const std::string& name, const std::string& why) {
  std::printf("[SKIP] %2d. %s -- %s\n", number, name.c_str(), why.c_str());
  std::fflush(stdout);
}

Mat unit_rows(Rng& rng, int n, int d) {
  Mat m = randn(rng, n, d);
  l2_normalize_rows(m);
  return m;
}

// ---- criterion 1: gradient checks ------------------------------------------

bool gradcheck_contrastive(Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 3 + rng.uniform_int(6);
    const int n_b = 3 + rng.uniform_int(4);
    const int n_t = 2 + rng.uniform_int(2);
    const double tau = rng.uniform(0.15, 1.0);
    Mat e = unit_rows(rng, n_b, d);
    Mat t = unit_rows(rng, n_t, d);
    std::vector<int> labels(static_cast<size_t>(n_b));
    labels[0] = 0;
    labels[1] = 1;
    for (int i = 2; i < n_b; ++i) labels[static_cast<size_t>(i)] = rng.uniform_int(n_t);

    Mat ge, gt;
    supervised_contrastive_loss(e, labels, t, tau, &ge, &gt);
    Mat ge_num = testsupport::numeric_grad(
        e, [&](const Mat& ee) { return supervised_contrastive_loss(ee, labels, t, tau); });
    Mat gt_num = testsupport::numeric_grad(
        t, [&](const Mat& tt) { return supervised_contrastive_loss(e, labels, tt, tau); });
    if (testsupport::max_rel_err(ge, ge_num) > 1e-4) return false;
    if (testsupport::max_rel_err(gt, gt_num) > 1e-4) return false;
  }
  return true;
}

bool gradcheck_fusion(Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + rng.uniform_int(7);
    const int n_c = 1 + rng.uniform_int(5);
    CrossAttention ca = CrossAttention::init(d, rng);
    Mat tl = randn(rng, n_c, d), ta = randn(rng, n_c, d), probe = randn(rng, n_c, d);

    nn::Tape t;
    nn::ParamBag bag;
    nn::Var vtl = t.constant(tl);
    nn::Var out = fuse_prototypes_var(t, &bag, vtl, t.constant(ta), ca);
    nn::Var s = t.sum_all(t.mul_const(out, probe));
    t.backward(s);

    Mat grads[3];
    bag.for_each_grad(t, [&](Mat& p, const Mat& g) {
      if (&p == &ca.rho_q.W) grads[0] = g;
      if (&p == &ca.rho_k.W) grads[1] = g;
      if (&p == &ca.rho_v.W) grads[2] = g;
    });
    Mat* weights[3] = {&ca.rho_q.W, &ca.rho_k.W, &ca.rho_v.W};
    for (int w = 0; w < 3; ++w) {
      Mat num = testsupport::numeric_grad(*weights[w], [&](const Mat& ww) {
        Mat saved = *weights[w];
        *weights[w] = ww;
        const double v = dot_all(fuse_prototypes(tl, ta, ca), probe);
        *weights[w] = saved;
        return v;
      });
      if (testsupport::max_rel_err(grads[w], num, 1e-6) > 1e-4) return false;
    }
    Mat num_tl = testsupport::numeric_grad(
        tl, [&](const Mat& x) { return dot_all(fuse_prototypes(x, ta, ca), probe); });
    if (testsupport::max_rel_err(t.grad(vtl), num_tl, 1e-6) > 1e-4) return false;
  }
  return true;
}

// ---- criterion 4 helpers ----------------------------------------------------

bool detector_brute_force(Rng& rng) {
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + rng.uniform_int(5);
    const int n_classes = 2 + rng.uniform_int(3);
    const int n = n_classes * (3 + rng.uniform_int(10));
    Mat train = unit_rows(rng, n, d);
    std::vector<int> labels(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = i % n_classes;
    ClusterStore store = build_clusters(train, labels, 0.02 + rng.uniform(0.0, 0.3));
    Mat val = unit_rows(rng, 10, d);
    std::vector<int> val_labels(10);
    for (int i = 0; i < 10; ++i) val_labels[static_cast<size_t>(i)] = i % n_classes;
    calibrate(store, val, val_labels, 0.5 + rng.uniform(0.0, 0.5));

    Mat probes = unit_rows(rng, 6, d);
    for (int i = 0; i < probes.rows(); ++i) {
      Mat e(1, d);
      for (int j = 0; j < d; ++j) e(0, j) = probes(i, j);
      int q_oracle = 0;
      for (const auto& c : store.clusters) {
        std::vector<double> dist;
        for (int m = 0; m < c.members.rows(); ++m) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) {
            const double diff = e(0, j) - c.members(m, j);
            s += diff * diff;
          }
          dist.push_back(std::sqrt(s));
        }
        std::sort(dist.begin(), dist.end());
        if (dist[static_cast<size_t>(std::min(c.k, (int)dist.size()) - 1)] <= c.lambda)
          ++q_oracle;
      }
      if (cluster_votes(e, store) != q_oracle) return false;
    }
  }
  return true;
}

bool detector_retention(Rng& rng) {
  for (double p : {0.8, 0.75}) {
    Mat centers = unit_rows(rng, 3, 5);
    auto draw = [&](int n, Mat& m, std::vector<int>& lab) {
      m = Mat(n, 5);
      lab.resize(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const int c = i % 3;
        for (int j = 0; j < 5; ++j) m(i, j) = centers(c, j) + 0.3 * rng.gaussian();
        lab[static_cast<size_t>(i)] = c;
      }
      l2_normalize_rows(m);
    };
    Mat train, val;
    std::vector<int> tl, vl;
    draw(90, train, tl);
    draw(60, val, vl);
    ClusterStore store = build_clusters(train, tl, 0.08);
    calibrate(store, val, vl, p);
    std::map<int, int> kept, total;
    for (int i = 0; i < val.rows(); ++i) {
      Mat e(1, 5);
      for (int j = 0; j < 5; ++j) e(0, j) = val(i, j);
      const int c = vl[static_cast<size_t>(i)];
      ++total[c];
      if (kth_distance(e, *store.find(c)) <= store.find(c)->lambda) ++kept[c];
    }
    for (const auto& [c, n] : total)
      if (static_cast<double>(kept[c]) < p * n - 1e-9) return false;
  }
  return true;
}

bool detector_monotonicity(Rng& rng) {
  Mat train = unit_rows(rng, 60, 4);
  std::vector<int> labels(60);
  for (int i = 0; i < 60; ++i) labels[static_cast<size_t>(i)] = i % 3;
  ClusterStore store = build_clusters(train, labels, 0.1);
  calibrate(store, train, labels, 0.8);
  Mat probes = unit_rows(rng, 15, 4);
  auto base = detect_batch(probes, store);
  for (int trial = 0; trial < 30; ++trial) {
    ClusterStore up = store, down = store;
    for (auto& c : up.clusters) c.lambda += rng.uniform(0.0, 0.6);
    for (auto& c : down.clusters) c.lambda = std::max(0.0, c.lambda - rng.uniform(0.0, 0.6));
    auto u = detect_batch(probes, up);
    auto dn = detect_batch(probes, down);
    for (size_t i = 0; i < base.size(); ++i) {
      if (base[i] == Detection::seen && u[i] != Detection::seen) return false;
      if (base[i] == Detection::unseen && dn[i] != Detection::unseen) return false;
    }
  }
  return true;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  const fs::path src_dir = IOTZSL_SOURCE_DIR;
  const fs::path work = fs::absolute("acceptance_workdir");
  fs::remove_all(work);
  fs::create_directories(work);

  // ---- 1. gradient checks --------------------------------------------------
  {
    Rng rng(20250801);
    const bool a = gradcheck_contrastive(rng);
    const bool b = gradcheck_fusion(rng);
    report(1, "contrastive-loss and prototype-fusion gradients vs central differences (rtol 1e-4, 20 instances each)",
           a && b, a ? (b ? "" : "fusion failed") : "loss failed");
  }

  // ---- 2. loss equals the literal summation oracle --------------------------
  {
    Rng rng(101);
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      const int d = 2 + rng.uniform_int(7);
      const int n_b = 2 + rng.uniform_int(7);
      const int n_t = 2 + rng.uniform_int(3);
      const double tau = rng.uniform(0.1, 1.5);
      Mat e = unit_rows(rng, n_b, d);
      Mat t = unit_rows(rng, n_t, d);
      std::vector<int> labels(static_cast<size_t>(n_b));
      labels[0] = 0;
      labels[1] = 1;
      for (int i = 2; i < n_b; ++i) labels[static_cast<size_t>(i)] = rng.uniform_int(n_t);
      const double lib = supervised_contrastive_loss(e, labels, t, tau);
      const double oracle = testsupport::supcon_loss_oracle(e, labels, t, tau);
      worst = std::max(worst, std::fabs(lib - oracle));
      ok = std::fabs(lib - oracle) < 1e-6;
    }
    char detail[64];
    std::snprintf(detail, sizeof(detail), "max |lib-oracle| = %.2e over 100 batches", worst);
    report(2, "supervised contrastive loss equals the term-by-term oracle (1e-6)", ok, detail);
  }

  // ---- 3. adversarial-loss identities ---------------------------------------
  {
    Rng rng(5);
    const int x_dim = 6, d = 3, n = 8;
    Mat real = randn(rng, n, x_dim), fake = randn(rng, n, x_dim);
    Mat cond = randn(rng, n, d), alphas = rand_uniform(rng, n, 1, 0.0, 1.0);

    GanMlp const_critic(x_dim + d, {4}, 1, rng);
    for (auto& w : const_critic.weights()) w.fill(0.0);
    for (auto& b : const_critic.biases()) b.fill(0.0);
    const_critic.biases().back()(0, 0) = 2.5;
    const auto c_parts = wgan_loss_parts(const_critic, real, fake, cond, alphas, 10.0);
    const bool exact = c_parts.total() == -10.0;

    GanMlp unit_critic(x_dim + d, {}, 1, rng);
    unit_critic.weights()[0].fill(0.0);
    unit_critic.weights()[0](0, 0) = 1.0;
    unit_critic.biases()[0].fill(0.0);
    const auto u_parts = wgan_loss_parts(unit_critic, real, fake, cond, alphas, 10.0);
    const bool zero_pen = std::fabs(u_parts.penalty) < 1e-6;

    char detail[96];
    std::snprintf(detail, sizeof(detail), "constant critic total = %.17g, unit-gradient penalty = %.2e",
                  c_parts.total(), u_parts.penalty);
    report(3, "adversarial identities: constant critic gives -xi exactly; unit-gradient critic has zero penalty",
           exact && zero_pen, detail);
  }

  // ---- 4. detector properties ------------------------------------------------
  {
    Rng rng(23);
    const bool bf = detector_brute_force(rng);
    const bool ret = detector_retention(rng);
    const bool mono = detector_monotonicity(rng);
    report(4, "detector: brute-force equivalence (50 instances), per-class retention >= p, threshold monotonicity",
           bf && ret && mono,
           std::string(bf ? "" : "brute-force ") + (ret ? "" : "retention ") +
               (mono ? "" : "monotonicity"));
  }

  // ---- 5. harmonic-mean properties -------------------------------------------
  {
    Rng rng(7);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
      const double s = rng.uniform(1e-6, 1.0), u = rng.uniform(1e-6, 1.0);
      const double h = harmonic_mean_accuracy(s, u);
      ok = h >= std::min(s, u) - 1e-12 && h <= (s + u) / 2.0 + 1e-12;
      if (std::fabs(s - u) > 1e-9 && h >= (s + u) / 2.0) ok = false;
    }
    const double pinned = harmonic_mean_accuracy(0.8, 0.4);
    const bool exact = std::fabs(pinned - 8.0 / 15.0) < 1e-9;
    char detail[64];
    std::snprintf(detail, sizeof(detail), "ACC_H(0.8,0.4) = %.12f", pinned);
    report(5, "harmonic mean bounds over 1000 random pairs; ACC_H(0.8,0.4) = 8/15 within 1e-9",
           ok && exact, detail);
  }

  // ---- 6. windowing ------------------------------------------------------------
  {
    Rng rng(99);
    bool ok = true;
    // usc-had parameters: window 128, stride 64 on arbitrary lengths
    for (int trial = 0; trial < 200 && ok; ++trial) {
      const long T = 128 + rng.uniform_int(5000);
      Mat series(1, static_cast<int>(T));
      const auto ws = window_series(series, 128, 0.5, 0, Modality::imu);
      ok = static_cast<long>(ws.size()) == (T - 128) / 64 + 1;
    }
    report(6, "windowing count matches the closed form for the 1.28 s / 50% overlap parameters", ok);

    const fs::path usc_raw = fs::path("data") / "usc_had" / "raw";
    if (fs::exists(usc_raw)) {
      DatasetSpec spec;
      spec.name = "usc_had";
      spec.class_list = default_class_list("usc_had");
      spec.sample_rate = 100.0;
      spec.window_seconds = 1.28;
      spec.overlap_fraction = 0.5;
      spec.channels = 6;
      spec.root_path = "data";
      const auto windows = window_all(load_usc_had(spec), spec);
      char detail[64];
      std::snprintf(detail, sizeof(detail), "got %zu windows", windows.size());
      report(6, "full USC-HAD corpus yields 42,708 windows", windows.size() == 42708, detail);
    } else {
      report_skip(6, "full USC-HAD corpus yields 42,708 windows",
                  "real dataset not present under data/usc_had/raw");
    }
  }

  // ---- shared setup for the pipeline criteria ---------------------------------
  std::vector<std::string> overrides = {
      "run.out_root=\"" + (work / "runs").string() + "\"",
      "dataset.root=\"" + (work / "data").string() + "\"",
      "text.prompt_file=\"" + (src_dir / "prompts" / "synthetic.json").string() + "\"",
  };
  RunConfig cfg = RunConfig::load((src_dir / "configs" / "synthetic.json").string(), overrides);
  PreparedData data = run_prepare(cfg);

  // ---- 7. determinism -----------------------------------------------------------
  {
    const std::string ckpt =
        (fs::path(fold_dir(cfg, data.folds[0].fold_index)) / "model.ckpt").string();
    run_train(cfg, data, data.folds[0]);
    const std::string first = read_file_bytes(ckpt);
    run_train(cfg, data, data.folds[0]);
    const std::string second = read_file_bytes(ckpt);
    const bool ok = !first.empty() && first == second;
    report(7, "two `train` runs with identical config+seed produce bit-identical checkpoints", ok);
  }

  // ---- 8-10. ablation directions -------------------------------------------------
  {
    const auto rows = run_ablation_matrix(cfg, data);  // order: -PE, -OS, -DA, full
    const MetricsReport& no_pe = rows[0];
    const MetricsReport& no_os = rows[1];
    const MetricsReport& no_da = rows[2];
    const MetricsReport& full = rows[3];

    bool os_ok = true;
    std::string os_detail;
    for (size_t k = 0; k < full.folds.size(); ++k) {
      const double with_os = full.folds[k].gzsl.acc_harmonic;
      const double without = no_os.folds[k].gzsl.acc_harmonic;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "fold %zu: %.3f vs %.3f; ", k, with_os, without);
      os_detail += buf;
      if (with_os < 1.5 * without) os_ok = false;
    }
    report(8, "open-set detection direction: ACC_H(with) >= 1.5 x ACC_H(without) on every fold",
           os_ok, os_detail);

    const double acc_u_da = full.aggregate.at("acc_unseen").mean;
    const double acc_u_noda = no_da.aggregate.at("acc_unseen").mean;
    char da_detail[96];
    std::snprintf(da_detail, sizeof(da_detail), "ACC_U %.4f (with) vs %.4f (without)", acc_u_da,
                  acc_u_noda);
    report(9, "augmentation direction: ACC_U with D.A. >= ACC_U without D.A. - 1 point",
           acc_u_da >= acc_u_noda - 0.01, da_detail);

    const double h_fused = full.aggregate.at("acc_harmonic").mean;
    const double h_template = no_pe.aggregate.at("acc_harmonic").mean;
    char pe_detail[96];
    std::snprintf(pe_detail, sizeof(pe_detail), "ACC_H %.4f (fused) vs %.4f (template)", h_fused,
                  h_template);
    report(10, "prompt-engineering direction: fused prototypes ACC_H >= fixed-template ACC_H (mean)",
           h_fused >= h_template, pe_detail);
  }

  // ---- 11. main detector vs MSP ----------------------------------------------------
  {
    BaselineReport baselines = run_baselines(cfg, data);
    const double ours = baselines.f1_aggregate.at("ours").mean;
    const double msp = baselines.f1_aggregate.at("msp").mean;
    char detail[64];
    std::snprintf(detail, sizeof(detail), "ours %.4f vs msp %.4f", ours, msp);
    report(11, "detection direction: main detector weighted F1 >= MSP F1 (mean over folds)",
           ours >= msp, detail);
  }

  // ---- 12. full-data targets ----------------------------------------------------------
  {
    const bool pamap2_present = fs::exists(fs::path("data") / "pamap2" / "raw");
    const bool usc_present = fs::exists(fs::path("data") / "usc_had" / "raw");
    if (!pamap2_present && !usc_present) {
      report_skip(12,
                  "full-data targets (PAMAP2 ACC_H ~62.1%, open-set F1 ~87.9%; USC-HAD ACC_H "
                  "~61.1%)",
                  "real datasets not present; see README for running against local copies");
    } else {
      // informational, never build-failing: deviations are documented instead
      std::printf("[INFO] 12. run the full-data comparison via the CLI on configs/pamap2.json / "
                  "configs/usc_had.json; deviations are documented, not failing\n");
    }
  }

  std::printf("\n%d criterion failure(s)\n", g_failures);
  fs::remove_all(work);
  return g_failures == 0 ? 0 : 1;
}
