// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5-7 run the full desk-scale recipes and print the
// per-seed numbers they gate on.
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fusdom/checkpoint.hpp"
#include "fusdom/experiment.hpp"
#include "fusdom/head.hpp"
#include "fusdom/rng.hpp"
#include "oracles.hpp"

using namespace fusdom;
namespace fs = std::filesystem;

namespace {

struct AcceptanceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw AcceptanceFailure(what);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "fusdom_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Matrix log_normalise_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
  const double tol = 1e-4;
  using oracles::max_grad_rel_err;
  using oracles::random_matrix;
  using oracles::random_matrix_away_from;

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed({seed, 11}));
    Matrix g34 = random_matrix(rng, 3, 4);
    Matrix g33 = random_matrix(rng, 3, 3);

    auto check = [&](const char* op, double err) {
      require(err < tol, std::string(op) + " gradient error " +
                             format_double_shortest(err) + " at seed " +
                             std::to_string(seed));
    };
    check("matmul", max_grad_rel_err(
                        [&](std::vector<Tensor>& in) {
                          return sum_all(mul(matmul(in[0], in[1]), Tensor::constant(g33)));
                        },
                        {random_matrix(rng, 3, 4), random_matrix(rng, 4, 3)}));
    check("add_bias", max_grad_rel_err(
                          [&](std::vector<Tensor>& in) {
                            return sum_all(mul(add_bias(in[0], in[1]), Tensor::constant(g34)));
                          },
                          {random_matrix(rng, 3, 4), random_matrix(rng, 1, 4)}));
    check("relu", max_grad_rel_err(
                      [&](std::vector<Tensor>& in) {
                        return sum_all(mul(relu(in[0]), Tensor::constant(g34)));
                      },
                      {random_matrix_away_from(rng, 3, 4)}));
    check("gelu", max_grad_rel_err(
                      [&](std::vector<Tensor>& in) {
                        return sum_all(mul(gelu(in[0]), Tensor::constant(g34)));
                      },
                      {random_matrix(rng, 3, 4)}));
    check("layer_norm",
          max_grad_rel_err(
              [&](std::vector<Tensor>& in) {
                return sum_all(mul(layer_norm(in[0], in[1], in[2]), Tensor::constant(g34)));
              },
              {random_matrix(rng, 3, 4), random_matrix(rng, 1, 4),
               random_matrix(rng, 1, 4)}));
    check("softmax_rows", max_grad_rel_err(
                              [&](std::vector<Tensor>& in) {
                                return sum_all(mul(softmax_rows(in[0]), Tensor::constant(g34)));
                              },
                              {random_matrix(rng, 3, 4)}));
    check("log_softmax_rows",
          max_grad_rel_err(
              [&](std::vector<Tensor>& in) {
                return sum_all(mul(log_softmax_rows(in[0]), Tensor::constant(g34)));
              },
              {random_matrix(rng, 3, 4)}));
    {
      Matrix p = random_matrix(rng, 3, 4);
      Matrix t = p.array() + 0.5;
      Matrix w = random_matrix(rng, 3, 4, 0.0, 1.0);
      check("l1_loss", max_grad_rel_err(
                           [&](std::vector<Tensor>& in) { return l1_loss(in[0], in[1], w); },
                           {p, t}));
    }

    // encode: all backbone parameters plus the input frames
    {
      BackboneConfig cfg{8, 2, 1, 12, 8, 5};
      ModelSnapshot snapshot = init_snapshot(cfg, derive_seed({seed, 13}));
      snapshot.set_trainable(true);
      Tensor frames = Tensor::param(random_matrix(rng, 3, cfg.frame_dim), "frames");
      Matrix g = random_matrix(rng, 3, cfg.d_model);
      std::vector<Tensor> leaves = snapshot.params();
      leaves.push_back(frames);
      check("encode", oracles::max_param_grad_rel_err(
                          [&] {
                            return sum_all(mul(encode(snapshot, frames).values,
                                               Tensor::constant(g)));
                          },
                          leaves));
    }
    // cda + head_forward: head parameters plus the student representations
    {
      BackboneConfig cfg{8, 2, 1, 12, 8, 5};
      CdaParams params = CdaParams::init(cfg, derive_seed({seed, 17}));
      Tensor s = Tensor::param(random_matrix(rng, 3, 8), "S");
      Matrix t = random_matrix(rng, 3, 8);
      std::vector<Tensor> leaves = params.params();
      leaves.push_back(s);
      check("cda", oracles::max_param_grad_rel_err(
                       [&] {
                         return mean_all(cda(RepMatrix{s},
                                             RepMatrix{Tensor::constant(t)}, params)
                                             .values);
                       },
                       leaves));
      check("head_forward",
            oracles::max_param_grad_rel_err(
                [&] {
                  return mean_all(head_forward(RepMatrix{s},
                                               RepMatrix{Tensor::constant(t)}, params)
                                      .F.values);
                },
                leaves));
    }
    // ctc through its log-normalised input
    {
      const auto L = static_cast<Index>(3 + rng.below(3));
      std::vector<int> labels;
      const auto u = 1 + rng.below(2);
      for (std::uint64_t k = 0; k < u; ++k) {
        labels.push_back(1 + static_cast<int>(rng.below(3)));
      }
      if (L < static_cast<Index>(labels.size()) + label_repeats(labels)) labels.resize(1);
      Matrix logits = random_matrix(rng, L, 4);
      check("ctc_loss", max_grad_rel_err(
                            [&](std::vector<Tensor>& in) {
                              return ctc_loss(log_softmax_rows(in[0]), labels);
                            },
                            {logits}));
    }
  }
}

// ---------------------------------------------------------------- criterion 2

Matrix cda_reference(const Matrix& s, const Matrix& t, const CdaParams& p) {
  const Index L = s.rows();
  const Index dh = p.wq.front().cols();
  Matrix merged(L, static_cast<Index>(p.n_heads) * dh);
  for (int m = 0; m < p.n_heads; ++m) {
    const auto mi = static_cast<std::size_t>(m);
    Matrix q = t * p.wq[mi].value();
    Matrix k = s * p.wk[mi].value();
    Matrix v = s * p.wv[mi].value();
    for (Index i = 0; i < L; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(L));
      double mx = -1e300;
      for (Index j = 0; j < L; ++j) {
        double dot = 0.0;
        for (Index c = 0; c < dh; ++c) dot += q(i, c) * k(j, c);
        scores[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (double& sc : scores) {
        sc = std::exp(sc - mx);
        z += sc;
      }
      for (Index c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (Index j = 0; j < L; ++j) {
          acc += scores[static_cast<std::size_t>(j)] / z * v(j, c);
        }
        merged(i, static_cast<Index>(m) * dh + c) = acc;
      }
    }
  }
  return merged * p.wo.value();
}

void criterion_cda_oracle() {
  int done = 0;
  for (std::uint64_t seed = 0; done < 100; ++seed) {
    Rng rng(derive_seed({seed, 23}));
    const int heads[] = {1, 2, 4};
    const int m = heads[seed % 3];
    const int d = (seed % 2 == 0) ? 8 : 16;
    const auto L = static_cast<Index>(2 + seed % 7);
    BackboneConfig cfg{d, m, 1, 12, 16, 5};
    CdaParams params = CdaParams::init(cfg, seed);
    Matrix s = oracles::random_matrix(rng, L, d);
    Matrix t = oracles::random_matrix(rng, L, d);
    CdaProbe probe;
    Matrix got = cda(RepMatrix{Tensor::constant(s)}, RepMatrix{Tensor::constant(t)},
                     params, &probe)
                     .values.value();
    const double diff = (got - cda_reference(s, t, params)).cwiseAbs().maxCoeff();
    require(diff < 1e-10, "cda differs from the double-loop oracle by " +
                              format_double_shortest(diff));
    for (const Matrix& attn : probe.attention) {
      for (Index i = 0; i < attn.rows(); ++i) {
        require(std::abs(attn.row(i).sum() - 1.0) <= 1e-12,
                "attention row sum off by more than 1e-12");
      }
    }
    ++done;
  }
}

// ---------------------------------------------------------------- criterion 3

void criterion_frozen_teacher() {
  const ExperimentConfig cfg;  // desk-scale defaults
  DomainSpec spec = make_domain("shifted", cfg.data.master_seed, cfg.data.knobs);
  std::vector<Matrix> data;
  for (int i = 0; i < cfg.data.pretrain_n_target; ++i) {
    data.push_back(
        sample_utterance(spec, derive_seed({3, static_cast<std::uint64_t>(i)}), false)
            .frames);
  }
  ModelSnapshot prev = init_snapshot(cfg.backbone, 2024);
  prev.stage_tag = "source";

  const fs::path before = work_dir() / "teacher_before.ckpt";
  save_checkpoint(prev, before);

  StagePlan plan;
  plan.domain_id = "shifted";
  plan.strategy = Strategy::FusDom;
  plan.epochs = cfg.cp.epochs;
  plan.batch_size = cfg.cp.batch_size;
  plan.lr = cfg.cp.lr;
  plan.mask_rate = cfg.mask_rate;
  plan.seed = 99;
  // the stage itself asserts teacher == f^(i-1) at every epoch
  StageResult stage = run_cp_stage(prev, data, plan);
  require(!stage.epoch_loss.empty(), "FusDom stage ran no epochs");

  const fs::path after = work_dir() / "teacher_after.ckpt";
  save_checkpoint(prev, after);
  require(read_bytes(before) == read_bytes(after),
          "teacher template bytes changed across the stage");
  require(!params_bit_identical(stage.snapshot, prev), "student failed to move");
}

// ---------------------------------------------------------------- criterion 4

double ctc_bruteforce(const Matrix& lp, const std::vector<int>& labels) {
  const Index L = lp.rows();
  const auto V = static_cast<int>(lp.cols());
  std::vector<int> path(static_cast<std::size_t>(L), 0);
  double total = 0.0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    for (int p : path) {
      if (p != prev && p != 0) collapsed.push_back(p);
      prev = p;
    }
    if (collapsed == labels) {
      double s = 0.0;
      for (Index t = 0; t < L; ++t) s += lp(t, path[static_cast<std::size_t>(t)]);
      total += std::exp(s);
    }
    Index k = L - 1;
    while (k >= 0) {
      if (++path[static_cast<std::size_t>(k)] < V) break;
      path[static_cast<std::size_t>(k)] = 0;
      --k;
    }
    if (k < 0) break;
  }
  return -std::log(total);
}

std::int64_t edit_distance_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::int64_t>> d(n + 1, std::vector<std::int64_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      d[i][j] = std::min({d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d[n][m];
}

void criterion_ctc_oracle() {
  int done = 0;
  for (std::uint64_t seed = 0; done < 200; ++seed) {
    Rng rng(derive_seed({seed, 29}));
    const auto L = static_cast<Index>(1 + rng.below(6));
    const auto V = static_cast<Index>(2 + rng.below(3));
    std::vector<int> labels;
    const auto u = 1 + rng.below(3);
    for (std::uint64_t k = 0; k < u; ++k) {
      labels.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(V - 1))));
    }
    if (L < static_cast<Index>(labels.size()) + label_repeats(labels)) continue;
    Matrix lp = log_normalise_rows(oracles::random_matrix(rng, L, V, -2.0, 2.0));
    const double got = ctc_loss(Tensor::constant(lp), labels).item();
    const double expect = ctc_bruteforce(lp, labels);
    require(std::abs(got - expect) < 1e-8,
            "ctc_loss differs from enumeration by " +
                format_double_shortest(std::abs(got - expect)));
    ++done;
  }
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(derive_seed({seed, 31}));
    auto make_seq = [&rng] {
      const auto n = rng.below(13);
      std::vector<int> s;
      for (std::uint64_t i = 0; i < n; ++i) {
        s.push_back(1 + static_cast<int>(rng.below(5)));
      }
      return s;
    };
    const auto ref = make_seq(), hyp = make_seq();
    const EvalResult r = wer(ref, hyp);
    require(r.substitutions + r.insertions + r.deletions == edit_distance_oracle(ref, hyp),
            "wer edit counts disagree with the DP oracle at seed " + std::to_string(seed));
  }
}

// ---------------------------------------------------------- criteria 5, 6, 7

struct WerKey {
  std::string arm;
  std::uint64_t seed;
  std::string mode;
  std::string order;
  std::string domain;
  bool operator<(const WerKey& o) const {
    return std::tie(arm, seed, mode, order, domain) <
           std::tie(o.arm, o.seed, o.mode, o.order, o.domain);
  }
};

std::map<WerKey, double> wer_table(const ExperimentReport& report) {
  std::map<WerKey, double> table;
  for (const ReportRow& r : report.rows) {
    require(r.status == "ok", "arm " + r.arm + " seed " + std::to_string(r.seed) +
                                  " failed: " + r.status);
    table[{r.arm, r.seed, r.mode, r.cp_order, r.eval_domain}] = r.eval.wer;
  }
  return table;
}

void criterion_recipe_r1() {
  ExperimentConfig cfg;
  cfg.recipe = "r1";
  cfg.out_dir = (work_dir() / "r1").string();
  RunResult result = run_experiment(cfg);
  require(result.all_ok, "r1 had failed arms");
  auto table = wer_table(result.report);
  const std::string target = cfg.data.target_presets.front();

  for (const std::string mode : {"e2e", "probe"}) {
    int wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed : cfg.seeds) {
      const double fus = table.at({"FusDom", seed, mode, target, target});
      const double van = table.at({"VanillaCP", seed, mode, target, target});
      const double nocp = table.at({"NoCP", seed, mode, "-", target});
      const bool win = fus <= van && fus <= nocp;
      wins += win ? 1 : 0;
      detail << "    seed " << seed << " [" << mode << "] FusDom " << std::setprecision(4)
             << fus << " vs Vanilla " << van << " vs NoCP " << nocp
             << (win ? "  <= both" : "  WORSE") << "\n";
    }
    std::cout << detail.str();
    require(wins >= 3, "r1 " + mode + " mode: FusDom best on only " +
                           std::to_string(wins) + "/4 seeds");
  }
}

void criterion_recipe_r2() {
  ExperimentConfig cfg;
  cfg.recipe = "r2";
  cfg.out_dir = (work_dir() / "r2").string();
  RunResult result = run_experiment(cfg);
  require(result.all_ok, "r2 had failed arms");
  auto table = wer_table(result.report);
  const std::string target = cfg.data.target_presets.front();
  const std::string& source = cfg.data.source_preset;

  int wins = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const double before = table.at({"NoCP", seed, "e2e", "-", source});
    const double fus_delta = table.at({"FusDom", seed, "e2e", target, source}) - before;
    const double van_delta = table.at({"VanillaCP", seed, "e2e", target, source}) - before;
    const bool win = fus_delta <= van_delta;
    wins += win ? 1 : 0;
    std::cout << "    seed " << seed << " [e2e] delta FusDom " << std::setprecision(4)
              << fus_delta << " vs Vanilla " << van_delta << (win ? "  retained" : "  WORSE")
              << "\n";
  }
  require(wins >= 3, "r2: FusDom forgetting delta smaller on only " +
                         std::to_string(wins) + "/4 seeds");
}

void criterion_recipe_r3() {
  ExperimentConfig cfg;
  cfg.recipe = "r3";
  cfg.arms = {"VanillaCP", "FusDom"};
  cfg.out_dir = (work_dir() / "r3").string();
  RunResult result = run_experiment(cfg);
  require(result.all_ok, "r3 had failed arms");
  auto table = wer_table(result.report);
  const std::string& source = cfg.data.source_preset;
  const std::string& t0 = cfg.data.target_presets[0];
  const std::string& t1 = cfg.data.target_presets[1];

  for (const std::string order : {t0 + "->" + t1, t1 + "->" + t0}) {
    int wins = 0;
    for (std::uint64_t seed : cfg.seeds) {
      auto mean3 = [&](const std::string& arm) {
        double acc = 0.0;
        for (const std::string& domain : {source, t0, t1}) {
          acc += table.at({arm, seed, "e2e", order, domain});
        }
        return acc / 3.0;
      };
      const double fus = mean3("FusDom");
      const double van = mean3("VanillaCP");
      const bool win = fus <= van;
      wins += win ? 1 : 0;
      std::cout << "    order " << order << " seed " << seed << " mean-of-3 FusDom "
                << std::setprecision(4) << fus << " vs Vanilla " << van
                << (win ? "" : "  WORSE") << "\n";
    }
    require(wins >= 3, "r3 order " + order + ": FusDom mean better on only " +
                           std::to_string(wins) + "/4 seeds");
  }
}

// ---------------------------------------------------------------- criterion 8

ExperimentConfig tiny_recipe_config(const std::string& recipe, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.out_dir = out.string();
  cfg.backbone = BackboneConfig{16, 2, 1, 24, 32, 16};
  cfg.data.knobs.min_tokens = 2;
  cfg.data.knobs.max_tokens = 4;
  cfg.data.pretrain_n_source = 10;
  cfg.data.pretrain_n_target = 8;
  cfg.data.train_n = 8;
  cfg.data.dev_n = 2;
  cfg.data.test_n = 4;
  cfg.pretrain = PhaseConfig{2, 4, 5e-4};
  cfg.cp = PhaseConfig{2, 4, 5e-4};
  cfg.finetune = PhaseConfig{3, 4, 1e-3};
  cfg.seeds = {1};
  cfg.recipe = recipe;
  return cfg;
}

void criterion_reproducibility() {
  for (const std::string recipe : {"r1", "r2", "r3"}) {
    const fs::path out = work_dir() / ("repro_" + recipe);
    ExperimentConfig cfg = tiny_recipe_config(recipe, out);
    RunResult first = run_experiment(cfg);
    const auto csv = read_bytes(first.csv_path);
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& entry : fs::recursive_directory_iterator(out / "checkpoints")) {
      if (entry.is_regular_file()) files[entry.path().string()] = read_bytes(entry.path());
    }
    for (const auto& entry : fs::directory_iterator(out / "datasets")) {
      files[entry.path().string()] = read_bytes(entry.path());
    }
    RunResult second = run_experiment(cfg);
    require(read_bytes(second.csv_path) == csv,
            recipe + ": report table changed between identical runs");
    for (const auto& [path, bytes] : files) {
      require(read_bytes(path) == bytes, recipe + ": " + path + " changed between runs");
    }
  }
}

// ---------------------------------------------------------------- criterion 9

void criterion_serialization() {
  BackboneConfig cfg{16, 2, 1, 24, 32, 6};
  ModelSnapshot snapshot = init_snapshot(cfg, 7);
  snapshot.stage_tag = "source";
  const fs::path a = work_dir() / "ser_a.ckpt";
  const fs::path b = work_dir() / "ser_b.ckpt";
  save_checkpoint(snapshot, a);
  save_checkpoint(load_checkpoint(a), b);
  require(read_bytes(a) == read_bytes(b), "save/load/save is not byte-identical");

  const auto original = read_bytes(a);
  Rng rng(571);
  int detected = 0;
  for (int i = 0; i < 200; ++i) {
    auto bytes = original;
    const auto pos = static_cast<std::size_t>(rng.below(bytes.size()));
    bytes[pos] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    const fs::path bad = work_dir() / "ser_bad.ckpt";
    std::ofstream out(bad, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
      load_checkpoint(bad);
    } catch (const IoError&) {
      ++detected;
    }
  }
  require(detected == 200,
          "corruption fuzz: only " + std::to_string(detected) + "/200 detected");

  DomainSpec spec = make_domain("source", 404);
  CorpusSizes sizes{5, 3, 2, 2};
  CorpusPaths p1 = build_corpus(spec, sizes, 404, work_dir() / "regen1");
  CorpusPaths p2 = build_corpus(spec, sizes, 404, work_dir() / "regen2");
  require(read_bytes(p1.pretrain) == read_bytes(p2.pretrain) &&
              read_bytes(p1.train) == read_bytes(p2.train) &&
              read_bytes(p1.dev) == read_bytes(p2.dev) &&
              read_bytes(p1.test) == read_bytes(p2.test),
          "dataset regeneration is not byte-identical");
}

struct Criterion {
  int id;
  std::string name;
  double budget_sec;
  std::function<void()> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite: all differentiable ops, rel err < 1e-4, 20 seeds", 60.0,
       criterion_gradients},
      {2, "cda vs brute-force oracle, 100 instances, 1e-10", 10.0, criterion_cda_oracle},
      {3, "frozen-teacher contract over a full default FusDom stage", 900.0,
       criterion_frozen_teacher},
      {4, "ctc vs path enumeration (200) and wer vs DP oracle (500)", 30.0,
       criterion_ctc_oracle},
      {5, "recipe r1: FusDom <= both baselines on >= 3/4 seeds, e2e and probe", 900.0,
       criterion_recipe_r1},
      {6, "recipe r2: FusDom forgetting delta <= VanillaCP on >= 3/4 seeds", 900.0,
       criterion_recipe_r2},
      {7, "recipe r3: FusDom mean WER <= VanillaCP for both orders, >= 3/4 seeds", 1500.0,
       criterion_recipe_r3},
      {8, "reproducibility: byte-identical tables and checkpoints on rerun", 300.0,
       criterion_reproducibility},
      {9, "serialization: round-trip identity, 200/200 corruption fuzz", 60.0,
       criterion_serialization},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      c.body();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = e.what();
      ++failures;
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    if (verdict == "PASS" && secs > c.budget_sec) {
      verdict = "FAIL";
      detail = "over time budget (" + format_double_shortest(secs) + " s > " +
               format_double_shortest(c.budget_sec) + " s)";
      ++failures;
    }
    std::cout << "[" << c.id << "] " << c.name << " ... " << verdict << " ("
              << std::fixed << std::setprecision(1) << secs << " s)";
    if (!detail.empty()) std::cout << "  -- " << detail;
    std::cout << "\n" << std::defaultfloat;
  }
  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) + " criteria failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}
