// Experiment front-end: data generation, pre-training, continued
// pre-training, fine-tuning, evaluation, full recipes, and report
// aggregation.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fusdom/checkpoint.hpp"
#include "fusdom/experiment.hpp"
#include "fusdom/rng.hpp"

namespace fs = std::filesystem;
using namespace fusdom;

namespace {

ExperimentConfig load_config(const std::string& config_path, const std::string& out_dir,
                             const std::vector<std::string>& arms,
                             std::uint64_t seed_override, bool has_seed,
                             const std::string& recipe) {
  ExperimentConfig cfg =
      config_path.empty() ? ExperimentConfig{} : parse_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!arms.empty()) cfg.arms = arms;
  if (has_seed) cfg.seeds = {seed_override};
  if (!recipe.empty()) cfg.recipe = recipe;
  cfg.validate();
  return cfg;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / ("checkpoints/seed" + std::to_string(seed));
}

ModelSnapshot pretrain_f0(const ExperimentConfig& cfg,
                          std::map<std::string, DomainBundle>& domains,
                          std::uint64_t seed) {
  StagePlan plan;
  plan.domain_id = cfg.data.source_preset;
  plan.strategy = Strategy::VanillaCP;
  plan.epochs = cfg.pretrain.epochs;
  plan.batch_size = cfg.pretrain.batch_size;
  plan.lr = cfg.pretrain.lr;
  plan.mask_rate = cfg.mask_rate;
  plan.seed = derive_seed({hash_name("pretrain"), seed});
  StageResult pre = pretrain_from_scratch(
      cfg.backbone, unlabeled_frames(domains.at(cfg.data.source_preset).pretrain), plan);
  std::cout << "pretrain: final epoch loss "
            << (pre.epoch_loss.empty() ? 0.0 : pre.epoch_loss.back()) << " ("
            << pre.wall_clock_sec << " s)\n";
  return std::move(pre.snapshot);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continued pre-training with a frozen teacher and cross-domain attention"};
  app.require_subcommand(1);

  std::string config_path, out_dir, recipe, arm = "FusDom", mode = "e2e", domain;
  std::string ckpt_path;
  std::vector<std::string> arms;
  std::vector<std::string> report_paths;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (JSON)");
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic domain corpora");
  add_common(gen);

  CLI::App* pre = app.add_subcommand("pretrain", "pre-train f0 on the source domain");
  add_common(pre);
  CLI::Option* pre_seed = pre->add_option("--seed", seed, "seed (overrides config list)");

  CLI::App* cp = app.add_subcommand("cp", "run one continued pre-training stage per arm");
  add_common(cp);
  CLI::Option* cp_seed = cp->add_option("--seed", seed, "seed (overrides config list)");
  cp->add_option("--arms", arms, "strategy arms to run")->delimiter(',');

  CLI::App* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on a domain");
  add_common(ft);
  CLI::Option* ft_seed = ft->add_option("--seed", seed, "seed (overrides config list)");
  ft->add_option("--ckpt", ckpt_path, "backbone checkpoint to start from")->required();
  ft->add_option("--mode", mode, "e2e or probe")->check(CLI::IsMember({"e2e", "probe"}));
  ft->add_option("--domain", domain, "fine-tuning domain preset")->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate a fine-tuned model on a domain");
  add_common(ev);
  ev->add_option("--ckpt", ckpt_path, "fine-tuned checkpoint")->required();
  ev->add_option("--domain", domain, "evaluation domain preset")->required();

  CLI::App* run = app.add_subcommand("run", "run a full recipe over arms x seeds");
  add_common(run);
  run->add_option("--recipe", recipe, "r1, r2 or r3")
      ->check(CLI::IsMember({"r1", "r2", "r3"}));
  run->add_option("--arms", arms, "strategy arms to run")->delimiter(',');
  CLI::Option* run_seed = run->add_option("--seed", seed, "single-seed override");

  CLI::App* sum = app.add_subcommand("summarize", "aggregate one or more report files");
  sum->add_option("reports", report_paths, "report.json paths")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = load_config(config_path, out_dir, {}, 0, false, "");
      auto domains = generate_corpora(cfg);
      for (const auto& [name, bundle] : domains) {
        std::cout << name << ": " << bundle.paths.pretrain.string() << " (+ train/dev/test)\n";
      }
    } else if (pre->parsed()) {
      ExperimentConfig cfg = load_config(config_path, out_dir, {}, seed, !pre_seed->empty(), "");
      auto domains = generate_corpora(cfg);
      for (std::uint64_t s : cfg.seeds) {
        ModelSnapshot f0 = pretrain_f0(cfg, domains, s);
        const fs::path path = seed_dir(cfg, s) / "f0.ckpt";
        save_checkpoint(f0, path);
        std::cout << "wrote " << path.string() << "\n";
      }
    } else if (cp->parsed()) {
      ExperimentConfig cfg =
          load_config(config_path, out_dir, arms, seed, !cp_seed->empty(), "");
      auto domains = generate_corpora(cfg);
      const std::string& target = cfg.data.target_presets.front();
      for (std::uint64_t s : cfg.seeds) {
        const fs::path f0_path = seed_dir(cfg, s) / "f0.ckpt";
        ModelSnapshot f0 = fs::exists(f0_path) ? load_checkpoint(f0_path)
                                               : pretrain_f0(cfg, domains, s);
        if (!fs::exists(f0_path)) save_checkpoint(f0, f0_path);
        for (const std::string& arm_name : cfg.arms) {
          StagePlan plan;
          plan.domain_id = target;
          plan.strategy = strategy_from_string(arm_name);
          plan.epochs = cfg.cp.epochs;
          plan.batch_size = cfg.cp.batch_size;
          plan.lr = cfg.cp.lr;
          plan.mask_rate = cfg.mask_rate;
          plan.seed = derive_seed({hash_name("cp"), s, hash_name(target), 0});
          StageResult stage =
              run_cp_stage(f0, unlabeled_frames(domains.at(target).pretrain), plan);
          const fs::path path = seed_dir(cfg, s) / (arm_name + "_f1.ckpt");
          save_checkpoint(stage.snapshot, path);
          std::cout << arm_name << ": wrote " << path.string();
          if (!stage.epoch_loss.empty()) {
            std::cout << " (final pre-text loss " << stage.epoch_loss.back() << ")";
          }
          std::cout << "\n";
        }
      }
    } else if (ft->parsed()) {
      ExperimentConfig cfg = load_config(config_path, out_dir, {}, seed, !ft_seed->empty(), "");
      auto domains = generate_corpora(cfg);
      ModelSnapshot snapshot = load_checkpoint(ckpt_path);
      FinetuneConfig fc;
      fc.epochs = cfg.finetune.epochs;
      fc.batch_size = cfg.finetune.batch_size;
      fc.lr = cfg.finetune.lr;
      fc.seed = derive_seed({hash_name("ft"), cfg.seeds.front(), hash_name(mode),
                             hash_name(domain)});
      const auto train = labeled_utterances(domains.at(domain).train);
      const Vocab vocab{cfg.data.knobs.vocab_size};
      FinetuneResult result = mode == "probe" ? frozen_probe(snapshot, train, vocab, fc)
                                              : finetune_e2e(snapshot, train, vocab, fc);
      const fs::path path =
          fs::path(cfg.out_dir) / ("finetuned_" + mode + "_" + domain + ".ckpt");
      save_finetuned(result.model, path);
      std::cout << "final train loss " << result.epoch_loss.back() << ", wrote "
                << path.string() << "\n";
    } else if (ev->parsed()) {
      ExperimentConfig cfg = load_config(config_path, out_dir, {}, 0, false, "");
      auto domains = generate_corpora(cfg);
      FinetunedModel model = load_finetuned(ckpt_path);
      const EvalResult r = evaluate(model, labeled_utterances(domains.at(domain).test));
      std::cout << "domain=" << domain << " mode=" << model.mode << " wer=" << r.wer
                << " S=" << r.substitutions << " I=" << r.insertions
                << " D=" << r.deletions << " N=" << r.n_ref_tokens << "\n";
    } else if (run->parsed()) {
      ExperimentConfig cfg =
          load_config(config_path, out_dir, arms, seed, !run_seed->empty(), recipe);
      RunResult result = run_experiment(cfg);
      std::cout << summarize_reports({result.report});
      std::cout << "report: " << result.csv_path.string() << ", "
                << result.json_path.string() << "\n";
      return result.all_ok ? 0 : 1;
    } else if (sum->parsed()) {
      std::vector<ExperimentReport> reports;
      for (const std::string& p : report_paths) reports.push_back(load_report_json(p));
      std::cout << summarize_reports(reports);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
