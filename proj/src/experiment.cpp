#include "fusdom/experiment.hpp"

#include <chrono>

#include "fusdom/checkpoint.hpp"
#include "fusdom/rng.hpp"

namespace fusdom {

namespace fs = std::filesystem;

namespace {

constexpr double kMinPresetDistance = 0.5;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

StagePlan cp_plan(const ExperimentConfig& cfg, const std::string& domain, Strategy strategy,
                  std::uint64_t seed, std::uint64_t stage_index) {
  StagePlan plan;
  plan.domain_id = domain;
  plan.strategy = strategy;
  plan.epochs = cfg.cp.epochs;
  plan.batch_size = cfg.cp.batch_size;
  plan.lr = cfg.cp.lr;
  plan.mask_rate = cfg.mask_rate;
  plan.mask_teacher = cfg.mask_teacher;
  // strategy is deliberately not part of the stream seed: every arm sees the
  // same batch order and the same masks, so arms differ only in mechanism
  plan.seed = derive_seed({hash_name("cp"), seed, hash_name(domain), stage_index});
  return plan;
}

FinetuneConfig ft_config(const ExperimentConfig& cfg, std::uint64_t seed,
                         const std::string& arm, const std::string& mode,
                         const std::string& domain, const std::string& order) {
  FinetuneConfig fc;
  fc.epochs = cfg.finetune.epochs;
  fc.batch_size = cfg.finetune.batch_size;
  fc.lr = cfg.finetune.lr;
  fc.seed = derive_seed({hash_name("ft"), seed, hash_name(arm), hash_name(mode),
                         hash_name(domain), hash_name(order)});
  return fc;
}

struct RecipeContext {
  const ExperimentConfig& cfg;
  std::map<std::string, DomainBundle>& domains;
  fs::path out;
  ExperimentReport& report;
  bool& all_ok;
  Vocab vocab;
};

// Fine-tunes on `ft_domain`, evaluates on its test split, saves the model,
// and appends one row.
void finetune_and_report(RecipeContext& ctx, const ModelSnapshot& snapshot,
                         const std::string& arm, std::uint64_t seed,
                         const std::string& cp_order, const std::string& ft_domain,
                         const std::string& mode, const std::string& order_slug,
                         bool has_pretext, double pretext_final_loss) {
  const auto t0 = std::chrono::steady_clock::now();
  const DomainBundle& bundle = ctx.domains.at(ft_domain);
  const auto train = labeled_utterances(bundle.train);
  const auto test = labeled_utterances(bundle.test);
  const FinetuneConfig fc = ft_config(ctx.cfg, seed, arm, mode, ft_domain, order_slug);

  FinetuneResult ft = mode == "probe" ? frozen_probe(snapshot, train, ctx.vocab, fc)
                                      : finetune_e2e(snapshot, train, ctx.vocab, fc);
  const std::string ckpt_rel = "checkpoints/seed" + std::to_string(seed) + "/ft_" + arm +
                               (order_slug.empty() ? "" : "_" + order_slug) + "_" + mode +
                               "_" + ft_domain + ".ckpt";
  save_finetuned(ft.model, ctx.out / ckpt_rel);

  ReportRow row;
  row.arm = arm;
  row.seed = seed;
  row.cp_order = cp_order;
  row.finetune_domain = ft_domain;
  row.eval_domain = ft_domain;
  row.mode = mode;
  row.status = "ok";
  row.eval = evaluate(ft.model, test);
  row.has_pretext = has_pretext;
  row.pretext_final_loss = pretext_final_loss;
  row.wall_clock_sec = seconds_since(t0);
  row.checkpoint = ckpt_rel;
  ctx.report.rows.push_back(std::move(row));
}

void fail_row(RecipeContext& ctx, const std::string& arm, std::uint64_t seed,
              const std::string& reason) {
  ReportRow row;
  row.arm = arm;
  row.seed = seed;
  row.cp_order = "-";
  row.finetune_domain = "-";
  row.eval_domain = "-";
  row.mode = "-";
  row.status = "failed:" + reason;
  ctx.report.rows.push_back(std::move(row));
  ctx.all_ok = false;
}

// r1 evaluates on the CP target; r2 evaluates on the source domain.
void run_single_cp_recipe(RecipeContext& ctx, const ModelSnapshot& f0, std::uint64_t seed,
                          bool eval_on_source) {
  const std::string& target = ctx.cfg.data.target_presets.front();
  const std::string& source = ctx.cfg.data.source_preset;
  for (const std::string& arm : ctx.cfg.arms) {
    try {
      const Strategy strategy = strategy_from_string(arm);
      StagePlan plan = cp_plan(ctx.cfg, target, strategy, seed, 0);
      if (strategy == Strategy::NoCP) plan.epochs = 0;
      StageResult stage =
          run_cp_stage(f0, unlabeled_frames(ctx.domains.at(target).pretrain), plan);
      const std::string f1_rel =
          "checkpoints/seed" + std::to_string(seed) + "/" + arm + "_f1.ckpt";
      save_checkpoint(stage.snapshot, ctx.out / f1_rel);

      const bool has_pretext = !stage.epoch_loss.empty();
      const double final_loss = has_pretext ? stage.epoch_loss.back() : 0.0;
      const std::string cp_order = strategy == Strategy::NoCP ? "-" : target;
      const std::string& ft_domain = eval_on_source ? source : target;
      for (const std::string mode : {"e2e", "probe"}) {
        finetune_and_report(ctx, stage.snapshot, arm, seed, cp_order, ft_domain, mode, "",
                            has_pretext, final_loss);
      }
    } catch (const Error& e) {
      fail_row(ctx, arm, seed, e.what());
    }
  }
}

void run_sequential_recipe(RecipeContext& ctx, const ModelSnapshot& f0, std::uint64_t seed) {
  const std::string& source = ctx.cfg.data.source_preset;
  const std::string& t0 = ctx.cfg.data.target_presets[0];
  const std::string& t1 = ctx.cfg.data.target_presets[1];
  const std::vector<std::pair<std::string, std::string>> orders = {{t0, t1}, {t1, t0}};
  for (const std::string& arm : ctx.cfg.arms) {
    try {
      const Strategy strategy = strategy_from_string(arm);
      for (const auto& [first, second] : orders) {
        const std::string order_slug = first + "-" + second;
        const std::string cp_order =
            strategy == Strategy::NoCP ? "-" : first + "->" + second;
        std::vector<StagePlan> plans = {cp_plan(ctx.cfg, first, strategy, seed, 0),
                                        cp_plan(ctx.cfg, second, strategy, seed, 1)};
        if (strategy == Strategy::NoCP) {
          plans[0].epochs = 0;
          plans[1].epochs = 0;
        }
        StreamResult stream = run_stream(
            f0, plans,
            {unlabeled_frames(ctx.domains.at(first).pretrain),
             unlabeled_frames(ctx.domains.at(second).pretrain)});
        const fs::path seed_dir = "checkpoints/seed" + std::to_string(seed);
        save_checkpoint(stream.snapshots[1],
                        ctx.out / seed_dir / (arm + "_" + order_slug + "_f1.ckpt"));
        save_checkpoint(stream.snapshots[2],
                        ctx.out / seed_dir / (arm + "_" + order_slug + "_f2.ckpt"));
        const bool has_pretext = !stream.loss_curves.back().empty();
        const double final_loss = has_pretext ? stream.loss_curves.back().back() : 0.0;
        for (const std::string& eval_domain : {source, t0, t1}) {
          finetune_and_report(ctx, stream.snapshots[2], arm, seed, cp_order, eval_domain,
                              "e2e", order_slug, has_pretext, final_loss);
        }
      }
    } catch (const Error& e) {
      fail_row(ctx, arm, seed, e.what());
    }
  }
}

}  // namespace

std::map<std::string, DomainBundle> generate_corpora(const ExperimentConfig& cfg) {
  std::vector<std::string> presets = {cfg.data.source_preset};
  for (const std::string& t : cfg.data.target_presets) {
    if (std::find(presets.begin(), presets.end(), t) == presets.end()) {
      presets.push_back(t);
    }
  }
  std::map<std::string, DomainBundle> domains;
  const fs::path data_dir = fs::path(cfg.out_dir) / "datasets";
  for (const std::string& name : presets) {
    DomainBundle bundle;
    bundle.spec = make_domain(name, cfg.data.master_seed, cfg.data.knobs);
    CorpusSizes sizes{name == cfg.data.source_preset ? cfg.data.pretrain_n_source
                                                     : cfg.data.pretrain_n_target,
                      cfg.data.train_n, cfg.data.dev_n, cfg.data.test_n};
    bundle.paths = build_corpus(bundle.spec, sizes, cfg.data.master_seed, data_dir);
    bundle.pretrain = load_dataset(bundle.paths.pretrain);
    bundle.train = load_dataset(bundle.paths.train);
    bundle.dev = load_dataset(bundle.paths.dev);
    bundle.test = load_dataset(bundle.paths.test);
    domains.emplace(name, std::move(bundle));
  }
  for (auto a = domains.begin(); a != domains.end(); ++a) {
    for (auto b = std::next(a); b != domains.end(); ++b) {
      const double dist = transform_distance(a->second.spec, b->second.spec);
      if (dist < kMinPresetDistance) {
        throw DataError("presets '" + a->first + "' and '" + b->first +
                        "' are too close (transform distance " +
                        format_double_shortest(dist) + ")");
      }
    }
  }
  return domains;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);

  auto domains = generate_corpora(cfg);

  RunResult result;
  result.report.schema_version = 1;
  result.report.recipe = cfg.recipe;
  result.report.config_echo_json = echo_config(cfg);
  RecipeContext ctx{cfg, domains, out, result.report, result.all_ok,
                    Vocab{cfg.data.knobs.vocab_size}};

  for (std::uint64_t seed : cfg.seeds) {
    ModelSnapshot f0;
    try {
      StagePlan pre_plan;
      pre_plan.domain_id = cfg.data.source_preset;
      pre_plan.strategy = Strategy::VanillaCP;
      pre_plan.epochs = cfg.pretrain.epochs;
      pre_plan.batch_size = cfg.pretrain.batch_size;
      pre_plan.lr = cfg.pretrain.lr;
      pre_plan.mask_rate = cfg.mask_rate;
      pre_plan.seed = derive_seed({hash_name("pretrain"), seed});
      StageResult pre = pretrain_from_scratch(
          cfg.backbone, unlabeled_frames(domains.at(cfg.data.source_preset).pretrain),
          pre_plan);
      f0 = std::move(pre.snapshot);
      save_checkpoint(f0, out / ("checkpoints/seed" + std::to_string(seed)) / "f0.ckpt");
    } catch (const Error& e) {
      for (const std::string& arm : cfg.arms) {
        fail_row(ctx, arm, seed, std::string("pretrain: ") + e.what());
      }
      continue;
    }

    if (cfg.recipe == "r1") {
      run_single_cp_recipe(ctx, f0, seed, false);
    } else if (cfg.recipe == "r2") {
      run_single_cp_recipe(ctx, f0, seed, true);
    } else {
      run_sequential_recipe(ctx, f0, seed);
    }
  }

  result.csv_path = out / "report.csv";
  result.json_path = out / "report.json";
  write_report_csv(result.report, result.csv_path);
  write_report_json(result.report, result.json_path);
  return result;
}

}  // namespace fusdom
