#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "fusdom/checkpoint.hpp"
#include "fusdom/config.hpp"
#include "fusdom/dataset_io.hpp"
#include "fusdom/report.hpp"
#include "fusdom/rng.hpp"
#include "oracles.hpp"

using namespace fusdom;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("fusdom_io_test_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// re-seal a patched checkpoint so only the intended field is inconsistent
void fix_crc(std::vector<std::uint8_t>& bytes) {
  const std::size_t payload = bytes.size() - 4;
  const std::uint32_t c = crc32(bytes.data(), payload);
  std::memcpy(bytes.data() + payload, &c, 4);
}

BackboneConfig io_config() {
  BackboneConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ffn = 24;
  cfg.max_len = 32;
  cfg.frame_dim = 6;
  return cfg;
}

ModelSnapshot sample_snapshot() {
  ModelSnapshot s = init_snapshot(io_config(), 99);
  s.stage_tag = "cp1:shifted";
  s.provenance.push_back({"FusDom", "shifted"});
  return s;
}

}  // namespace

TEST_CASE("checkpoint save/load/save is byte-identical") {
  const fs::path dir = temp_dir();
  ModelSnapshot s = sample_snapshot();
  save_checkpoint(s, dir / "a.ckpt");
  ModelSnapshot loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded, dir / "b.ckpt");
  CHECK(read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt"));
  CHECK(params_bit_identical(s, loaded));
  CHECK(loaded.stage_tag == "cp1:shifted");
  REQUIRE(loaded.provenance.size() == 1);
  CHECK(loaded.provenance[0].strategy == "FusDom");
}

TEST_CASE("a loaded snapshot encodes bit-identically") {
  const fs::path dir = temp_dir();
  ModelSnapshot s = sample_snapshot();
  Rng rng(7);
  Matrix frames = oracles::random_matrix(rng, 9, io_config().frame_dim);
  Matrix before = encode(s, Tensor::constant(frames)).values.value();
  save_checkpoint(s, dir / "model.ckpt");
  ModelSnapshot loaded = load_checkpoint(dir / "model.ckpt");
  Matrix after = encode(loaded, Tensor::constant(frames)).values.value();
  CHECK(std::memcmp(before.data(), after.data(), sizeof(double) * before.size()) == 0);
}

TEST_CASE("every single-byte corruption is detected") {
  const fs::path dir = temp_dir();
  save_checkpoint(sample_snapshot(), dir / "m.ckpt");
  const auto original = read_bytes(dir / "m.ckpt");
  Rng rng(13);
  int detected = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    auto bytes = original;
    const auto pos = static_cast<std::size_t>(rng.below(bytes.size()));
    const auto bit = static_cast<std::uint8_t>(1u << rng.below(8));
    bytes[pos] ^= bit;
    write_bytes(dir / "bad.ckpt", bytes);
    try {
      load_checkpoint(dir / "bad.ckpt");
    } catch (const IoError&) {
      ++detected;
    }
  }
  CHECK(detected == trials);
}

TEST_CASE("checkpoint error kinds are distinct") {
  const fs::path dir = temp_dir();
  save_checkpoint(sample_snapshot(), dir / "m.ckpt");
  const auto original = read_bytes(dir / "m.ckpt");

  SUBCASE("bad magic") {
    auto bytes = original;
    bytes[0] = 'X';
    write_bytes(dir / "bad.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), BadMagicError);
  }
  SUBCASE("version mismatch") {
    auto bytes = original;
    bytes[4] = 2;  // u16 version little-endian
    fix_crc(bytes);
    write_bytes(dir / "bad.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), VersionError);
  }
  SUBCASE("config/parameter inconsistency") {
    auto bytes = original;
    bytes[6] = 8;  // d_model u32 at the start of the config block
    fix_crc(bytes);
    write_bytes(dir / "bad.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointFormatError);
  }
  SUBCASE("flipped payload byte is a CRC failure") {
    auto bytes = original;
    bytes[bytes.size() / 2] ^= 0x40;
    write_bytes(dir / "bad.ckpt", bytes);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CrcError);
  }
}

TEST_CASE("finetuned model round-trips behaviourally") {
  const fs::path dir = temp_dir();
  FinetunedModel model;
  model.backbone = sample_snapshot();
  model.vocab = Vocab{4};
  model.mode = "probe";
  Rng rng(17);
  model.head_w = Tensor::param(oracles::random_matrix(rng, io_config().d_model, 5),
                               "ctc_head.w");
  model.head_b = Tensor::param(oracles::random_matrix(rng, 1, 5), "ctc_head.b");
  save_finetuned(model, dir / "ft.ckpt");
  FinetunedModel loaded = load_finetuned(dir / "ft.ckpt");
  CHECK(loaded.mode == "probe");
  CHECK(loaded.vocab.vocab_size == 4);

  Matrix frames = oracles::random_matrix(rng, 8, io_config().frame_dim);
  Matrix a = predict_log_probs(model, frames);
  Matrix b = predict_log_probs(loaded, frames);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);

  // a plain snapshot loader must reject the extra head parameters
  CHECK_THROWS_AS(load_checkpoint(dir / "ft.ckpt"), CheckpointFormatError);
}

TEST_CASE("dataset files round-trip exactly") {
  const fs::path dir = temp_dir();
  DomainSpec spec = make_domain("source", 321);
  Dataset ds;
  ds.header.frame_dim = spec.frame_dim();
  ds.header.vocab_size = spec.vocab_size;
  ds.header.frames_per_token = spec.frames_per_token;
  ds.header.domain_id = spec.domain_id;
  ds.header.split = "train";
  for (std::uint64_t i = 0; i < 5; ++i) {
    ds.utterances.push_back(sample_utterance(spec, 1000 + i, i % 2 == 0));
  }
  write_dataset(ds, dir / "d.tsv");
  Dataset loaded = load_dataset(dir / "d.tsv");
  REQUIRE(loaded.utterances.size() == 5);
  CHECK(loaded.header.vocab_size == spec.vocab_size);
  CHECK(loaded.header.split == "train");
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(loaded.utterances[i].tokens == ds.utterances[i].tokens);
    CHECK(loaded.utterances[i].seed == ds.utterances[i].seed);
    CHECK(loaded.utterances[i].frames == ds.utterances[i].frames);  // bit-exact
  }
}

TEST_CASE("build_corpus with zero sizes writes valid empty files") {
  const fs::path dir = temp_dir();
  DomainSpec spec = make_domain("shifted", 77);
  CorpusPaths paths = build_corpus(spec, CorpusSizes{0, 0, 0, 0}, 77, dir);
  for (const fs::path& p : {paths.pretrain, paths.train, paths.dev, paths.test}) {
    Dataset ds = load_dataset(p);
    CHECK(ds.utterances.empty());
    CHECK(ds.header.frame_dim == spec.frame_dim());
  }
}

TEST_CASE("corpus regeneration is byte-identical and split seeds are disjoint") {
  const fs::path dir1 = temp_dir();
  const fs::path dir2 = temp_dir();
  DomainSpec spec = make_domain("bursty", 555);
  CorpusSizes sizes{6, 4, 2, 2};
  CorpusPaths a = build_corpus(spec, sizes, 555, dir1);
  CorpusPaths b = build_corpus(spec, sizes, 555, dir2);
  CHECK(read_bytes(a.pretrain) == read_bytes(b.pretrain));
  CHECK(read_bytes(a.train) == read_bytes(b.train));
  CHECK(read_bytes(a.dev) == read_bytes(b.dev));
  CHECK(read_bytes(a.test) == read_bytes(b.test));

  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  for (const fs::path& p : {a.pretrain, a.train, a.dev, a.test}) {
    for (const GeneratedUtterance& u : load_dataset(p).utterances) {
      seeds.insert(u.seed);
      ++total;
    }
  }
  CHECK(seeds.size() == total);
}

TEST_CASE("config: minimal text materialises every default") {
  ExperimentConfig parsed = parse_config_text("{}", "inline");
  ExperimentConfig defaults;
  CHECK(parsed == defaults);
  CHECK(parsed.cp.lr == 5e-4);
  CHECK(parsed.finetune.lr == 1e-3);
  CHECK(parsed.pretrain.epochs == 30);
  CHECK(parsed.data.pretrain_n_target == 200);
  CHECK(parsed.seeds == std::vector<std::uint64_t>{1, 2, 3, 4});
}

TEST_CASE("config: unknown keys are rejected by name") {
  try {
    parse_config_text(R"({"mask_rte": 0.4})", "inline");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("mask_rte") != std::string::npos);
  }
  try {
    parse_config_text(R"({"backbone": {"d_modell": 16}})", "inline");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("backbone.d_modell") != std::string::npos);
  }
}

TEST_CASE("config: syntax errors report line and column") {
  try {
    parse_config_text("{\n  \"mask_rate\": 0.3,\n  oops\n}", "inline");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column") != std::string::npos);
  }
}

TEST_CASE("config: echo round-trips to an equal config") {
  const std::string text = R"({
    "mask_rate": 0.25,
    "backbone": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ffn": 24},
    "cp": {"epochs": 5, "lr": 0.001},
    "arms": ["VanillaCP", "FusDom"],
    "seeds": [9],
    "recipe": "r2"
  })";
  ExperimentConfig cfg = parse_config_text(text, "inline");
  ExperimentConfig again = parse_config_text(echo_config(cfg), "echo");
  CHECK(cfg == again);
  CHECK(again.cp.epochs == 5);
  CHECK(again.cp.batch_size == 8);  // untouched default survives the trip
}

TEST_CASE("config: invariant violations are configuration errors") {
  CHECK_THROWS_AS(parse_config_text(R"({"arms": []})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"seeds": []})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"recipe": "r9"})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"arms": ["Fancy"]})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"backbone": {"frame_dim": 12}})", "inline"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"mask_rate": 1.5})", "inline"), ConfigError);
}

TEST_CASE("relative improvement arithmetic") {
  const auto [absolute, relative] = improvement(31.6, 29.9);
  CHECK(absolute == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(relative == doctest::Approx(5.3797468354).epsilon(1e-9));
  const auto [zero_abs, zero_rel] = improvement(12.5, 12.5);
  CHECK(zero_abs == 0.0);
  CHECK(zero_rel == 0.0);
}

namespace {

ReportRow ok_row(const std::string& arm, std::uint64_t seed, const std::string& mode,
                 double wer_value) {
  ReportRow r;
  r.arm = arm;
  r.seed = seed;
  r.cp_order = "shifted";
  r.finetune_domain = "shifted";
  r.eval_domain = "shifted";
  r.mode = mode;
  r.status = "ok";
  r.eval.wer = wer_value;
  r.eval.n_ref_tokens = 100;
  r.has_pretext = arm != "NoCP";
  r.pretext_final_loss = 0.5;
  return r;
}

}  // namespace

TEST_CASE("report writing is deterministic and summaries are exact") {
  const fs::path dir = temp_dir();
  ExperimentReport report;
  report.recipe = "r1";
  report.config_echo_json = echo_config(ExperimentConfig{});
  report.rows = {ok_row("FusDom", 1, "e2e", 0.30), ok_row("FusDom", 2, "e2e", 0.20),
                 ok_row("VanillaCP", 1, "e2e", 0.40), ok_row("VanillaCP", 2, "e2e", 0.30)};

  write_report_csv(report, dir / "a.csv");
  write_report_csv(report, dir / "b.csv");
  CHECK(read_bytes(dir / "a.csv") == read_bytes(dir / "b.csv"));

  write_report_json(report, dir / "r.json");
  ExperimentReport loaded = load_report_json(dir / "r.json");
  REQUIRE(loaded.rows.size() == 4);
  CHECK(loaded.rows[0].eval.wer == 0.30);
  CHECK(loaded.recipe == "r1");

  const std::string summary = summarize_reports({loaded});
  // hand-computed: FusDom mean 0.25, Vanilla mean 0.35
  CHECK(summary.find("FusDom,e2e,2,0.25,0.2,0.3") != std::string::npos);
  CHECK(summary.find("VanillaCP,e2e,2,0.35") != std::string::npos);
  // pairwise absolute 0.1 with relative 28.57...%
  CHECK(summary.find("VanillaCP,FusDom,e2e,0.") != std::string::npos);
}

TEST_CASE("summarize rejects mismatched schema versions") {
  ExperimentReport a;
  a.recipe = "r1";
  a.config_echo_json = echo_config(ExperimentConfig{});
  ExperimentReport b = a;
  b.schema_version = 2;
  CHECK_THROWS_AS(summarize_reports({a, b}), VersionError);
}
