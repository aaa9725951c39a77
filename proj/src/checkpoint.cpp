#include "fusdom/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace fusdom {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'U', 'S', 'D'};
constexpr std::uint16_t kVersion = 1;

struct Writer {
  std::vector<std::uint8_t> bytes;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) {
      throw CheckpointFormatError("checkpoint: truncated record");
    }
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p, n);
    p += n;
  }
  std::uint16_t u16() { std::uint16_t v; raw(&v, sizeof v); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

void write_params(Writer& w, const std::vector<Tensor>& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Tensor& t : params) {
    w.str(t.name());
    w.u32(2);  // rank
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    w.raw(t.value().data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  }
}

struct RawCheckpoint {
  BackboneConfig config;
  std::string stage_tag;
  std::vector<StageStamp> provenance;
  std::vector<std::pair<std::string, Matrix>> params;
};

std::vector<std::uint8_t> serialise(const BackboneConfig& cfg, const std::string& tag,
                                    const std::vector<StageStamp>& provenance,
                                    const std::vector<Tensor>& params) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(cfg.d_model));
  w.u32(static_cast<std::uint32_t>(cfg.n_heads));
  w.u32(static_cast<std::uint32_t>(cfg.n_layers));
  w.u32(static_cast<std::uint32_t>(cfg.d_ffn));
  w.u32(static_cast<std::uint32_t>(cfg.max_len));
  w.u32(static_cast<std::uint32_t>(cfg.frame_dim));
  w.str(tag);
  w.u32(static_cast<std::uint32_t>(provenance.size()));
  for (const StageStamp& s : provenance) {
    w.str(s.strategy);
    w.str(s.domain_id);
  }
  write_params(w, params);
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

RawCheckpoint parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + sizeof(std::uint16_t) + sizeof(std::uint32_t)) {
    throw CheckpointFormatError("checkpoint too small: " + path.string());
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw BadMagicError("not a checkpoint (bad magic): " + path.string());
  }
  const std::size_t payload = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + payload, sizeof stored_crc);
  if (crc32(bytes.data(), payload) != stored_crc) {
    throw CrcError("checkpoint CRC mismatch: " + path.string());
  }

  Reader r{bytes.data() + kMagic.size(), bytes.data() + payload};
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) +
                       ", expected " + std::to_string(kVersion));
  }
  RawCheckpoint raw;
  raw.config.d_model = static_cast<int>(r.u32());
  raw.config.n_heads = static_cast<int>(r.u32());
  raw.config.n_layers = static_cast<int>(r.u32());
  raw.config.d_ffn = static_cast<int>(r.u32());
  raw.config.max_len = static_cast<int>(r.u32());
  raw.config.frame_dim = static_cast<int>(r.u32());
  raw.stage_tag = r.str();
  const std::uint32_t n_prov = r.u32();
  for (std::uint32_t i = 0; i < n_prov; ++i) {
    StageStamp s;
    s.strategy = r.str();
    s.domain_id = r.str();
    raw.provenance.push_back(std::move(s));
  }
  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank != 2) {
      throw CheckpointFormatError("checkpoint parameter '" + name + "' has rank " +
                                  std::to_string(rank) + ", expected 2");
    }
    const auto rows = static_cast<Index>(r.u32());
    const auto cols = static_cast<Index>(r.u32());
    Matrix m(rows, cols);
    r.raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    raw.params.emplace_back(std::move(name), std::move(m));
  }
  if (r.p != r.end) {
    throw CheckpointFormatError("checkpoint has trailing bytes: " + path.string());
  }
  return raw;
}

// Fills a parameter skeleton from raw blobs, insisting on an exact match.
void fill_from_raw(std::vector<Tensor>& params, const RawCheckpoint& raw) {
  if (params.size() != raw.params.size()) {
    throw CheckpointFormatError("checkpoint holds " + std::to_string(raw.params.size()) +
                                " parameters, config expects " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, m] = raw.params[i];
    if (params[i].name() != name) {
      throw CheckpointFormatError("checkpoint parameter '" + name + "' where '" +
                                  params[i].name() + "' was expected");
    }
    if (params[i].rows() != m.rows() || params[i].cols() != m.cols()) {
      throw CheckpointFormatError("checkpoint parameter '" + name + "' has shape " +
                                  detail::shape_str(m) + ", expected " +
                                  detail::shape_str(params[i].value()));
    }
    params[i].mutable_value() = m;
  }
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const ModelSnapshot& snapshot, const std::filesystem::path& path) {
  write_file(path, serialise(snapshot.config(), snapshot.stage_tag, snapshot.provenance,
                             snapshot.params()));
}

ModelSnapshot load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = parse_file(path);
  raw.config.validate();
  ModelSnapshot snapshot = ModelSnapshot::skeleton(raw.config);
  fill_from_raw(snapshot.params(), raw);
  snapshot.set_trainable(false);
  snapshot.stage_tag = raw.stage_tag;
  snapshot.provenance = raw.provenance;
  return snapshot;
}

void save_finetuned(const FinetunedModel& model, const std::filesystem::path& path) {
  std::vector<Tensor> params = model.backbone.params();
  params.push_back(model.head_w);
  params.push_back(model.head_b);
  write_file(path, serialise(model.backbone.config(), "ft:" + model.mode,
                             model.backbone.provenance, params));
}

FinetunedModel load_finetuned(const std::filesystem::path& path) {
  RawCheckpoint raw = parse_file(path);
  raw.config.validate();
  if (raw.params.size() < 2) {
    throw CheckpointFormatError("finetuned checkpoint lacks the CTC head: " +
                                path.string());
  }
  auto head_b = std::move(raw.params.back());
  raw.params.pop_back();
  auto head_w = std::move(raw.params.back());
  raw.params.pop_back();
  if (head_w.first != "ctc_head.w" || head_b.first != "ctc_head.b") {
    throw CheckpointFormatError("finetuned checkpoint head parameters misnamed: " +
                                path.string());
  }
  FinetunedModel model;
  model.backbone = ModelSnapshot::skeleton(raw.config);
  fill_from_raw(model.backbone.params(), raw);
  model.backbone.set_trainable(false);
  model.backbone.provenance = raw.provenance;
  if (!raw.stage_tag.starts_with("ft:")) {
    throw CheckpointFormatError("finetuned checkpoint tag '" + raw.stage_tag +
                                "' lacks the ft: prefix");
  }
  model.mode = raw.stage_tag.substr(3);
  model.backbone.stage_tag = raw.stage_tag;
  model.head_w = Tensor::param(std::move(head_w.second), "ctc_head.w");
  model.head_b = Tensor::param(std::move(head_b.second), "ctc_head.b");
  model.head_w.set_requires_grad(false);
  model.head_b.set_requires_grad(false);
  model.vocab = Vocab{static_cast<int>(model.head_w.cols()) - 1};
  return model;
}

}  // namespace fusdom
