#include "fusdom/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "fusdom/rng.hpp"

namespace fusdom {

void BackboneConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 0 || d_ffn < 1 || max_len < 1 ||
      frame_dim < 1) {
    throw ConfigError("BackboneConfig: all extents must be >= 1 (n_layers >= 0)");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("BackboneConfig: n_heads (" + std::to_string(n_heads) +
                      ") must divide d_model (" + std::to_string(d_model) + ")");
  }
}

ModelSnapshot::ModelSnapshot(const ModelSnapshot& other)
    : config_(other.config_), stage_tag(other.stage_tag), provenance(other.provenance) {
  params_.reserve(other.params_.size());
  for (const Tensor& p : other.params_) params_.push_back(p.clone());
}

ModelSnapshot& ModelSnapshot::operator=(const ModelSnapshot& other) {
  if (this == &other) return *this;
  ModelSnapshot tmp(other);
  *this = std::move(tmp);
  return *this;
}

Tensor& ModelSnapshot::param(std::string_view name) {
  for (Tensor& p : params_) {
    if (p.name() == name) return p;
  }
  throw ContractError("ModelSnapshot: no parameter named '" + std::string(name) + "'");
}

const Tensor& ModelSnapshot::param(std::string_view name) const {
  return const_cast<ModelSnapshot*>(this)->param(name);
}

std::size_t ModelSnapshot::param_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

void ModelSnapshot::set_trainable(bool on) {
  for (Tensor& p : params_) p.set_requires_grad(on);
}

ModelSnapshot ModelSnapshot::skeleton(const BackboneConfig& config) {
  config.validate();
  ModelSnapshot s;
  s.config_ = config;
  s.stage_tag = "init";
  const Index d = config.d_model, fd = config.frame_dim, ffn = config.d_ffn;
  auto push = [&s](const std::string& name, Index rows, Index cols) {
    s.params_.push_back(Tensor::param(Matrix::Zero(rows, cols), name));
  };
  push("in_proj.w", fd, d);
  push("in_proj.b", 1, d);
  push("mask_embed", 1, fd);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    push(base + "ln1.g", 1, d);
    push(base + "ln1.b", 1, d);
    push(base + "attn.wq", d, d);
    push(base + "attn.wk", d, d);
    push(base + "attn.wv", d, d);
    push(base + "attn.wo", d, d);
    push(base + "ln2.g", 1, d);
    push(base + "ln2.b", 1, d);
    push(base + "ffn.w1", d, ffn);
    push(base + "ffn.b1", 1, ffn);
    push(base + "ffn.w2", ffn, d);
    push(base + "ffn.b2", 1, d);
  }
  return s;
}

namespace {

constexpr Index kMaskSpan = 4;

bool is_weight(const std::string& name) {
  return name.ends_with(".w") || name.ends_with(".wq") || name.ends_with(".wk") ||
         name.ends_with(".wv") || name.ends_with(".wo") || name.ends_with(".w1") ||
         name.ends_with(".w2") || name == "mask_embed";
}

bool is_gain(const std::string& name) { return name.ends_with(".g"); }

void fill_params(std::vector<Tensor>& params, Rng& rng) {
  for (Tensor& p : params) {
    Matrix& m = p.mutable_value();
    const std::string& name = p.name();
    if (is_gain(name)) {
      m.setOnes();
    } else if (is_weight(name)) {
      // mask_embed lives in frame space; treat its width as the fan-in.
      const double fan_in =
          static_cast<double>(p.name() == "mask_embed" ? m.cols() : m.rows());
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
    } else {
      m.setZero();  // biases
    }
  }
}

}  // namespace

ModelSnapshot init_snapshot(const BackboneConfig& config, std::uint64_t seed) {
  ModelSnapshot s = ModelSnapshot::skeleton(config);
  Rng rng(derive_seed({hash_name("init_snapshot"), seed}));
  fill_params(s.params(), rng);
  return s;
}

Matrix sinusoidal_positions(Index length, Index d_model) {
  Matrix pe = Matrix::Zero(length, d_model);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index j = 0; j + 1 < d_model; j += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(d_model));
      pe(pos, j) = std::sin(static_cast<double>(pos) * freq);
      pe(pos, j + 1) = std::cos(static_cast<double>(pos) * freq);
    }
    if (d_model % 2 == 1) {
      const double freq = std::pow(
          10000.0, -static_cast<double>(d_model - 1) / static_cast<double>(d_model));
      pe(pos, d_model - 1) = std::sin(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

RepMatrix encode(const ModelSnapshot& snapshot, const Tensor& frames, EncodeProbe* probe) {
  const BackboneConfig& cfg = snapshot.config();
  const Index L = frames.rows();
  if (L > cfg.max_len) {
    throw SequenceLengthError("encode: sequence length " + std::to_string(L) +
                              " exceeds max_len " + std::to_string(cfg.max_len));
  }
  if (frames.cols() != cfg.frame_dim) {
    throw ShapeError("encode: frames are " + detail::shape_str(frames.value()) +
                     ", expected frame_dim " + std::to_string(cfg.frame_dim));
  }
  const Index dh = cfg.d_head();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor h = add_bias(matmul(frames, snapshot.param("in_proj.w")),
                      snapshot.param("in_proj.b"));
  h = add(h, Tensor::constant(sinusoidal_positions(L, cfg.d_model)));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    Tensor a = layer_norm(h, snapshot.param(base + "ln1.g"), snapshot.param(base + "ln1.b"));
    Tensor q_all = matmul(a, snapshot.param(base + "attn.wq"));
    Tensor k_all = matmul(a, snapshot.param(base + "attn.wk"));
    Tensor v_all = matmul(a, snapshot.param(base + "attn.wv"));
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (int m = 0; m < cfg.n_heads; ++m) {
      Tensor q = slice_cols(q_all, m * dh, dh);
      Tensor k = slice_cols(k_all, m * dh, dh);
      Tensor v = slice_cols(v_all, m * dh, dh);
      Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dh));
      if (probe) probe->attention.push_back(attn.value());
      heads.push_back(matmul(attn, v));
    }
    Tensor merged = matmul(concat_cols(heads), snapshot.param(base + "attn.wo"));
    h = add(h, merged);

    Tensor f = layer_norm(h, snapshot.param(base + "ln2.g"), snapshot.param(base + "ln2.b"));
    Tensor inner = gelu(add_bias(matmul(f, snapshot.param(base + "ffn.w1")),
                                 snapshot.param(base + "ffn.b1")));
    Tensor out = add_bias(matmul(inner, snapshot.param(base + "ffn.w2")),
                          snapshot.param(base + "ffn.b2"));
    h = add(h, out);
  }
  return RepMatrix{h};
}

std::pair<Tensor, MaskPlan> apply_mask(const ModelSnapshot& snapshot, const Tensor& frames,
                                       double mask_rate, std::uint64_t seed) {
  if (mask_rate < 0.0 || mask_rate > 1.0) {
    throw ContractError("apply_mask: mask_rate must be in [0, 1]");
  }
  const Index L = frames.rows();
  const auto count = static_cast<Index>(std::llround(mask_rate * static_cast<double>(L)));
  MaskPlan plan;
  plan.mask_rate = mask_rate;
  plan.seed = seed;
  if (count == 0) return {frames, plan};

  // contiguous spans with circular wraparound: uniform per-position marginals
  // and an exact count, but reconstruction cannot lean on within-span
  // neighbours, so the encoder has to aggregate context across tokens
  std::set<Index> chosen;
  Rng rng(derive_seed({hash_name("apply_mask"), seed}));
  while (static_cast<Index>(chosen.size()) < count) {
    const auto start = static_cast<Index>(rng.below(static_cast<std::uint64_t>(L)));
    for (Index k = 0; k < kMaskSpan && static_cast<Index>(chosen.size()) < count; ++k) {
      chosen.insert((start + k) % L);
    }
  }
  plan.masked_positions.assign(chosen.begin(), chosen.end());

  Tensor masked = replace_rows(frames, snapshot.param("mask_embed"), plan.masked_positions);
  return {masked, plan};
}

Tensor pretext_loss(const Tensor& predicted, const Matrix& target_frames,
                    const MaskPlan& plan) {
  if (predicted.rows() != target_frames.rows() ||
      predicted.cols() != target_frames.cols()) {
    throw ShapeError("pretext_loss: prediction " + detail::shape_str(predicted.value()) +
                     " vs target " + detail::shape_str(target_frames));
  }
  if (plan.masked_positions.empty()) return Tensor::scalar(0.0);
  Matrix weights = Matrix::Zero(target_frames.rows(), target_frames.cols());
  for (Index p : plan.masked_positions) weights.row(p).setOnes();
  return l1_loss(predicted, Tensor::constant(target_frames), weights);
}

ReconHead ReconHead::init(const BackboneConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed({hash_name("recon_head"), seed}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  Matrix w(config.d_model, config.frame_dim);
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
  ReconHead head;
  head.w = Tensor::param(std::move(w), "recon.w");
  head.b = Tensor::param(Matrix::Zero(1, config.frame_dim), "recon.b");
  return head;
}

bool params_bit_identical(const ModelSnapshot& a, const ModelSnapshot& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const Tensor& pa = a.params()[i];
    const Tensor& pb = b.params()[i];
    if (pa.name() != pb.name() || pa.rows() != pb.rows() || pa.cols() != pb.cols()) {
      return false;
    }
    if (std::memcmp(pa.value().data(), pb.value().data(),
                    sizeof(double) * static_cast<std::size_t>(pa.size())) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace fusdom
