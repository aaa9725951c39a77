#include "fusdom/head.hpp"

#include <cmath>

#include "fusdom/rng.hpp"

namespace fusdom {

namespace {

Tensor uniform_param(Rng& rng, Index rows, Index cols, double fan_in, std::string name) {
  const double bound = 1.0 / std::sqrt(fan_in);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return Tensor::param(std::move(m), std::move(name));
}

}  // namespace

CdaParams CdaParams::init(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed({hash_name("cda_params"), seed}));
  const Index d = config.d_model, dh = config.d_head(), ffn = config.d_ffn;
  CdaParams p;
  p.n_heads = config.n_heads;
  for (int m = 0; m < config.n_heads; ++m) {
    const std::string suffix = std::to_string(m);
    p.wq.push_back(uniform_param(rng, d, dh, static_cast<double>(d), "head.wq." + suffix));
    // keys start equal to queries: since student and teacher coincide at the
    // start of a stage, the initial attention is a Gram matrix and each query
    // mostly retrieves its own position's value; training reshapes it freely
    p.wk.push_back(Tensor::param(p.wq.back().value(), "head.wk." + suffix));
    p.wv.push_back(uniform_param(rng, d, dh, static_cast<double>(d), "head.wv." + suffix));
  }
  p.wo = uniform_param(rng, d, d, static_cast<double>(d), "head.wo");
  p.ffn_w1 = uniform_param(rng, d, ffn, static_cast<double>(d), "head.ffn.w1");
  p.ffn_w2 = uniform_param(rng, ffn, d, static_cast<double>(ffn), "head.ffn.w2");
  p.ln_s_g = Tensor::param(Matrix::Ones(1, d), "head.ln_s.g");
  p.ln_s_b = Tensor::param(Matrix::Zero(1, d), "head.ln_s.b");
  p.ln_t_g = Tensor::param(Matrix::Ones(1, d), "head.ln_t.g");
  p.ln_t_b = Tensor::param(Matrix::Zero(1, d), "head.ln_t.b");
  p.ln_y_g = Tensor::param(Matrix::Ones(1, d), "head.ln_y.g");
  p.ln_y_b = Tensor::param(Matrix::Zero(1, d), "head.ln_y.b");
  return p;
}

std::vector<Tensor> CdaParams::params() const {
  std::vector<Tensor> out;
  for (int m = 0; m < n_heads; ++m) {
    out.push_back(wq[static_cast<std::size_t>(m)]);
    out.push_back(wk[static_cast<std::size_t>(m)]);
    out.push_back(wv[static_cast<std::size_t>(m)]);
  }
  out.push_back(wo);
  out.push_back(ffn_w1);
  out.push_back(ffn_w2);
  out.push_back(ln_s_g);
  out.push_back(ln_s_b);
  out.push_back(ln_t_g);
  out.push_back(ln_t_b);
  out.push_back(ln_y_g);
  out.push_back(ln_y_b);
  return out;
}

RepMatrix cda(const RepMatrix& S, const RepMatrix& T, const CdaParams& params,
              CdaProbe* probe) {
  if (S.values.cols() != params.d_model() || T.values.cols() != params.d_model()) {
    throw ShapeError("cda: representation width " +
                     detail::shape_str(S.values.value()) + " / " +
                     detail::shape_str(T.values.value()) + " vs d_model " +
                     std::to_string(params.d_model()));
  }
  if (S.length() != T.length()) {
    throw ShapeError("cda: student and teacher lengths differ: " +
                     std::to_string(S.length()) + " vs " + std::to_string(T.length()));
  }
  const Index dh = params.wq.front().cols();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(params.n_heads));
  for (int m = 0; m < params.n_heads; ++m) {
    const auto mi = static_cast<std::size_t>(m);
    Tensor q = matmul(T.values, params.wq[mi]);
    Tensor k = matmul(S.values, params.wk[mi]);
    Tensor v = matmul(S.values, params.wv[mi]);
    Tensor attn;
    if (probe && probe->forced_attention) {
      attn = Tensor::constant(probe->forced_attention->at(mi));
    } else {
      attn = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dh));
    }
    if (probe) {
      probe->attention.push_back(attn.value());
      probe->value_banks.push_back(v.value());
    }
    heads.push_back(matmul(attn, v));
  }
  return RepMatrix{matmul(concat_cols(heads), params.wo)};
}

HeadOutput head_forward(const RepMatrix& S, const RepMatrix& T, const CdaParams& params,
                        CdaProbe* probe) {
  RepMatrix sn{layer_norm(S.values, params.ln_s_g, params.ln_s_b)};
  RepMatrix tn{layer_norm(T.values, params.ln_t_g, params.ln_t_b)};
  CdaProbe local;
  CdaProbe* used = probe ? probe : &local;
  RepMatrix y = cda(sn, tn, params, used);
  Tensor yn = layer_norm(y.values, params.ln_y_g, params.ln_y_b);
  Tensor f = matmul(gelu(matmul(yn, params.ffn_w1)), params.ffn_w2);
  HeadOutput out;
  out.F = RepMatrix{add(y.values, f)};
  out.attention_maps = used->attention;
  return out;
}

Tensor fusdom_pretext_step(const ModelSnapshot& student, const ModelSnapshot& teacher,
                           const CdaParams& head, const ReconHead& recon,
                           const Matrix& frames, double mask_rate,
                           std::uint64_t mask_seed, bool mask_teacher) {
  if (!(student.config() == teacher.config())) {
    throw ContractError("fusdom_pretext_step: student and teacher configs differ");
  }
  auto [masked, plan] = apply_mask(student, Tensor::constant(frames), mask_rate, mask_seed);
  RepMatrix T;
  {
    NoGradGuard ng;
    Tensor teacher_input = Tensor::constant(frames);
    if (mask_teacher && !plan.masked_positions.empty()) {
      teacher_input = replace_rows(teacher_input, teacher.param("mask_embed"),
                                   plan.masked_positions);
    }
    T = encode(teacher, teacher_input);
  }
  RepMatrix S = encode(student, masked);
  T.values = T.values.detach();
  HeadOutput fused = head_forward(S, T, head);
  Tensor predicted = recon.apply(fused.F);
  return pretext_loss(predicted, frames, plan);
}

Tensor vanilla_pretext_step(const ModelSnapshot& model, const ReconHead& recon,
                            const Matrix& frames, double mask_rate,
                            std::uint64_t mask_seed) {
  auto [masked, plan] = apply_mask(model, Tensor::constant(frames), mask_rate, mask_seed);
  RepMatrix reps = encode(model, masked);
  Tensor predicted = recon.apply(reps);
  return pretext_loss(predicted, frames, plan);
}

}  // namespace fusdom
