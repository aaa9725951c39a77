#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fusdom/backbone.hpp"

namespace fusdom {

/// Parameters of the cross-attention pre-training head: per-head query/key/
/// value projections, an output projection, a feed-forward pair, and the
/// three layer norms (student input, teacher input, post-attention).
struct CdaParams {
  int n_heads = 0;
  std::vector<Tensor> wq;  // per head, [d_model x d_head]
  std::vector<Tensor> wk;
  std::vector<Tensor> wv;
  Tensor wo;               // [d_model x d_model]
  Tensor ffn_w1;           // [d_model x d_ffn]
  Tensor ffn_w2;           // [d_ffn x d_model]
  Tensor ln_s_g, ln_s_b;   // [1 x d_model]
  Tensor ln_t_g, ln_t_b;
  Tensor ln_y_g, ln_y_b;

  static CdaParams init(const BackboneConfig& config, std::uint64_t seed);
  std::vector<Tensor> params() const;
  int d_model() const { return static_cast<int>(wo.rows()); }
};

/// Debug hooks: captures per-head attention maps and value banks, and can
/// force fixed attention maps to isolate the query path from the value path.
struct CdaProbe {
  std::vector<Matrix> attention;
  std::vector<Matrix> value_banks;
  const std::vector<Matrix>* forced_attention = nullptr;
};

struct HeadOutput {
  RepMatrix F;
  std::vector<Matrix> attention_maps;  // one [L x L] per head
};

/// Multi-head cross-attention with queries from T and keys/values from S:
/// per head, softmax((T Wq)(S Wk)^T / sqrt(d_head)) (S Wv), heads
/// concatenated and projected by Wo.
RepMatrix cda(const RepMatrix& S, const RepMatrix& T, const CdaParams& params,
              CdaProbe* probe = nullptr);

/// Pre-norm head block: y = cda(ln(S), ln(T)); F = y + gelu(ln(y) W1) W2.
HeadOutput head_forward(const RepMatrix& S, const RepMatrix& T, const CdaParams& params,
                        CdaProbe* probe = nullptr);

/// One pre-text forward pass: student encodes masked frames, the frozen
/// teacher encodes off tape, the head fuses both, and the reconstruction
/// loss is taken over masked positions only. Gradients reach student, head,
/// and reconstruction parameters; never the teacher. With `mask_teacher` the
/// teacher sees the same masked positions (through its own frozen mask
/// embedding), so its queries carry context, not the masked answer; without
/// it the teacher sees clean frames.
Tensor fusdom_pretext_step(const ModelSnapshot& student, const ModelSnapshot& teacher,
                           const CdaParams& head, const ReconHead& recon,
                           const Matrix& frames, double mask_rate, std::uint64_t mask_seed,
                           bool mask_teacher = true);

/// The single-model variant used by vanilla continued pre-training: the
/// model reconstructs its own masked input, no cross-attention head.
Tensor vanilla_pretext_step(const ModelSnapshot& model, const ReconHead& recon,
                            const Matrix& frames, double mask_rate,
                            std::uint64_t mask_seed);

}  // namespace fusdom
