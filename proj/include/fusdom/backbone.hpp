#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusdom/ops.hpp"
#include "fusdom/tensor.hpp"

namespace fusdom {

struct BackboneConfig {
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 2;
  int d_ffn = 64;
  int max_len = 64;
  int frame_dim = 16;

  void validate() const;
  int d_head() const { return d_model / n_heads; }
  bool operator==(const BackboneConfig&) const = default;
};

struct StageStamp {
  std::string strategy;
  std::string domain_id;
  bool operator==(const StageStamp&) const = default;
};

/// Named, versioned parameter set of one backbone. Copying a snapshot deep
/// copies every parameter, so snapshots never alias each other's weights.
class ModelSnapshot {
 public:
  ModelSnapshot() = default;
  ModelSnapshot(const ModelSnapshot& other);
  ModelSnapshot& operator=(const ModelSnapshot& other);
  ModelSnapshot(ModelSnapshot&&) = default;
  ModelSnapshot& operator=(ModelSnapshot&&) = default;

  const BackboneConfig& config() const { return config_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  Tensor& param(std::string_view name);
  const Tensor& param(std::string_view name) const;
  std::size_t param_count() const;  // total scalar count

  void set_trainable(bool on);

  std::string stage_tag;
  std::vector<StageStamp> provenance;

  /// Builds the parameter skeleton for `config` with every tensor zeroed;
  /// init_snapshot fills it. Used by the checkpoint loader for shape checks.
  static ModelSnapshot skeleton(const BackboneConfig& config);

 private:
  BackboneConfig config_;
  std::vector<Tensor> params_;
};

/// Sequence of d_model-wide representations, one row per position.
struct RepMatrix {
  Tensor values;  // [L x d_model]
  Index length() const { return values.rows(); }
};

struct MaskPlan {
  std::vector<Index> masked_positions;  // sorted, unique
  double mask_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Optional capture of self-attention maps, one [L x L] matrix per
/// (layer, head) in layer-major order.
struct EncodeProbe {
  std::vector<Matrix> attention;
};

/// Fresh random snapshot: weights uniform in +-1/sqrt(fan_in), biases and
/// layer-norm biases zero, gains one. Deterministic in seed.
ModelSnapshot init_snapshot(const BackboneConfig& config, std::uint64_t seed);

/// Input projection + sinusoidal positions + pre-norm self-attention/FFN
/// blocks. Records on the active tape when the snapshot is trainable.
RepMatrix encode(const ModelSnapshot& snapshot, const Tensor& frames,
                 EncodeProbe* probe = nullptr);

/// Replaces round(mask_rate * L) distinct rows of `frames` with the
/// snapshot's learned mask embedding. Deterministic in seed.
std::pair<Tensor, MaskPlan> apply_mask(const ModelSnapshot& snapshot, const Tensor& frames,
                                       double mask_rate, std::uint64_t seed);

/// Mean absolute reconstruction error over masked positions only. An empty
/// plan yields the constant 0 (no gradient).
Tensor pretext_loss(const Tensor& predicted, const Matrix& target_frames,
                    const MaskPlan& plan);

/// Linear head mapping representations back to frame space for the
/// reconstruction pre-text task. Re-initialised at every training stage.
struct ReconHead {
  Tensor w;  // [d_model x frame_dim]
  Tensor b;  // [1 x frame_dim]
  static ReconHead init(const BackboneConfig& config, std::uint64_t seed);
  std::vector<Tensor> params() const { return {w, b}; }
  Tensor apply(const RepMatrix& reps) const { return add_bias(matmul(reps.values, w), b); }
};

Matrix sinusoidal_positions(Index length, Index d_model);

/// Bitwise equality of two parameter sets (names, shapes, and every byte of
/// every value buffer).
bool params_bit_identical(const ModelSnapshot& a, const ModelSnapshot& b);

}  // namespace fusdom
