#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusdom/backbone.hpp"

namespace fusdom {

/// Dense token inventory: label ids run 1..vocab_size, blank is id 0 and is
/// never a label symbol.
struct Vocab {
  int vocab_size = 0;
  static constexpr int blank_id = 0;
  int n_classes() const { return vocab_size + 1; }
};

struct LabeledUtterance {
  Matrix frames;            // [L x frame_dim]
  std::vector<int> labels;  // length U >= 1, ids in [1, vocab_size]
};

/// Number of adjacent equal-label pairs; CTC needs L >= U + repeats.
int label_repeats(const std::vector<int>& labels);

struct EvalResult {
  double wer = 0.0;
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t n_ref_tokens = 0;
};

/// Negative log-probability of all blank-augmented alignments of `labels`,
/// by the forward recursion in log space. Differentiable through the tape.
/// Rows of log_probs must be log-normalised (row logsumexp within 1e-9).
Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& labels);

/// Per-frame argmax, collapse consecutive repeats, drop blanks.
std::vector<int> greedy_decode(const Matrix& log_probs);

/// Levenshtein alignment with unit costs; ties broken substitution, then
/// deletion, then insertion. Empty reference with nonempty hypothesis uses
/// the sentinel wer = |hyp| / 1.
EvalResult wer(const std::vector<int>& ref, const std::vector<int>& hyp);

struct FinetuneConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct FinetunedModel {
  ModelSnapshot backbone;
  Tensor head_w;  // [d_model x n_classes]
  Tensor head_b;  // [1 x n_classes]
  Vocab vocab;
  std::string mode;  // "e2e" or "probe"
};

struct FinetuneResult {
  FinetunedModel model;
  std::vector<double> epoch_loss;
};

/// Joint training of the backbone copy and a fresh linear CTC head.
FinetuneResult finetune_e2e(const ModelSnapshot& snapshot,
                            const std::vector<LabeledUtterance>& train, const Vocab& vocab,
                            const FinetuneConfig& cfg);

/// Same loop with the backbone excluded from the optimizer; its bytes are
/// identical before and after.
FinetuneResult frozen_probe(const ModelSnapshot& snapshot,
                            const std::vector<LabeledUtterance>& train, const Vocab& vocab,
                            const FinetuneConfig& cfg);

/// Log-normalised class scores for one utterance (no tape).
Matrix predict_log_probs(const FinetunedModel& model, const Matrix& frames);

/// Corpus-level token error rate: summed edits over summed reference tokens.
EvalResult evaluate(const FinetunedModel& model, const std::vector<LabeledUtterance>& test);

}  // namespace fusdom
