#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusdom/tensor.hpp"

namespace fusdom {

/// Size/shape knobs shared by every preset; the preset decides transitions,
/// mixing transform and noise level.
struct DomainKnobs {
  int vocab_size = 8;
  int frame_dim = 16;
  int frames_per_token = 4;
  int min_tokens = 4;
  int max_tokens = 9;
};

/// Generative description of one synthetic domain: a Markov chain over
/// tokens with per-token emission means pushed through a domain-specific
/// mixing transform plus Gaussian noise.
struct DomainSpec {
  std::string domain_id;
  int vocab_size = 0;
  Matrix transition;    // [V x V], row-stochastic
  Matrix token_means;   // [V x frame_dim]
  Matrix transform;     // [frame_dim x frame_dim]
  double noise_sigma = 0.0;
  int frames_per_token = 0;
  int min_tokens = 0;
  int max_tokens = 0;

  int frame_dim() const { return static_cast<int>(transform.rows()); }
  void validate() const;
};

/// Known presets: "source" (dense transitions, mild mixing), "shifted"
/// (banded sparse transitions, stronger mixing), "bursty" (two-block
/// transitions, strongest mixing and noise). Token means are shared across
/// presets of one master seed; the domains differ in dynamics and mixing.
DomainSpec make_domain(const std::string& preset, std::uint64_t master_seed,
                       const DomainKnobs& knobs = {});

std::vector<std::string> known_presets();

struct GeneratedUtterance {
  Matrix frames;            // [L x frame_dim]
  std::vector<int> tokens;  // label ids 1..V; empty when unlabeled
  std::string domain_id;
  std::uint64_t seed = 0;
};

/// Markov-chain token sequence (uniform start, consecutive repeats
/// re-sampled once then kept), frames_per_token noisy emissions per token.
/// Bit-deterministic in (spec, seed).
GeneratedUtterance sample_utterance(const DomainSpec& spec, std::uint64_t seed,
                                    bool labeled);

/// Relative Frobenius distance between two mixing transforms.
double transform_distance(const DomainSpec& a, const DomainSpec& b);

/// Transition kernel actually sampled by sample_utterance (the single
/// re-draw of consecutive repeats folded in).
Matrix effective_transition(const DomainSpec& spec);

}  // namespace fusdom
