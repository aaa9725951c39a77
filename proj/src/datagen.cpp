#include "fusdom/datagen.hpp"

#include <Eigen/QR>

#include <cmath>

#include "fusdom/rng.hpp"

namespace fusdom {

void DomainSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("DomainSpec: vocab_size must be >= 2");
  if (noise_sigma <= 0.0) throw ConfigError("DomainSpec: noise_sigma must be positive");
  if (frames_per_token < 2) {
    throw ConfigError("DomainSpec: frames_per_token must be >= 2");
  }
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("DomainSpec: bad token length range");
  }
  if (transition.rows() != vocab_size || transition.cols() != vocab_size) {
    throw ConfigError("DomainSpec: transition matrix must be [V x V]");
  }
  if (token_means.rows() != vocab_size || token_means.cols() != frame_dim()) {
    throw ConfigError("DomainSpec: token_means must be [V x frame_dim]");
  }
  for (Index i = 0; i < transition.rows(); ++i) {
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-9 ||
        transition.row(i).minCoeff() < 0.0) {
      throw ConfigError("DomainSpec: transition row " + std::to_string(i) +
                        " is not a distribution");
    }
  }
}

namespace {

Matrix random_orthogonal(Rng& rng, Index n) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  // fix column signs so the factorisation is unambiguous
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

// Q1 * diag(spectrum) * Q2 with a log-linear spectrum from `top` down to
// `top / condition`: a generic invertible mixing with known conditioning.
Matrix conditioned_transform(Rng& rng, Index n, double top, double condition) {
  Matrix q1 = random_orthogonal(rng, n);
  Matrix q2 = random_orthogonal(rng, n);
  Eigen::VectorXd spectrum(n);
  for (Index i = 0; i < n; ++i) {
    const double f = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    spectrum(i) = top * std::pow(1.0 / condition, f);
  }
  return q1 * spectrum.asDiagonal() * q2;
}

// Orthogonal factor near the identity; `alpha` controls how far the target
// mixing rotates away from the source mixing. Domains must stay related for
// continued pre-training to have anything worth retaining.
Matrix near_identity_rotation(Rng& rng, Index n, double alpha) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal() / std::sqrt(static_cast<double>(n));
  Matrix m = Matrix::Identity(n, n) + alpha * g;
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

void normalize_rows(Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
}

// each preset tilts its stationary distribution differently, so domains
// differ in token mixture (hence in mean frame) as well as in dynamics

Matrix source_transitions(Rng& rng, Index v) {
  Matrix t(v, v);
  for (Index i = 0; i < v; ++i)
    for (Index j = 0; j < v; ++j) {
      t(i, j) = rng.uniform(0.5, 1.5) * std::pow(0.62, static_cast<double>(j));
    }
  for (Index i = 0; i < v; ++i) t(i, i) *= 0.25;
  normalize_rows(t);
  return t;
}

Matrix banded_transitions(Rng& rng, Index v) {
  Matrix t = Matrix::Constant(v, v, 1e-4);
  for (Index i = 0; i < v; ++i) {
    for (Index off = 1; off <= 3; ++off) {
      const Index j = (i + off) % v;
      t(i, j) = rng.uniform(0.5, 1.5) * std::pow(1.65, static_cast<double>(j));
    }
  }
  normalize_rows(t);
  return t;
}

Matrix block_transitions(Rng& rng, Index v) {
  const Index half = v / 2;
  Matrix t = Matrix::Constant(v, v, 0.02);
  for (Index i = 0; i < v; ++i) {
    const bool first_block = i < half;
    for (Index j = 0; j < v; ++j) {
      const bool same_block = (j < half) == first_block;
      if (same_block && j != i) t(i, j) = rng.uniform(0.5, 1.5);
    }
    // asymmetric escape rates concentrate mass in the second block
    t(i, i) = 0.05;
    if (first_block) {
      for (Index j = half; j < v; ++j) t(i, j) = 0.12;
    }
  }
  normalize_rows(t);
  return t;
}

}  // namespace

std::vector<std::string> known_presets() { return {"source", "shifted", "bursty"}; }

DomainSpec make_domain(const std::string& preset, std::uint64_t master_seed,
                       const DomainKnobs& knobs) {
  DomainSpec spec;
  spec.domain_id = preset;
  spec.vocab_size = knobs.vocab_size;
  spec.frames_per_token = knobs.frames_per_token;
  spec.min_tokens = knobs.min_tokens;
  spec.max_tokens = knobs.max_tokens;

  // token means are shared across presets: the domains are acoustic
  // variations of one token inventory, not disjoint languages
  Rng means_rng(derive_seed({hash_name("token_means"), master_seed}));
  spec.token_means = Matrix(knobs.vocab_size, knobs.frame_dim);
  for (Index i = 0; i < spec.token_means.rows(); ++i)
    for (Index j = 0; j < spec.token_means.cols(); ++j)
      spec.token_means(i, j) = means_rng.normal();

  // the three presets share one base mixing; targets are rotated versions of
  // it (plus different transition topologies and noise), so source knowledge
  // is genuinely transferable while the domains stay measurably distinct
  Rng base_rng(derive_seed({hash_name("base_transform"), master_seed}));
  const Matrix base = conditioned_transform(base_rng, knobs.frame_dim, 1.0, 2.0);

  Rng rng(derive_seed({hash_name("domain"), hash_name(preset), master_seed}));
  if (preset == "source") {
    spec.transition = source_transitions(rng, knobs.vocab_size);
    spec.transform = base;
    spec.noise_sigma = 0.5;
  } else if (preset == "shifted") {
    spec.transition = banded_transitions(rng, knobs.vocab_size);
    spec.transform = near_identity_rotation(rng, knobs.frame_dim, 0.45) * base *
                     near_identity_rotation(rng, knobs.frame_dim, 0.45);
    spec.noise_sigma = 1.4;
  } else if (preset == "bursty") {
    spec.transition = block_transitions(rng, knobs.vocab_size);
    spec.transform = near_identity_rotation(rng, knobs.frame_dim, 0.6) * base *
                     near_identity_rotation(rng, knobs.frame_dim, 0.6);
    spec.noise_sigma = 1.5;
  } else {
    throw ConfigError("make_domain: unknown preset '" + preset + "'");
  }
  spec.validate();
  return spec;
}

GeneratedUtterance sample_utterance(const DomainSpec& spec, std::uint64_t seed,
                                    bool labeled) {
  spec.validate();
  Rng rng(derive_seed({hash_name("utterance"), seed}));

  const auto n_tokens =
      spec.min_tokens +
      static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_tokens -
                                                            spec.min_tokens + 1)));
  auto draw_from = [&rng](const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
    const double u = rng.real01();
    double acc = 0.0;
    for (Index j = 0; j < probs.size(); ++j) {
      acc += probs(j);
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size() - 1);
  };

  std::vector<int> states;
  states.reserve(static_cast<std::size_t>(n_tokens));
  int state = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab_size)));
  states.push_back(state);
  for (int i = 1; i < n_tokens; ++i) {
    int next = draw_from(spec.transition.row(state));
    if (next == state) next = draw_from(spec.transition.row(state));  // re-sample once
    states.push_back(next);
    state = next;
  }

  GeneratedUtterance utt;
  utt.domain_id = spec.domain_id;
  utt.seed = seed;
  const Index L = static_cast<Index>(n_tokens) * spec.frames_per_token;
  utt.frames = Matrix(L, spec.frame_dim());
  Eigen::VectorXd noise(spec.frame_dim());
  Index row = 0;
  for (int tok : states) {
    for (int f = 0; f < spec.frames_per_token; ++f) {
      for (Index j = 0; j < noise.size(); ++j) noise(j) = spec.noise_sigma * rng.normal();
      utt.frames.row(row++) =
          (spec.transform * (spec.token_means.row(tok).transpose() + noise)).transpose();
    }
  }
  if (labeled) {
    utt.tokens.reserve(states.size());
    for (int tok : states) utt.tokens.push_back(tok + 1);  // 0 is the CTC blank
  }
  return utt;
}

double transform_distance(const DomainSpec& a, const DomainSpec& b) {
  const double na = a.transform.norm();
  const double nb = b.transform.norm();
  return (a.transform - b.transform).norm() / std::max(na, nb);
}

Matrix effective_transition(const DomainSpec& spec) {
  const Index v = spec.transition.rows();
  Matrix eff(v, v);
  for (Index i = 0; i < v; ++i) {
    const double self = spec.transition(i, i);
    for (Index j = 0; j < v; ++j) {
      eff(i, j) = j == i ? self * self : spec.transition(i, j) * (1.0 + self);
    }
  }
  return eff;
}

}  // namespace fusdom
