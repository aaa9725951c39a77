#include "fusdom/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fusdom/adam.hpp"
#include "fusdom/rng.hpp"

namespace fusdom {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double lse3(double a, double b, double c) { return lse2(lse2(a, b), c); }

}  // namespace

int label_repeats(const std::vector<int>& labels) {
  int repeats = 0;
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++repeats;
  }
  return repeats;
}

Tensor ctc_loss(const Tensor& log_probs, const std::vector<int>& labels) {
  const Index L = log_probs.rows();
  const Index V = log_probs.cols();
  if (L < 1 || V < 2) {
    throw ShapeError("ctc_loss: log_probs " + detail::shape_str(log_probs.value()) +
                     " needs at least 1 frame and 2 classes");
  }
  for (int id : labels) {
    if (id < 1 || id >= V) {
      throw ContractError("ctc_loss: label id " + std::to_string(id) +
                          " outside [1, " + std::to_string(V - 1) + "]");
    }
  }
  const Matrix& lp = log_probs.value();
  for (Index t = 0; t < L; ++t) {
    const double mx = lp.row(t).maxCoeff();
    const double lse = mx + std::log((lp.row(t).array() - mx).exp().sum());
    if (std::abs(lse) > 1e-9) {
      throw ContractError("ctc_loss: row " + std::to_string(t) +
                          " is not log-normalised (logsumexp = " + std::to_string(lse) +
                          ")");
    }
  }
  const auto U = static_cast<Index>(labels.size());
  const Index needed = U + label_repeats(labels);
  if (L < needed) {
    throw FeasibilityError("ctc_loss: " + std::to_string(L) + " frames cannot carry " +
                           std::to_string(U) + " labels with " +
                           std::to_string(label_repeats(labels)) + " repeats");
  }

  // blank-augmented symbol sequence: blank, l1, blank, l2, ..., blank
  const Index S = 2 * U + 1;
  std::vector<int> sym(static_cast<std::size_t>(S), Vocab::blank_id);
  for (Index u = 0; u < U; ++u) sym[static_cast<std::size_t>(2 * u + 1)] = labels[u];

  Matrix alpha = Matrix::Constant(L, S, kNegInf);
  alpha(0, 0) = lp(0, Vocab::blank_id);
  if (S > 1) alpha(0, 1) = lp(0, sym[1]);
  auto can_skip = [&](Index s) {
    return s >= 2 && sym[static_cast<std::size_t>(s)] != Vocab::blank_id &&
           sym[static_cast<std::size_t>(s)] != sym[static_cast<std::size_t>(s - 2)];
  };
  for (Index t = 1; t < L; ++t) {
    for (Index s = 0; s < S; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = lse2(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = lse2(acc, alpha(t - 1, s - 2));
      if (acc != kNegInf) alpha(t, s) = acc + lp(t, sym[static_cast<std::size_t>(s)]);
    }
  }
  const double final_a = alpha(L - 1, S - 1);
  const double final_b = S >= 2 ? alpha(L - 1, S - 2) : kNegInf;
  const double log_total = lse2(final_a, final_b);
  if (!std::isfinite(log_total)) {
    throw NumericError("ctc_loss: no feasible alignment has positive probability");
  }
  Matrix out(1, 1);
  out(0, 0) = -log_total;

  Tensor y = detail::op_result(std::move(out), detail::want_grad({&log_probs}));
  if (y.requires_grad()) {
    auto xn = log_probs.node();
    auto yn = y.node();
    auto syms = sym;
    Tape::current()->record("ctc_loss", {log_probs}, y, [xn, yn, alpha, syms, L, S,
                                                         log_total] {
      const double gout = yn->grad(0, 0);
      if (gout == 0.0) return;
      auto skip_ok = [&syms](Index s) {
        return s >= 2 && syms[static_cast<std::size_t>(s)] != Vocab::blank_id &&
               syms[static_cast<std::size_t>(s)] != syms[static_cast<std::size_t>(s - 2)];
      };
      Matrix dalpha = Matrix::Zero(L, S);
      dalpha(L - 1, S - 1) = -gout * std::exp(alpha(L - 1, S - 1) - log_total);
      if (S >= 2) dalpha(L - 1, S - 2) = -gout * std::exp(alpha(L - 1, S - 2) - log_total);
      for (Index t = L - 1; t >= 1; --t) {
        for (Index s = 0; s < S; ++s) {
          const double g = dalpha(t, s);
          if (g == 0.0 || alpha(t, s) == kNegInf) continue;
          xn->grad(t, syms[static_cast<std::size_t>(s)]) += g;
          // alpha(t,s) = lp(t, sym) + lse(prevs); distribute over the prevs
          const double inner = alpha(t, s) - xn->value(t, syms[static_cast<std::size_t>(s)]);
          if (alpha(t - 1, s) != kNegInf) {
            dalpha(t - 1, s) += g * std::exp(alpha(t - 1, s) - inner);
          }
          if (s >= 1 && alpha(t - 1, s - 1) != kNegInf) {
            dalpha(t - 1, s - 1) += g * std::exp(alpha(t - 1, s - 1) - inner);
          }
          if (skip_ok(s) && alpha(t - 1, s - 2) != kNegInf) {
            dalpha(t - 1, s - 2) += g * std::exp(alpha(t - 1, s - 2) - inner);
          }
        }
      }
      xn->grad(0, syms[0]) += dalpha(0, 0);
      if (S > 1) xn->grad(0, syms[1]) += dalpha(0, 1);
    });
  }
  return y;
}

std::vector<int> greedy_decode(const Matrix& log_probs) {
  std::vector<int> out;
  int prev = -1;
  for (Index t = 0; t < log_probs.rows(); ++t) {
    Index best = 0;
    log_probs.row(t).maxCoeff(&best);
    const int id = static_cast<int>(best);
    if (id != Vocab::blank_id && id != prev) out.push_back(id);
    prev = id;
  }
  return out;
}

EvalResult wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const auto R = static_cast<Index>(ref.size());
  const auto H = static_cast<Index>(hyp.size());
  Matrix d(R + 1, H + 1);
  for (Index i = 0; i <= R; ++i) d(i, 0) = static_cast<double>(i);
  for (Index j = 0; j <= H; ++j) d(0, j) = static_cast<double>(j);
  for (Index i = 1; i <= R; ++i) {
    for (Index j = 1; j <= H; ++j) {
      const double sub_cost =
          ref[static_cast<std::size_t>(i - 1)] == hyp[static_cast<std::size_t>(j - 1)]
              ? 0.0
              : 1.0;
      d(i, j) = std::min({d(i - 1, j - 1) + sub_cost, d(i - 1, j) + 1.0,
                          d(i, j - 1) + 1.0});
    }
  }
  EvalResult r;
  r.n_ref_tokens = R;
  Index i = R, j = H;
  while (i > 0 || j > 0) {
    const double sub_cost =
        (i > 0 && j > 0 &&
         ref[static_cast<std::size_t>(i - 1)] == hyp[static_cast<std::size_t>(j - 1)])
            ? 0.0
            : 1.0;
    if (i > 0 && j > 0 && d(i, j) == d(i - 1, j - 1) + sub_cost) {
      if (sub_cost > 0.0) ++r.substitutions;
      --i;
      --j;
    } else if (i > 0 && d(i, j) == d(i - 1, j) + 1.0) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  const auto edits = r.substitutions + r.insertions + r.deletions;
  r.wer = R > 0 ? static_cast<double>(edits) / static_cast<double>(R)
                : static_cast<double>(edits);
  return r;
}

namespace {

void validate_utterances(const std::vector<LabeledUtterance>& data, const Vocab& vocab,
                         int frame_dim) {
  if (data.empty()) throw DataError("finetune: empty training set");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LabeledUtterance& u = data[i];
    if (u.labels.empty()) {
      throw DataError("finetune: utterance " + std::to_string(i) + " has no labels");
    }
    if (u.frames.cols() != frame_dim) {
      throw DataError("finetune: utterance " + std::to_string(i) + " frame_dim " +
                      std::to_string(u.frames.cols()) + " != " +
                      std::to_string(frame_dim));
    }
    for (int id : u.labels) {
      if (id < 1 || id > vocab.vocab_size) {
        throw DataError("finetune: utterance " + std::to_string(i) +
                        " label id out of vocabulary: " + std::to_string(id));
      }
    }
    const auto needed =
        static_cast<Index>(u.labels.size()) + label_repeats(u.labels);
    if (u.frames.rows() < needed) {
      throw DataError("finetune: utterance " + std::to_string(i) +
                      " is infeasible for CTC");
    }
  }
}

Tensor ctc_head_init_w(const BackboneConfig& cfg, const Vocab& vocab, std::uint64_t seed) {
  Rng rng(derive_seed({hash_name("ctc_head"), seed}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  Matrix w(cfg.d_model, vocab.n_classes());
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
  return Tensor::param(std::move(w), "ctc_head.w");
}

FinetuneResult finetune_impl(const ModelSnapshot& snapshot,
                             const std::vector<LabeledUtterance>& train,
                             const Vocab& vocab, const FinetuneConfig& cfg, bool freeze) {
  validate_utterances(train, vocab, snapshot.config().frame_dim);
  FinetuneResult result;
  result.model.backbone = snapshot;
  result.model.backbone.set_trainable(!freeze);
  result.model.head_w = ctc_head_init_w(snapshot.config(), vocab, cfg.seed);
  result.model.head_b = Tensor::param(Matrix::Zero(1, vocab.n_classes()), "ctc_head.b");
  result.model.vocab = vocab;
  result.model.mode = freeze ? "probe" : "e2e";

  std::vector<Tensor> trainable;
  if (!freeze) trainable = result.model.backbone.params();
  trainable.push_back(result.model.head_w);
  trainable.push_back(result.model.head_b);
  AdamState opt(trainable, AdamConfig{cfg.lr});

  // length-bucketed batches: sort once, shuffle batch order per epoch
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return train[a].frames.rows() < train[b].frames.rows();
  });
  const auto batch_size = static_cast<std::size_t>(std::max(cfg.batch_size, 1));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() +
                             static_cast<std::ptrdiff_t>(std::min(i + batch_size, order.size())));
  }

  long step_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    Rng shuffle_rng(derive_seed({hash_name("ft_batches"), cfg.seed,
                                 static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(batch_order);

    double epoch_total = 0.0;
    for (std::size_t b : batch_order) {
      ++step_index;
      try {
        zero_grads(trainable);
        Tape tape;
        Tensor total;
        for (std::size_t ui : batches[b]) {
          const LabeledUtterance& u = train[ui];
          Tensor reps;
          if (freeze) {
            NoGradGuard ng;
            reps = encode(result.model.backbone, Tensor::constant(u.frames)).values;
          } else {
            reps = encode(result.model.backbone, Tensor::constant(u.frames)).values;
          }
          Tensor logits = add_bias(matmul(reps, result.model.head_w), result.model.head_b);
          Tensor loss_u = ctc_loss(log_softmax_rows(logits), u.labels);
          total = total.defined() ? add(total, loss_u) : loss_u;
        }
        Tensor loss = scale(total, 1.0 / static_cast<double>(batches[b].size()));
        if (!std::isfinite(loss.item())) {
          throw NumericError("non-finite batch loss");
        }
        epoch_total += loss.item() * static_cast<double>(batches[b].size());
        tape.backward(loss);
        adam_step(trainable, opt);
      } catch (const NumericError& e) {
        throw TrainingError("finetune: aborted at step " + std::to_string(step_index) +
                            ": " + e.what());
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(train.size()));
  }
  return result;
}

}  // namespace

FinetuneResult finetune_e2e(const ModelSnapshot& snapshot,
                            const std::vector<LabeledUtterance>& train, const Vocab& vocab,
                            const FinetuneConfig& cfg) {
  return finetune_impl(snapshot, train, vocab, cfg, false);
}

FinetuneResult frozen_probe(const ModelSnapshot& snapshot,
                            const std::vector<LabeledUtterance>& train, const Vocab& vocab,
                            const FinetuneConfig& cfg) {
  return finetune_impl(snapshot, train, vocab, cfg, true);
}

Matrix predict_log_probs(const FinetunedModel& model, const Matrix& frames) {
  NoGradGuard ng;
  Tensor reps = encode(model.backbone, Tensor::constant(frames)).values;
  Tensor logits = add_bias(matmul(reps, model.head_w), model.head_b);
  return log_softmax_rows(logits).value();
}

EvalResult evaluate(const FinetunedModel& model, const std::vector<LabeledUtterance>& test) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  EvalResult total;
  for (const LabeledUtterance& u : test) {
    const std::vector<int> hyp = greedy_decode(predict_log_probs(model, u.frames));
    const EvalResult r = wer(u.labels, hyp);
    total.substitutions += r.substitutions;
    total.insertions += r.insertions;
    total.deletions += r.deletions;
    total.n_ref_tokens += r.n_ref_tokens;
  }
  const auto edits = total.substitutions + total.insertions + total.deletions;
  total.wer = total.n_ref_tokens > 0
                  ? static_cast<double>(edits) / static_cast<double>(total.n_ref_tokens)
                  : static_cast<double>(edits);
  return total;
}

}  // namespace fusdom
