#include "fan/fanhead.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fan/errors.hpp"
#include "fan/rng.hpp"

namespace fan {

namespace {

void check_frames(const Matrix& features, std::size_t dim) {
  if (features.cols() != dim) {
    throw DimensionError("frame features have dimension " + std::to_string(features.cols()) +
                         ", model expects " + std::to_string(dim));
  }
}

void check_weights(const Vector& w, std::size_t n, const char* what) {
  if (w.size() != n) {
    throw DimensionError(std::string(what) + " has " + std::to_string(w.size()) +
                         " entries for " + std::to_string(n) + " frames");
  }
  for (double v : w.values()) {
    if (!(v > 0.0)) throw DomainError(std::string(what) + " must be strictly positive");
  }
}

// sum_i (w_i / sum_j w_j) row_i, accumulated in frame order. Normalizing
// first makes a single frame come back bit-exact (w / w == 1).
std::vector<double> weighted_mean(const Matrix& features, std::span<const double> w) {
  const std::size_t d = features.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) total += w[i];
  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const double p = w[i] / total;
    auto f = features.row(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += p * f[j];
  }
  return acc;
}

void affine(const Matrix& weight, const Vector& bias, std::span<const double> x,
            std::vector<double>& out) {
  out.assign(weight.rows(), 0.0);
  for (std::size_t k = 0; k < weight.rows(); ++k) out[k] = dot(weight.row(k), x) + bias[k];
}

void fill_uniform(std::span<double> values, double limit, Rng& rng) {
  for (double& v : values) v = rng.uniform(-limit, limit);
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::Full ? "full" : "self-only"; }

Mode parse_mode(std::string_view text) {
  if (text == "full") return Mode::Full;
  if (text == "self-only" || text == "self_only" || text == "selfonly") return Mode::SelfOnly;
  throw ConfigError("unknown mode '" + std::string(text) + "' (expected full or self-only)");
}

void FanParams::validate() const {
  const std::size_t d = dim();
  const std::size_t expected_cols = mode == Mode::Full ? 2 * d : d;
  if (q1.size() != 2 * d) throw DimensionError("q1 must have length 2D");
  if (class_weight.cols() != expected_cols) {
    throw DimensionError("classifier expects " + std::to_string(expected_cols) +
                         " inputs for mode " + std::string(to_string(mode)));
  }
  if (class_weight.rows() != classes()) {
    throw DimensionError("classifier rows disagree with bias length");
  }
}

FanParams FanParams::zeros(Mode mode, std::size_t dim, std::size_t classes) {
  const std::size_t rep = mode == Mode::Full ? 2 * dim : dim;
  return FanParams{mode, Vector::zeros(dim), Vector::zeros(2 * dim), Matrix::zeros(classes, rep),
                   Vector::zeros(classes)};
}

FanParams FanParams::initialize(Mode mode, std::size_t dim, std::size_t classes,
                                std::uint64_t seed) {
  FanParams p = zeros(mode, dim, classes);
  Rng rng = Rng::derive(seed, {kInitStream});
  fill_uniform(p.q0.span(), std::sqrt(6.0 / static_cast<double>(dim + 1)), rng);
  fill_uniform(p.q1.span(), std::sqrt(6.0 / static_cast<double>(2 * dim + 1)), rng);
  fill_uniform(p.class_weight.span(),
               std::sqrt(6.0 / static_cast<double>(p.representation_dim() + classes)), rng);
  return p;
}

std::size_t parameter_count(Mode mode, std::size_t dim, std::size_t classes) {
  const std::size_t rep = mode == Mode::Full ? 2 * dim : dim;
  return dim + 2 * dim + classes * rep + classes;
}

Vector flatten(const FanParams& params) {
  std::vector<double> flat;
  flat.reserve(parameter_count(params.mode, params.dim(), params.classes()));
  for (auto s : {params.q0.span(), params.q1.span(), params.class_weight.span(),
                 params.class_bias.span()}) {
    flat.insert(flat.end(), s.begin(), s.end());
  }
  return Vector(std::move(flat));
}

FanParams unflatten(const Vector& flat, Mode mode, std::size_t dim, std::size_t classes) {
  if (flat.size() != parameter_count(mode, dim, classes)) {
    throw DimensionError("flat parameter vector has wrong length");
  }
  FanParams p = FanParams::zeros(mode, dim, classes);
  std::size_t pos = 0;
  for (auto s : {p.q0.span(), p.q1.span(), p.class_weight.span(), p.class_bias.span()}) {
    for (double& v : s) v = flat[pos++];
  }
  return p;
}

Vector self_attention(const Matrix& features, const Vector& q0) {
  check_frames(features, q0.size());
  std::vector<double> alpha(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    alpha[i] = sigmoid(dot(features.row(i), q0.span()));
  }
  return Vector(std::move(alpha));
}

Vector global_anchor(const Matrix& features, const Vector& alpha) {
  check_weights(alpha, features.rows(), "self-attention weights");
  return Vector(weighted_mean(features, alpha.span()));
}

Vector relation_attention(const Matrix& features, const Vector& anchor, const Vector& q1) {
  const std::size_t d = features.cols();
  if (anchor.size() != d) throw DimensionError("anchor dimension differs from frame dimension");
  if (q1.size() != 2 * d) throw DimensionError("relation kernel must have length 2D");
  auto q1_frame = q1.span().first(d);
  auto q1_anchor = q1.span().last(d);
  const double anchor_term = dot(anchor.span(), q1_anchor);
  std::vector<double> beta(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    beta[i] = sigmoid(dot(features.row(i), q1_frame) + anchor_term);
  }
  return Vector(std::move(beta));
}

Vector aggregate(const Matrix& features, const Vector& anchor, const Vector& alpha,
                 const Vector& beta) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (anchor.size() != d) throw DimensionError("anchor dimension differs from frame dimension");
  if (alpha.size() != n || beta.size() != n) throw DimensionError("weight count differs from n");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = alpha[i] * beta[i];
  check_weights(Vector(w), n, "combined attention weights");

  // The anchor half is the same vector averaged with weights summing to one,
  // so it is copied rather than re-accumulated.
  std::vector<double> out = weighted_mean(features, w);
  out.insert(out.end(), anchor.values().begin(), anchor.values().end());
  return Vector(std::move(out));
}

Vector aggregate_self_only(const Matrix& features, const Vector& alpha) {
  return global_anchor(features, alpha);
}

ForwardResult forward(const Matrix& features, const FanParams& params) {
  params.validate();
  check_frames(features, params.dim());
  const std::size_t n = features.rows();

  Vector alpha = self_attention(features, params.q0);
  Vector anchor = global_anchor(features, alpha);

  Vector beta = Vector(std::vector<double>(n, 1.0));
  Vector rep = anchor;
  std::vector<double> combined(alpha.values());
  if (params.mode == Mode::Full) {
    beta = relation_attention(features, anchor, params.q1);
    rep = aggregate(features, anchor, alpha, beta);
    for (std::size_t i = 0; i < n; ++i) combined[i] *= beta[i];
  }

  double total = 0.0;
  for (double w : combined) total += w;
  for (double& w : combined) w /= total;

  std::vector<double> logits;
  affine(params.class_weight, params.class_bias, rep.span(), logits);
  if (!all_finite(logits)) throw NumericError("forward produced non-finite logits");

  return ForwardResult{Vector(std::move(logits)),
                       AttentionTrace{std::move(alpha), std::move(beta),
                                      Vector(std::move(combined)), std::move(anchor),
                                      std::move(rep)}};
}

BackwardResult backward(const Matrix& features, const FanParams& params, std::size_t label) {
  ForwardResult fwd = forward(features, params);
  const AttentionTrace& tr = fwd.trace;
  const std::size_t n = features.rows();
  const std::size_t d = params.dim();
  const std::size_t c = params.classes();

  LossAndGrad ce = softmax_cross_entropy(fwd.logits, label);
  const Vector& g_logits = ce.grad;

  FanGradients grads = FanParams::zeros(params.mode, d, c);

  // Classifier: logits = W z + b.
  const std::size_t rep_dim = params.representation_dim();
  std::vector<double> g_rep(rep_dim, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    grads.class_bias[k] = g_logits[k];
    auto w_row = params.class_weight.row(k);
    auto gw_row = grads.class_weight.row(k);
    for (std::size_t j = 0; j < rep_dim; ++j) {
      gw_row[j] = g_logits[k] * tr.aggregate[j];
      g_rep[j] += g_logits[k] * w_row[j];
    }
  }

  std::vector<double> g_anchor(d, 0.0);
  std::vector<double> g_alpha(n, 0.0);

  if (params.mode == Mode::Full) {
    // z = [sum_i p_i f_i : anchor], p_i = alpha_i beta_i / sum_j alpha_j beta_j.
    std::span<const double> g_frame_half(g_rep.data(), d);
    for (std::size_t j = 0; j < d; ++j) g_anchor[j] = g_rep[d + j];

    double combined_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) combined_total += tr.alpha[i] * tr.beta[i];

    const double mean_proj = dot(tr.aggregate.span().first(d), g_frame_half);
    auto q1_anchor = params.q1.span().last(d);
    double g_relation_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto f = features.row(i);
      const double g_combined = (dot(f, g_frame_half) - mean_proj) / combined_total;
      g_alpha[i] += g_combined * tr.beta[i];
      const double g_beta = g_combined * tr.alpha[i];
      const double g_relation = g_beta * tr.beta[i] * (1.0 - tr.beta[i]);
      g_relation_sum += g_relation;
      for (std::size_t j = 0; j < d; ++j) {
        grads.q1[j] += g_relation * f[j];
        grads.q1[d + j] += g_relation * tr.anchor[j];
      }
    }
    // The anchor also enters every relation logit through q1's second half.
    for (std::size_t j = 0; j < d; ++j) g_anchor[j] += g_relation_sum * q1_anchor[j];
  } else {
    for (std::size_t j = 0; j < d; ++j) g_anchor[j] = g_rep[j];
  }

  // anchor = sum_i alpha_i f_i / sum_i alpha_i.
  double alpha_total = 0.0;
  for (double a : tr.alpha.values()) alpha_total += a;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = features.row(i);
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += (f[j] - tr.anchor[j]) * g_anchor[j];
    g_alpha[i] += proj / alpha_total;
    const double g_self = g_alpha[i] * tr.alpha[i] * (1.0 - tr.alpha[i]);
    for (std::size_t j = 0; j < d; ++j) grads.q0[j] += g_self * f[j];
  }

  for (auto s : {grads.q0.span(), grads.q1.span(), grads.class_weight.span(),
                 grads.class_bias.span()}) {
    if (!all_finite(s)) throw NumericError("backward produced a non-finite gradient");
  }
  return BackwardResult{ce.loss, std::move(grads), std::move(fwd.logits)};
}

std::size_t predict(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("predict on empty logits");
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

std::size_t predict(const Vector& logits) { return predict(logits.span()); }

}  // namespace fan
