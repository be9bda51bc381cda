#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "fan/numkernel.hpp"

namespace fan {

// Full: self-attention, relation-attention, classifier on [f : anchor].
// SelfOnly: self-attention only, classifier on the anchor.
enum class Mode : std::uint32_t { Full = 0, SelfOnly = 1 };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

// Trainable parameters of the aggregation head plus its linear classifier.
//
// q1 is always 2D long; in SelfOnly mode it is carried along but never
// influences the output, so its gradient is identically zero.
struct FanParams {
  Mode mode;
  Vector q0;            // D, self-attention kernel
  Vector q1;            // 2D, relation-attention kernel over [f_i : anchor]
  Matrix class_weight;  // C x 2D (Full) or C x D (SelfOnly)
  Vector class_bias;    // C

  std::size_t dim() const { return q0.size(); }
  std::size_t classes() const { return class_bias.size(); }
  std::size_t representation_dim() const { return class_weight.cols(); }

  // Throws DimensionError if the fields disagree on D, C or mode.
  void validate() const;

  static FanParams zeros(Mode mode, std::size_t dim, std::size_t classes);

  // Glorot-uniform kernels and classifier weights, zero bias.
  static FanParams initialize(Mode mode, std::size_t dim, std::size_t classes, std::uint64_t seed);

  bool operator==(const FanParams&) const = default;
};

// Same shapes as FanParams; one cotangent per parameter entry.
using FanGradients = FanParams;

std::size_t parameter_count(Mode mode, std::size_t dim, std::size_t classes);

// Fixed order: q0, q1, class_weight (row-major), class_bias.
Vector flatten(const FanParams& params);
FanParams unflatten(const Vector& flat, Mode mode, std::size_t dim, std::size_t classes);

// Per-frame weights of one forward pass, for inspection and export.
struct AttentionTrace {
  Vector alpha;          // n, self-attention weights
  Vector beta;           // n, relation-attention weights (all ones in SelfOnly mode)
  Vector final_weights;  // n, normalized alpha*beta (or alpha); sums to 1
  Vector anchor;         // D
  Vector aggregate;      // 2D (Full) or D (SelfOnly); the classifier input
};

Vector self_attention(const Matrix& features, const Vector& q0);
Vector global_anchor(const Matrix& features, const Vector& alpha);
Vector relation_attention(const Matrix& features, const Vector& anchor, const Vector& q1);
Vector aggregate(const Matrix& features, const Vector& anchor, const Vector& alpha,
                 const Vector& beta);
Vector aggregate_self_only(const Matrix& features, const Vector& alpha);

struct ForwardResult {
  Vector logits;
  AttentionTrace trace;
};

ForwardResult forward(const Matrix& features, const FanParams& params);

struct BackwardResult {
  double loss;
  FanGradients grads;
  Vector logits;
};

BackwardResult backward(const Matrix& features, const FanParams& params, std::size_t label);

// Argmax with ties going to the lowest index.
std::size_t predict(std::span<const double> logits);
std::size_t predict(const Vector& logits);

}  // namespace fan
