#pragma once

// Trainable text encoder (mean-pooled embeddings followed by a two-layer MLP)
// and the square projection layer used by instance attention.

#include "fewshot/dataset.hpp"
#include "fewshot/tape.hpp"
#include "fewshot/text.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace fewshot {

template <typename Scalar>
struct EncoderParams {
  Tensor<Scalar> embedding;      // |V| x d; 0 x d in fixed-embedding mode
  Tensor<Scalar> hidden_weight;  // d x input width
  Tensor<Scalar> hidden_bias;    // d x 1
  Tensor<Scalar> output_weight;  // d x d
  Tensor<Scalar> output_bias;    // d x 1

  Eigen::Index dim() const { return output_weight.rows(); }
  Eigen::Index input_width() const { return hidden_weight.cols(); }
};

template <typename Scalar>
struct ProjectionParams {
  Tensor<Scalar> weight;  // d x d
  Tensor<Scalar> bias;    // d x 1
};

inline constexpr std::array<std::string_view, 7> kParameterNames = {
    "encoder.embedding",     "encoder.hidden.weight", "encoder.hidden.bias", "encoder.output.weight",
    "encoder.output.bias",   "projection.weight",     "projection.bias",
};

template <typename Scalar>
struct ModelParams {
  EncoderParams<Scalar> encoder;
  ProjectionParams<Scalar> projection;

  std::array<Tensor<Scalar>*, 7> tensors() {
    return {&encoder.embedding,     &encoder.hidden_weight, &encoder.hidden_bias, &encoder.output_weight,
            &encoder.output_bias,   &projection.weight,     &projection.bias};
  }
  std::array<const Tensor<Scalar>*, 7> tensors() const {
    return {&encoder.embedding,     &encoder.hidden_weight, &encoder.hidden_bias, &encoder.output_weight,
            &encoder.output_bias,   &projection.weight,     &projection.bias};
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<Other>();
    return out;
  }

  ModelParams zeros_like() const {
    ModelParams out;
    auto dst = out.tensors();
    auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Tensor<Scalar>::Zero(src[i]->rows(), src[i]->cols());
    return out;
  }
};

// Embeddings ~ N(0, 1); weights Glorot-uniform; biases zero. Draws happen in
// double so 32- and 64-bit models start from the same point.
template <typename Scalar>
ModelParams<Scalar> init_model_params(Eigen::Index dim, Eigen::Index vocab_size, Eigen::Index input_width,
                                      std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("representation width must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    Tensor<double> w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform(rng);
    return w;
  };
  Tensor<double> embedding(vocab_size, dim);
  for (Eigen::Index i = 0; i < embedding.size(); ++i) embedding(i) = normal(rng);
  embedding.topRows(std::min<Eigen::Index>(vocab_size, 1)).setZero();  // padding row

  ModelParams<double> p;
  p.encoder.embedding = std::move(embedding);
  p.encoder.hidden_weight = glorot(dim, input_width);
  p.encoder.hidden_bias = Tensor<double>::Zero(dim, 1);
  p.encoder.output_weight = glorot(dim, dim);
  p.encoder.output_bias = Tensor<double>::Zero(dim, 1);
  p.projection.weight = glorot(dim, dim);
  p.projection.bias = Tensor<double>::Zero(dim, 1);
  return p.template cast<Scalar>();
}

template <typename Scalar>
struct EncoderVars {
  Var<Scalar> embedding, hidden_weight, hidden_bias, output_weight, output_bias;
};

template <typename Scalar>
struct ProjectionVars {
  Var<Scalar> weight, bias;
};

template <typename Scalar>
struct ModelVars {
  EncoderVars<Scalar> encoder;
  ProjectionVars<Scalar> projection;

  static ModelVars bind(Tape<Scalar>& tape, const ModelParams<Scalar>& params) {
    const auto& e = params.encoder;
    return ModelVars{{tape.parameter(e.embedding), tape.parameter(e.hidden_weight), tape.parameter(e.hidden_bias),
                      tape.parameter(e.output_weight), tape.parameter(e.output_bias)},
                     {tape.parameter(params.projection.weight), tape.parameter(params.projection.bias)}};
  }

  // Variables in kParameterNames order.
  std::array<Var<Scalar>, 7> all() const {
    return {encoder.embedding,     encoder.hidden_weight, encoder.hidden_bias, encoder.output_weight,
            encoder.output_bias,   projection.weight,     projection.bias};
  }

  ModelParams<Scalar> gradients(const Tape<Scalar>& tape) const {
    ModelParams<Scalar> g;
    auto dst = g.tensors();
    auto vars = all();
    for (std::size_t i = 0; i < vars.size(); ++i) *dst[i] = tape.gradient(vars[i]);
    return g;
  }
};

// MLP head applied to a pooled input: output(tanh(hidden(x))).
template <typename Scalar>
Var<Scalar> encode_pooled(const EncoderVars<Scalar>& enc, const Var<Scalar>& pooled) {
  auto hidden = tanh(matvec(enc.hidden_weight, pooled) + enc.hidden_bias);
  return matvec(enc.output_weight, hidden) + enc.output_bias;
}

template <typename Scalar>
Var<Scalar> encode(const EncoderVars<Scalar>& enc, std::span<const int> token_ids) {
  return encode_pooled(enc, embedding_mean(enc.embedding, token_ids));
}

template <typename Scalar>
Var<Scalar> project(const ProjectionVars<Scalar>& g, const Var<Scalar>& v) {
  if (v.rows() != g.weight.cols()) {
    throw ShapeError("project: representation width " + std::to_string(v.rows()) + " does not match projection width " +
                     std::to_string(g.weight.cols()));
  }
  return matvec(g.weight, v) + g.bias;
}

// Turns raw instances into encoder inputs: token ids through a vocabulary, or
// rows of a fixed embedding table (templates are then ignored).
class Featurizer {
 public:
  static Featurizer tokens(Vocabulary vocab, std::size_t max_length = kDefaultMaxSequenceLength) {
    Featurizer f;
    f.vocab_ = std::move(vocab);
    f.max_length_ = max_length;
    return f;
  }
  static Featurizer fixed(FixedEmbeddingTable table) {
    Featurizer f;
    f.table_ = std::move(table);
    return f;
  }

  bool fixed_mode() const { return table_.has_value(); }
  const Vocabulary& vocabulary() const { return vocab_; }
  const std::optional<FixedEmbeddingTable>& table() const { return table_; }
  std::size_t max_length() const { return max_length_; }

  Eigen::Index vocab_size() const { return fixed_mode() ? 0 : static_cast<Eigen::Index>(vocab_.size()); }
  Eigen::Index input_width(Eigen::Index dim) const {
    return fixed_mode() ? static_cast<Eigen::Index>(table_->dim()) : dim;
  }

  std::vector<int> token_ids(std::string_view text) const { return vocab_.ids(tokenize(text, max_length_)); }

  template <typename Scalar>
  Var<Scalar> represent(const EncoderVars<Scalar>& enc, std::string_view text, std::size_t row_index) const {
    if (fixed_mode()) {
      if (row_index >= table_->count()) throw std::out_of_range("fixed embeddings: row index out of range");
      Tensor<Scalar> x = table_->vectors.row(static_cast<Eigen::Index>(row_index)).transpose().template cast<Scalar>();
      return encode_pooled(enc, enc.embedding.tape()->constant(std::move(x)));
    }
    const auto ids = token_ids(text);
    return encode(enc, std::span<const int>(ids));
  }

 private:
  Vocabulary vocab_;
  std::size_t max_length_ = kDefaultMaxSequenceLength;
  std::optional<FixedEmbeddingTable> table_;
};

}  // namespace fewshot
