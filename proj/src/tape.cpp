#include "fewshot/tape.hpp"

#include <string>

namespace fewshot {

const char* primitive_name(Primitive op) {
  switch (op) {
    case Primitive::Leaf: return "leaf";
    case Primitive::Add: return "add";
    case Primitive::Sub: return "sub";
    case Primitive::Mul: return "mul";
    case Primitive::Scale: return "scale";
    case Primitive::Divide: return "divide";
    case Primitive::MatVec: return "matvec";
    case Primitive::Tanh: return "tanh";
    case Primitive::Sum: return "sum";
    case Primitive::Exp: return "exp";
    case Primitive::Log: return "log";
    case Primitive::Sqrt: return "sqrt";
    case Primitive::Softmax: return "softmax";
    case Primitive::CosineSim: return "cosine_similarity";
    case Primitive::SquaredDistance: return "squared_distance";
    case Primitive::Element: return "element";
    case Primitive::Stack: return "stack";
    case Primitive::EmbeddingMean: return "embedding_mean";
    case Primitive::CosineSimilarityMatrix: return "cosine_similarity_matrix";
    case Primitive::SupConLoss: return "supcon_loss";
    case Primitive::WeightedAverage: return "weighted_average";
  }
  return "unknown";
}

Primitive parse_primitive(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Primitive::WeightedAverage); ++i) {
    const auto op = static_cast<Primitive>(i);
    if (name == primitive_name(op)) return op;
  }
  throw std::invalid_argument("unknown primitive '" + std::string(name) + "'");
}

}  // namespace fewshot
