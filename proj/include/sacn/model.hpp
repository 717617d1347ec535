#pragma once

// Encoder + decoder assembly: WGCN stack feeding either Conv-TransE or a baseline scorer.

#include <span>
#include <variant>
#include <vector>

#include "sacn/baselines.hpp"
#include "sacn/config.hpp"
#include "sacn/conv_transe.hpp"
#include "sacn/graph_adjacency.hpp"
#include "sacn/kg_data.hpp"
#include "sacn/wgcn_encoder.hpp"

namespace sacn {

struct ModelShape {
  std::size_t num_entities = 0;
  std::size_t num_edge_types = 0;  // T, forward relations only
  std::size_t num_relations = 0;   // decoder relation table rows, incl. reciprocals

  static ModelShape of(const Vocabulary& v) {
    return {v.num_entities(), v.num_forward_relations(), v.num_relations()};
  }
};

template <typename T>
class KbcModel {
 public:
  KbcModel(const TrainConfig& config, ModelShape shape) : shape_(shape) {
    std::vector<std::size_t> widths;
    if (config.layers == 0) {
      widths = {config.embedding_size};
    } else {
      widths.assign(config.layers, config.encoder_width());
      widths.push_back(config.embedding_size);
    }
    encoder_ = WgcnStack<T>(shape.num_entities, shape.num_edge_types, widths,
                            WgcnOptions{config.dropout, Activation::relu,
                                        config.encoder_output_relu ? Activation::relu : Activation::identity,
                                        config.row_normalize});
    if (config.decoder == DecoderKind::conv_transe) {
      decoder_ = DecoderBank<T>(shape.num_relations, config.embedding_size,
                                DecoderOptions{config.kernel_count, config.kernel_width, config.dropout,
                                               config.batchnorm, config.bias});
    } else {
      decoder_ = BaselineDecoder<T>(
          config.decoder == DecoderKind::distmult ? BaselineKind::distmult : BaselineKind::transe,
          shape.num_relations, config.embedding_size, config.transe_norm);
    }
  }

  void initialize(nn::Rng& rng) {
    encoder_.initialize(rng);
    std::visit([&rng](auto& d) { d.initialize(rng); }, decoder_);
  }

  /// Fixed order; checkpoints and the optimizer rely on it.
  std::vector<nn::Parameter<T>*> parameters() {
    auto out = encoder_.parameters();
    auto dec = std::visit([](auto& d) { return d.parameters(); }, decoder_);
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  const ModelShape& shape() const noexcept { return shape_; }
  WgcnStack<T>& encoder() noexcept { return encoder_; }
  std::variant<DecoderBank<T>, BaselineDecoder<T>>& decoder() noexcept { return decoder_; }

  /// Decoder half: logits for queries against an already-encoded entity matrix.
  nn::Var decode(nn::Tape<T>& tape, nn::Var entities, std::span<const Query> queries, nn::Mode mode, nn::Rng& rng) {
    std::vector<std::size_t> subjects, relations;
    subjects.reserve(queries.size());
    relations.reserve(queries.size());
    for (const auto& q : queries) {
      if (q.s >= shape_.num_entities || q.r >= shape_.num_relations) throw ValidationError("query id out of range");
      subjects.push_back(q.s);
      relations.push_back(q.r);
    }
    return std::visit(
        [&](auto& d) -> nn::Var {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, DecoderBank<T>>) {
            return conv_transe_logits(tape, d, entities, std::move(subjects), std::move(relations), mode, rng);
          } else {
            return baseline_logits(tape, d, entities, std::move(subjects), std::move(relations));
          }
        },
        decoder_);
  }

  /// Full forward: encode the whole graph once, then score every query against all entities.
  nn::Var logits(nn::Tape<T>& tape, const RelationAdjacency& adj, std::span<const Query> queries, nn::Mode mode,
                 nn::Rng& rng) {
    nn::Var h = encode(tape, encoder_, adj, mode, rng);
    return decode(tape, h, queries, mode, rng);
  }

  /// Eval-mode entity matrix H^{L+1}.
  Matrix<T> entity_embeddings(const RelationAdjacency& adj) { return encode(encoder_, adj); }

  /// Eval-mode scores (B×N) against a precomputed entity matrix.
  Matrix<T> score(const Matrix<T>& entities, std::span<const Query> queries) {
    nn::Tape<T> tape;
    nn::Rng rng(0);
    return tape.value(decode(tape, tape.constant_ref(entities), queries, nn::Mode::eval, rng));
  }

 private:
  ModelShape shape_;
  WgcnStack<T> encoder_;
  std::variant<DecoderBank<T>, BaselineDecoder<T>> decoder_;
};

}  // namespace sacn
