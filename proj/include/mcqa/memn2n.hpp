#pragma once

#include <optional>
#include <vector>

#include "mcqa/corpus.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Memory network over story sentences, modified for multi-choice QA: a
// fourth embedding layer encodes each answer choice by mean-pooling its
// word embeddings, and choices are scored against the hop-updated question
// representation. Parameter names: memn2n.A / memn2n.B / memn2n.C / memn2n.F.
struct MemN2NConfig {
    std::size_t embed_dim = 16;
    std::size_t hops = 1;
};

struct MemN2NOutput {
    Tensor choice_probs;                              // n_choices x 1
    std::vector<std::vector<double>> hop_attention;   // per hop, over sentences
};

// Mean of the word-embedding rows; PAD tokens are excluded from the mean.
Tensor encode_sentence(const std::vector<std::size_t>& ids, const Tensor& table);

// Optional pretrained matrix initializes B and F; A and C are always random.
ParamStore memn2n_init(const MemN2NConfig& cfg, std::size_t vocab_size, const RngStream& rng,
                       const EmbeddingMatrix* pretrained = nullptr);

MemN2NOutput memn2n_forward(const ParamStore& params, const McqaExample& ex,
                            const MemN2NConfig& cfg);

// Argmax of choice_probs; ties break toward the lowest index.
std::size_t memn2n_predict(const ParamStore& params, const McqaExample& ex,
                           const MemN2NConfig& cfg);

}  // namespace mcqa
