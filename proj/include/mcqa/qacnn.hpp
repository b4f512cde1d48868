#pragma once

#include <vector>

#include "mcqa/corpus.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

// Query-based attention CNN. Similarity maps between the story and the
// question/choices feed a two-stage convolution; a question-based attention
// vector gates each stage; a shared two-layer scorer maps every per-choice
// feature to a scalar, and the scalars are softmax-normalized across however
// many choices are present. Parameter names: qacnn.embed, qacnn.conv1.*,
// qacnn.conv2.*, qacnn.fc1.*, qacnn.fc2.*.
struct QacnnConfig {
    std::size_t embed_dim = 16;
    std::size_t choice_len = 8;     // choices padded/truncated to this length
    std::size_t conv_width = 3;     // odd
    std::size_t filters1 = 32;
    std::size_t filters2 = 32;
    std::size_t hidden = 64;
    double attention_scale = 2.0;   // sharpening factor for cosine logits
};

struct SimilarityMaps {
    std::vector<Tensor> sq;               // per sentence: L_s x L_q
    std::vector<std::vector<Tensor>> sc;  // [choice][sentence]: L_s x choice_len
};

struct AttentionRecord {
    std::vector<std::vector<double>> word_level;  // per sentence, sums to 1
    std::vector<double> sentence_level;           // over sentences, sums to 1
};

ParamStore qacnn_init(const QacnnConfig& cfg, std::size_t vocab_size, const RngStream& rng,
                      const EmbeddingMatrix* pretrained = nullptr);

SimilarityMaps similarity_maps(const ParamStore& params, const McqaExample& ex,
                               const QacnnConfig& cfg);

// Per story word: max over question words, then a scaled softmax over the
// story words of the sentence.
Tensor word_attention(const Tensor& sq_sentence, double attention_scale);

// Choice probabilities, n_choices x 1. The attention record, when requested,
// holds the question-based word- and sentence-level attention maps.
Tensor qacnn_forward(const ParamStore& params, const McqaExample& ex, const QacnnConfig& cfg,
                     AttentionRecord* attention = nullptr);

std::size_t qacnn_predict(const ParamStore& params, const McqaExample& ex,
                          const QacnnConfig& cfg);

// Attention maps aligned to the encoded (pre-padding) tokens for plotting.
AttentionRecord export_attention(const ParamStore& params, const McqaExample& ex,
                                 const QacnnConfig& cfg);

}  // namespace mcqa
