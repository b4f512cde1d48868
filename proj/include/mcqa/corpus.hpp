#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcqa/rng.hpp"
#include "mcqa/tensor.hpp"

namespace mcqa {

constexpr std::size_t PAD_ID = 0;
constexpr std::size_t UNK_ID = 1;

// Token ids are assigned by descending corpus frequency, ties lexicographic,
// so identical corpora always produce identical vocabularies.
class Vocab {
public:
    Vocab();

    std::size_t add(const std::string& token);  // used by build_vocab only
    std::size_t encode(const std::string& token) const;
    const std::string& token(std::size_t id) const { return id_to_token_.at(id); }
    std::size_t size() const { return id_to_token_.size(); }

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// One story/question/choices triplet at the surface-token level.
struct TokenizedExample {
    std::vector<std::vector<std::string>> story;  // sentences
    std::vector<std::string> question;
    std::vector<std::vector<std::string>> choices;
    int answer = -1;  // -1 = absent
    int qtype = 0;    // 0 = untagged, else 1..3
};

struct Dataset {
    std::string name;
    std::string split;  // train / dev / test
    std::size_t choice_count = 0;
    std::vector<TokenizedExample> examples;

    std::size_t size() const { return examples.size(); }
};

// Encoded triplet consumed by the models.
struct McqaExample {
    std::vector<std::vector<std::size_t>> story;
    std::vector<std::size_t> question;
    std::vector<std::vector<std::size_t>> choices;
    int answer = -1;
    int qtype = 0;
};

struct EmbeddingMatrix {
    Tensor table;  // |V| x d, row PAD all-zero
    bool frozen = false;
    std::size_t dim = 0;
};

struct TruncationBounds {
    std::size_t max_sentences = 60;
    std::size_t max_sentence_len = 40;
};

std::vector<std::string> tokenize(const std::string& text);

Dataset load_dataset(const std::string& path, const std::string& name, const std::string& split);
void save_dataset(const Dataset& ds, const std::string& path);

Vocab build_vocab(const std::vector<const Dataset*>& datasets, std::size_t min_count);

McqaExample encode_example(const Vocab& vocab, const TokenizedExample& ex,
                           const TruncationBounds& bounds);
std::vector<McqaExample> encode_dataset(const Vocab& vocab, const Dataset& ds,
                                        const TruncationBounds& bounds);

// Pretrained word-vector file: "token v1 ... vd" per line. In-vocab tokens
// take the file vector; tokens absent from the file are initialized
// uniform(-0.1, 0.1) from the "embed-init" stream; the PAD row is zeroed.
EmbeddingMatrix load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                                const RngStream& rng);

EmbeddingMatrix random_embeddings(const Vocab& vocab, std::size_t d, const RngStream& rng,
                                  const std::string& stream_name);

// floor(fraction * N) training examples without replacement. Samples nest:
// for a fixed seed the 25% sample is a subset of the 50% sample. Original
// example order is preserved.
Dataset subsample(const Dataset& ds, double fraction, const RngStream& rng);

// --- synthetic benchmark --------------------------------------------------

// Desk-scale stand-in for a large source corpus and a small shifted target.
// Each story sentence pairs an entity with an attribute; the question names
// an entity and exactly one choice carries that entity's attribute. The
// target side consistently renames a shift-ratio fraction of surface tokens
// to target-only synonyms, so source pre-training transfers but imperfectly.
struct SynthConfig {
    std::size_t entity_pool = 60;
    std::size_t attribute_pool = 60;
    std::size_t filler_pool = 40;
    std::size_t sentences_per_story = 6;
    std::size_t sentence_len = 5;
    std::size_t source_choices = 5;
    std::size_t target_choices = 4;
    std::size_t source_train = 2000;
    std::size_t source_dev = 200;
    std::size_t source_test = 500;
    std::size_t target_train = 50;
    std::size_t target_dev = 100;
    std::size_t target_test = 500;
    double shift_ratio = 0.3;
    std::uint64_t seed = 0;
};

struct SynthBenchmark {
    Dataset source_train, source_dev, source_test;
    Dataset target_train, target_dev, target_test;
};

SynthBenchmark gen_synthetic(const SynthConfig& cfg);

// Rule-based scorer for synthetic data: finds the sentence naming the
// question entity and picks the choice carrying its attribute token.
double synthetic_oracle_accuracy(const Dataset& ds);

}  // namespace mcqa
