#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcqa/corpus.hpp"
#include "mcqa/memn2n.hpp"
#include "mcqa/qacnn.hpp"

namespace mcqa {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModelKind { MemN2N, Qacnn };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct ModelHyper {
    ModelKind kind = ModelKind::Qacnn;
    MemN2NConfig memn2n;
    QacnnConfig qacnn;
};

ParamStore model_init(const ModelHyper& hyper, std::size_t vocab_size, const RngStream& rng,
                      const EmbeddingMatrix* pretrained = nullptr);
Tensor model_forward(const ModelHyper& hyper, const ParamStore& params, const McqaExample& ex);
std::size_t model_predict(const ModelHyper& hyper, const ParamStore& params,
                          const McqaExample& ex);

struct TrainConfig {
    double lr = 0.01;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    ModelHyper model;
    TruncationBounds bounds;
};

// Parameter-name patterns ('*' wildcard) to keep frozen during fine-tuning.
// Pinned parameters stay frozen regardless of the spec.
struct FreezeSpec {
    std::string preset;  // target-only | source-only | source+target | ft-last | ft-last2 | ft-all
    std::vector<std::string> frozen_patterns;
};

FreezeSpec freeze_preset(const std::string& name);
bool pattern_match(const std::string& pattern, const std::string& name);
void apply_freeze(ParamStore& store, const FreezeSpec& spec);

struct RunRecord {
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    std::vector<double> train_loss;    // per epoch
    std::vector<double> dev_accuracy;  // per epoch
    std::size_t selected_epoch = 0;    // maximizes dev accuracy, ties earliest
    double test_accuracy = -1.0;
    std::map<int, std::pair<std::size_t, double>> qtype_accuracy;  // type -> (count, accuracy)
    double wall_clock_sec = 0.0;  // reported separately, never fingerprinted
};

// JSON serialization of everything except wall-clock, so identical runs
// produce identical bytes.
std::string run_record_to_json(const RunRecord& rec);

// 64-bit FNV-1a over a canonical config rendering.
std::string fingerprint(const std::string& text);

struct TrainResult {
    ParamStore best_params;
    RunRecord record;
};

// Mini-batch cross-entropy SGD with epoch-end dev selection and early
// stopping. Deterministic under seed. Returns the best-dev checkpoint.
TrainResult train(const ParamStore& init, const std::vector<McqaExample>& train_set,
                  const std::vector<McqaExample>& dev_set, const TrainConfig& cfg);

double evaluate(const ModelHyper& hyper, const ParamStore& params,
                const std::vector<McqaExample>& ds);

std::map<int, std::pair<std::size_t, double>> eval_by_qtype(
    const ModelHyper& hyper, const ParamStore& params, const std::vector<McqaExample>& ds);

struct DatasetTriple {
    Dataset train, dev, test;
};

// Two-step transfer: pre-train on the source (identical bytes regardless of
// the downstream freeze spec), then apply the spec and fine-tune on the
// target. Degenerate presets: target-only trains directly on the target;
// source-only evaluates zero-shot.
RunRecord transfer_run(const DatasetTriple& source, const DatasetTriple& target,
                       const TrainConfig& cfg, const FreezeSpec& freeze,
                       ParamStore* out_params = nullptr,
                       const std::string* pretrained_embeddings_path = nullptr);

enum class AblationAxis { Target, Source };

struct AblationRow {
    double fraction = 0.0;
    double mean_accuracy = 0.0;
    double stdev = 0.0;
    double delta = 0.0;  // gain over the previous fraction, paper style
};

// One transfer_run per fraction x seed with the subsample applied to the
// chosen axis. Independent runs may execute concurrently, capped by the
// MCQA_TRANSFER_THREADS environment variable.
std::vector<AblationRow> ablate_fraction(AblationAxis axis, const std::vector<double>& fractions,
                                         const DatasetTriple& source, const DatasetTriple& target,
                                         const TrainConfig& base_cfg, const FreezeSpec& freeze,
                                         const std::vector<std::uint64_t>& seeds);

}  // namespace mcqa
