#pragma once

#include "mcqa/transfer.hpp"

namespace mcqa {

// Iterative self-labeling on an unlabeled target set: predict answers with
// the current model, adopt them as labels, fine-tune one pass, repeat.
struct SelfLabelConfig {
    std::size_t epochs = 10;
    TrainConfig inner;                       // lr / batch size / model hyper
    FreezeSpec freeze = freeze_preset("ft-all");
    bool select_peak = false;  // return peak-trace params instead of final-epoch params
};

struct SelfLabelTrace {
    std::vector<double> test_accuracy;  // length epochs + 1; index 0 = pre-fine-tuning
    std::vector<double> churn;          // length epochs; fraction of labels changed
};

struct SelfLabelResult {
    ParamStore params;
    SelfLabelTrace trace;
    std::size_t best_epoch = 0;  // argmax of the trace, ties earliest
};

// Gold answers on target_train, if any, are ignored.
std::vector<McqaExample> pseudo_label(const ModelHyper& hyper, const ParamStore& params,
                                      std::vector<McqaExample> target_train);

SelfLabelResult self_label_finetune(const ParamStore& pretrained,
                                    const std::vector<McqaExample>& target_train,
                                    const std::vector<McqaExample>& eval_set,
                                    const SelfLabelConfig& cfg);

}  // namespace mcqa
