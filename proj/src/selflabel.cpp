#include "mcqa/selflabel.hpp"

#include <cmath>
#include <numeric>

namespace mcqa {

std::vector<McqaExample> pseudo_label(const ModelHyper& hyper, const ParamStore& params,
                                      std::vector<McqaExample> target_train) {
    for (auto& ex : target_train)
        ex.answer = static_cast<int>(model_predict(hyper, params, ex));
    return target_train;
}

SelfLabelResult self_label_finetune(const ParamStore& pretrained,
                                    const std::vector<McqaExample>& target_train,
                                    const std::vector<McqaExample>& eval_set,
                                    const SelfLabelConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("self_label_finetune: epochs must be >= 1");
    const ModelHyper& hyper = cfg.inner.model;

    ParamStore params = pretrained.clone();
    apply_freeze(params, cfg.freeze);

    SelfLabelResult result;
    result.trace.test_accuracy.push_back(evaluate(hyper, params, eval_set));

    std::vector<int> prev_labels;
    for (const auto& ex : target_train)
        prev_labels.push_back(static_cast<int>(model_predict(hyper, params, ex)));

    ParamStore best = params.clone();
    double best_acc = result.trace.test_accuracy[0];

    RngStream shuffle_stream = RngStream(cfg.inner.seed).derive("selflabel.shuffle");
    std::vector<std::size_t> order(target_train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto labeled = pseudo_label(hyper, params, target_train);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < labeled.size(); ++i)
            if (labeled[i].answer != prev_labels[i]) ++changed;
        result.trace.churn.push_back(
            labeled.empty() ? 0.0 : static_cast<double>(changed) / static_cast<double>(labeled.size()));
        for (std::size_t i = 0; i < labeled.size(); ++i) prev_labels[i] = labeled[i].answer;

        // one full pass over the pseudo-labeled set per outer epoch
        shuffle_stream.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.inner.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.inner.batch_size);
            Graph graph;
            Graph::Scope scope(graph);
            Tensor batch_loss = Tensor::scalar(0.0);
            for (std::size_t i = start; i < end; ++i) {
                const McqaExample& ex = labeled[order[i]];
                Tensor probs = model_forward(hyper, params, ex);
                batch_loss = add(batch_loss, nll_loss(probs, static_cast<std::size_t>(ex.answer)));
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
            const double loss_val = batch_loss.item();
            if (std::isnan(loss_val) || std::isinf(loss_val))
                throw NumericError("self_label_finetune: non-finite loss at epoch " +
                                   std::to_string(epoch));
            graph.backward(batch_loss);
            sgd_step(params, cfg.inner.lr);
        }

        const double acc = evaluate(hyper, params, eval_set);
        result.trace.test_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            best = params.clone();
            result.best_epoch = epoch;
        }
    }

    result.params = cfg.select_peak ? std::move(best) : std::move(params);
    return result;
}

}  // namespace mcqa
