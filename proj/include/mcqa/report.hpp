#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcqa/qacnn.hpp"
#include "mcqa/selflabel.hpp"
#include "mcqa/transfer.hpp"

namespace mcqa {

// CSV table in the freeze-ablation layout: one row per training regime.
std::string presets_csv(const std::vector<std::pair<std::string, double>>& rows);

// CSV in the data-fraction layout: fraction, mean accuracy, stdev and the
// gain over the previous fraction in parentheses.
std::string ablation_csv(const std::vector<AblationRow>& rows);

// CSV trace: epoch, test accuracy, pseudo-label churn.
std::string trace_csv(const SelfLabelTrace& trace);

// Static heatmap, one row of cells per story sentence; cell redness is
// proportional to the word-level attention weight. Self-contained SVG.
std::string attention_heatmap_svg(const std::vector<std::vector<std::string>>& sentences,
                                  const AttentionRecord& record);

// Accuracy-vs-epoch curve with an optional horizontal reference line (the
// supervised upper bound). Self-contained SVG.
std::string accuracy_curve_svg(const std::vector<double>& accuracies,
                               std::optional<double> reference);

// Raw attention record as structured text: sentence index, token, weight.
std::string attention_record_text(const std::vector<std::vector<std::string>>& sentences,
                                  const AttentionRecord& record);

}  // namespace mcqa
