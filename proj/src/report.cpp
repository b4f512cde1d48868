#include "mcqa/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace mcqa {

namespace {

std::string fmt(double v, int prec = 4) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string presets_csv(const std::vector<std::pair<std::string, double>>& rows) {
    std::ostringstream os;
    os << "training,accuracy\n";
    for (const auto& [preset, acc] : rows) os << preset << "," << fmt(acc) << "\n";
    return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "fraction,mean_accuracy,stdev,gain\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << fmt(rows[i].fraction, 2) << "," << fmt(rows[i].mean_accuracy) << ","
           << fmt(rows[i].stdev);
        if (i == 0)
            os << ",\n";
        else
            os << ",(" << (rows[i].delta >= 0 ? "+" : "") << fmt(rows[i].delta) << ")\n";
    }
    return os.str();
}

std::string trace_csv(const SelfLabelTrace& trace) {
    std::ostringstream os;
    os << "epoch,accuracy,churn\n";
    for (std::size_t e = 0; e < trace.test_accuracy.size(); ++e) {
        os << e << "," << fmt(trace.test_accuracy[e]) << ",";
        if (e == 0)
            os << "\n";
        else
            os << fmt(trace.churn[e - 1]) << "\n";
    }
    return os.str();
}

std::string attention_heatmap_svg(const std::vector<std::vector<std::string>>& sentences,
                                  const AttentionRecord& record) {
    if (sentences.size() != record.word_level.size())
        throw ContractError("attention_heatmap_svg: sentence/attention count mismatch");
    const int cell_w = 72, cell_h = 26, label_w = 40, pad = 4;
    std::size_t max_words = 0;
    for (const auto& s : sentences) max_words = std::max(max_words, s.size());
    const int width = label_w + static_cast<int>(max_words) * cell_w + 2 * pad;
    const int height = static_cast<int>(sentences.size()) * cell_h + 2 * pad;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"monospace\" font-size=\"11\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        const auto& words = sentences[s];
        const auto& weights = record.word_level[s];
        if (words.size() != weights.size())
            throw ContractError("attention_heatmap_svg: token/weight length mismatch");
        double wmax = 0.0;
        for (double w : weights) wmax = std::max(wmax, w);
        const int y = pad + static_cast<int>(s) * cell_h;
        os << "<text x=\"" << pad << "\" y=\"" << y + cell_h / 2 + 4 << "\">s" << s << "</text>\n";
        for (std::size_t t = 0; t < words.size(); ++t) {
            const int x = label_w + static_cast<int>(t) * cell_w;
            // redness rises monotonically with the weight
            const double rel = wmax > 0.0 ? weights[t] / wmax : 0.0;
            const int gb = 255 - static_cast<int>(rel * 255.0);
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w - 2
               << "\" height=\"" << cell_h - 2 << "\" fill=\"rgb(255," << gb << "," << gb
               << ")\" stroke=\"gray\"/>\n";
            os << "<text x=\"" << x + 3 << "\" y=\"" << y + cell_h / 2 + 4 << "\">"
               << xml_escape(words[t]) << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string accuracy_curve_svg(const std::vector<double>& accuracies,
                               std::optional<double> reference) {
    if (accuracies.empty()) throw ContractError("accuracy_curve_svg: empty trace");
    const int width = 480, height = 300, margin = 40;
    const int plot_w = width - 2 * margin, plot_h = height - 2 * margin;
    const std::size_t n = accuracies.size();
    auto px = [&](std::size_t i) {
        return margin + (n == 1 ? 0.0
                                : static_cast<double>(i) * plot_w / static_cast<double>(n - 1));
    };
    auto py = [&](double acc) { return margin + (1.0 - acc) * plot_h; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot_w
       << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (reference) {
        os << "<line x1=\"" << margin << "\" y1=\"" << fmt(py(*reference), 2) << "\" x2=\""
           << margin + plot_w << "\" y2=\"" << fmt(py(*reference), 2)
           << "\" stroke=\"blue\" stroke-dasharray=\"6 3\"/>\n";
        os << "<text x=\"" << margin + 4 << "\" y=\"" << fmt(py(*reference) - 4.0, 2)
           << "\" fill=\"blue\">supervised " << fmt(*reference) << "</text>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"red\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
        if (i) os << " ";
        os << fmt(px(i), 2) << "," << fmt(py(accuracies[i]), 2);
    }
    os << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i)
        os << "<circle cx=\"" << fmt(px(i), 2) << "\" cy=\"" << fmt(py(accuracies[i]), 2)
           << "\" r=\"3\" fill=\"red\"/>\n";
    os << "<text x=\"" << margin << "\" y=\"" << height - 8 << "\">epoch 0.."
       << n - 1 << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string attention_record_text(const std::vector<std::vector<std::string>>& sentences,
                                  const AttentionRecord& record) {
    if (sentences.size() != record.word_level.size())
        throw ContractError("attention_record_text: sentence/attention count mismatch");
    std::ostringstream os;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        os << "sentence " << s << " weight " << fmt(record.sentence_level[s], 6) << "\n";
        for (std::size_t t = 0; t < sentences[s].size(); ++t)
            os << s << " " << sentences[s][t] << " " << fmt(record.word_level[s][t], 6) << "\n";
    }
    return os.str();
}

}  // namespace mcqa
