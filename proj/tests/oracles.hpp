// Test-only reference implementations, independent of the library's
// autodiff path: straight-line model forwards over plain doubles, and a
// central finite-difference gradient checker.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mcqa/corpus.hpp"
#include "mcqa/rng.hpp"
#include "mcqa/tensor.hpp"

namespace oracles {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

inline Vec softmax(Vec x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : x) v /= sum;
    return x;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec embedding_row(const mcqa::Tensor& table, std::size_t id) {
    const std::size_t d = table.dim(1);
    Vec out(d);
    for (std::size_t k = 0; k < d; ++k) out[k] = table.at2(id, k);
    return out;
}

// mean of non-PAD word embeddings
inline Vec mean_encode(const mcqa::Tensor& table, const std::vector<std::size_t>& ids) {
    const std::size_t d = table.dim(1);
    Vec out(d, 0.0);
    std::size_t n = 0;
    for (std::size_t id : ids) {
        if (id == mcqa::PAD_ID) continue;
        for (std::size_t k = 0; k < d; ++k) out[k] += table.at2(id, k);
        ++n;
    }
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

// Plain-loop memory-network forward: probabilities over choices.
inline Vec memn2n_forward(const mcqa::ParamStore& p, const mcqa::McqaExample& ex,
                          std::size_t hops) {
    const auto& A = p.get("memn2n.A");
    const auto& B = p.get("memn2n.B");
    const auto& C = p.get("memn2n.C");
    const auto& F = p.get("memn2n.F");
    Vec q = mean_encode(B, ex.question);
    std::vector<Vec> mems, outs;
    for (const auto& s : ex.story) {
        mems.push_back(mean_encode(A, s));
        outs.push_back(mean_encode(C, s));
    }
    for (std::size_t hop = 0; hop < hops; ++hop) {
        Vec logits;
        for (const auto& m : mems) logits.push_back(dot(m, q));
        Vec attn = softmax(logits);
        Vec o(q.size(), 0.0);
        for (std::size_t i = 0; i < outs.size(); ++i)
            for (std::size_t k = 0; k < q.size(); ++k) o[k] += attn[i] * outs[i][k];
        for (std::size_t k = 0; k < q.size(); ++k) q[k] += o[k];
    }
    Vec scores;
    for (const auto& c : ex.choices) scores.push_back(dot(q, mean_encode(F, c)));
    return softmax(scores);
}

inline double cosine(const Vec& a, const Vec& b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

struct QacnnOracleConfig {
    std::size_t choice_len;
    std::size_t conv_width;
    std::size_t filters1, filters2, hidden;
    double attention_scale;
};

// Plain-loop QACNN forward: probabilities over choices.
inline Vec qacnn_forward(const mcqa::ParamStore& p, const mcqa::McqaExample& ex,
                         const QacnnOracleConfig& cfg) {
    const auto& E = p.get("qacnn.embed");
    const auto& W1 = p.get("qacnn.conv1.weight");
    const auto& b1 = p.get("qacnn.conv1.bias");
    const auto& W2 = p.get("qacnn.conv2.weight");
    const auto& b2 = p.get("qacnn.conv2.bias");
    const auto& fc1w = p.get("qacnn.fc1.weight");
    const auto& fc1b = p.get("qacnn.fc1.bias");
    const auto& fc2w = p.get("qacnn.fc2.weight");
    const auto& fc2b = p.get("qacnn.fc2.bias");
    const std::size_t w = cfg.conv_width, half = w / 2;

    auto conv = [&](const Mat& seq, const mcqa::Tensor& filt, const mcqa::Tensor& bias,
                    std::size_t din, std::size_t dout) {
        Mat out(seq.size(), Vec(dout, 0.0));
        for (std::size_t t = 0; t < seq.size(); ++t)
            for (std::size_t o = 0; o < dout; ++o) {
                double acc = bias.at(o);
                for (std::size_t dt = 0; dt < w; ++dt) {
                    const std::ptrdiff_t s =
                        static_cast<std::ptrdiff_t>(t + dt) - static_cast<std::ptrdiff_t>(half);
                    if (s < 0 || s >= static_cast<std::ptrdiff_t>(seq.size())) continue;
                    for (std::size_t i = 0; i < din; ++i)
                        acc += seq[static_cast<std::size_t>(s)][i] *
                               filt.at((dt * din + i) * dout + o);
                }
                out[t][o] = acc > 0.0 ? acc : 0.0;
            }
        return out;
    };

    // question-based attention from the story-question similarity maps
    std::vector<Mat> story_emb;
    for (const auto& sent : ex.story) {
        Mat rows;
        for (std::size_t id : sent) rows.push_back(embedding_row(E, id));
        story_emb.push_back(std::move(rows));
    }
    Mat q_emb;
    for (std::size_t id : ex.question) q_emb.push_back(embedding_row(E, id));

    std::vector<Vec> word_attn;
    Vec sent_logits;
    for (const auto& se : story_emb) {
        Vec maxima;
        double block_max = -1e300;
        for (const auto& srow : se) {
            double m = -1e300;
            for (const auto& qrow : q_emb) m = std::max(m, cosine(srow, qrow));
            maxima.push_back(m * cfg.attention_scale);
            block_max = std::max(block_max, m);
        }
        word_attn.push_back(softmax(maxima));
        sent_logits.push_back(block_max * cfg.attention_scale);
    }
    Vec sent_attn = softmax(sent_logits);

    Vec scores;
    for (const auto& choice : ex.choices) {
        Mat c_emb;
        for (std::size_t t = 0; t < cfg.choice_len; ++t)
            c_emb.push_back(embedding_row(E, t < choice.size() ? choice[t] : mcqa::PAD_ID));
        Mat feats;
        for (std::size_t s = 0; s < story_emb.size(); ++s) {
            Mat sc(story_emb[s].size(), Vec(cfg.choice_len, 0.0));
            for (std::size_t i = 0; i < story_emb[s].size(); ++i)
                for (std::size_t j = 0; j < cfg.choice_len; ++j)
                    sc[i][j] = cosine(story_emb[s][i], c_emb[j]);
            Mat conv1 = conv(sc, W1, b1, cfg.choice_len, cfg.filters1);
            Vec f(cfg.filters1, 0.0);
            for (std::size_t t = 0; t < conv1.size(); ++t)
                for (std::size_t o = 0; o < cfg.filters1; ++o)
                    f[o] += word_attn[s][t] * conv1[t][o];
            feats.push_back(std::move(f));
        }
        Mat conv2 = conv(feats, W2, b2, cfg.filters1, cfg.filters2);
        Vec g(cfg.filters2, 0.0);
        for (std::size_t s = 0; s < conv2.size(); ++s)
            for (std::size_t o = 0; o < cfg.filters2; ++o) g[o] += sent_attn[s] * conv2[s][o];
        Vec hidden(cfg.hidden);
        for (std::size_t hh = 0; hh < cfg.hidden; ++hh) {
            double acc = fc1b.at(hh);
            for (std::size_t o = 0; o < cfg.filters2; ++o) acc += g[o] * fc1w.at2(o, hh);
            hidden[hh] = acc > 0.0 ? acc : 0.0;
        }
        double score = fc2b.at(0);
        for (std::size_t hh = 0; hh < cfg.hidden; ++hh) score += hidden[hh] * fc2w.at2(hh, 0);
        scores.push_back(score);
    }
    return softmax(scores);
}

// Central finite differences against analytic gradients for every unfrozen
// parameter. `loss_fn` must build a fresh graph-free loss value from the
// current store contents. Returns the max relative error observed.
inline double max_grad_rel_error(mcqa::ParamStore& store,
                                 const std::function<double()>& loss_fn,
                                 const std::function<mcqa::Tensor()>& loss_graph_fn,
                                 double h = 1e-5) {
    store.clear_grads();
    {
        mcqa::Graph graph;
        mcqa::Graph::Scope scope(graph);
        mcqa::Tensor loss = loss_graph_fn();
        graph.backward(loss);
    }
    double worst = 0.0;
    for (const auto& name : store.names()) {
        if (store.is_frozen(name)) continue;
        mcqa::Tensor& p = store.get(name);
        const auto grad = p.grad();  // copy before perturbing
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double orig = p.data()[i];
            p.mutable_data()[i] = orig + h;
            const double up = loss_fn();
            p.mutable_data()[i] = orig - h;
            const double down = loss_fn();
            p.mutable_data()[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double a = grad.empty() ? 0.0 : grad[i];
            const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-4});
            worst = std::max(worst, std::fabs(a - fd) / denom);
        }
    }
    store.clear_grads();
    return worst;
}

// Small random MCQA instance over a toy vocabulary.
inline mcqa::McqaExample random_example(mcqa::RngStream& rng, std::size_t vocab,
                                        std::size_t sentences, std::size_t words,
                                        std::size_t choices) {
    auto seq = [&](std::size_t n) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back(2 + rng.uniform_int(vocab - 2));
        return ids;
    };
    mcqa::McqaExample ex;
    for (std::size_t s = 0; s < sentences; ++s) ex.story.push_back(seq(words));
    ex.question = seq(words);
    for (std::size_t c = 0; c < choices; ++c) ex.choices.push_back(seq(1 + rng.uniform_int(words)));
    ex.answer = static_cast<int>(rng.uniform_int(choices));
    return ex;
}

}  // namespace oracles
