#include "mcqa/qacnn.hpp"

namespace mcqa {

namespace {

std::vector<std::size_t> pad_choice(const std::vector<std::size_t>& ids, std::size_t len) {
    std::vector<std::size_t> out(ids.begin(),
                                 ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), len)));
    out.resize(len, PAD_ID);
    return out;
}

}  // namespace

ParamStore qacnn_init(const QacnnConfig& cfg, std::size_t vocab_size, const RngStream& rng,
                      const EmbeddingMatrix* pretrained) {
    if (cfg.conv_width % 2 == 0) throw ConfigError("qacnn: conv_width must be odd");
    if (cfg.choice_len == 0) throw ConfigError("qacnn: choice_len must be positive");
    ParamStore store;
    auto uniform_tensor = [&](const std::string& name, std::vector<std::size_t> shape) {
        RngStream stream = rng.derive("init." + name);
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        std::vector<double> data(n);
        for (double& v : data) v = stream.uniform(-0.1, 0.1);
        return Tensor(std::move(shape), std::move(data));
    };
    if (pretrained) {
        if (pretrained->dim != cfg.embed_dim || pretrained->table.dim(0) != vocab_size)
            throw ConfigError("qacnn: pretrained embedding shape does not match config");
        store.add("qacnn.embed", pretrained->table.clone());
        if (pretrained->frozen) store.pin("qacnn.embed");
    } else {
        Tensor e = uniform_tensor("qacnn.embed", {vocab_size, cfg.embed_dim});
        for (std::size_t k = 0; k < cfg.embed_dim; ++k) e.mutable_data()[k] = 0.0;  // PAD row
        store.add("qacnn.embed", std::move(e));
    }
    store.add("qacnn.conv1.weight",
              uniform_tensor("qacnn.conv1.weight", {cfg.conv_width, cfg.choice_len, cfg.filters1}));
    store.add("qacnn.conv1.bias", uniform_tensor("qacnn.conv1.bias", {cfg.filters1}));
    store.add("qacnn.conv2.weight",
              uniform_tensor("qacnn.conv2.weight", {cfg.conv_width, cfg.filters1, cfg.filters2}));
    store.add("qacnn.conv2.bias", uniform_tensor("qacnn.conv2.bias", {cfg.filters2}));
    store.add("qacnn.fc1.weight", uniform_tensor("qacnn.fc1.weight", {cfg.filters2, cfg.hidden}));
    store.add("qacnn.fc1.bias", uniform_tensor("qacnn.fc1.bias", {std::size_t(1), cfg.hidden}));
    store.add("qacnn.fc2.weight", uniform_tensor("qacnn.fc2.weight", {cfg.hidden, std::size_t(1)}));
    store.add("qacnn.fc2.bias", uniform_tensor("qacnn.fc2.bias", {std::size_t(1), std::size_t(1)}));
    return store;
}

SimilarityMaps similarity_maps(const ParamStore& params, const McqaExample& ex,
                               const QacnnConfig& cfg) {
    if (ex.story.empty()) throw ContractError("qacnn: empty story");
    const Tensor& E = params.get("qacnn.embed");
    SimilarityMaps maps;
    Tensor qe = embed_lookup(E, ex.question);
    std::vector<Tensor> story_emb;
    for (const auto& sent : ex.story) {
        story_emb.push_back(embed_lookup(E, sent));
        maps.sq.push_back(cosine_map(story_emb.back(), qe));
    }
    for (const auto& choice : ex.choices) {
        Tensor ce = embed_lookup(E, pad_choice(choice, cfg.choice_len));
        std::vector<Tensor> per_sentence;
        for (const auto& se : story_emb) per_sentence.push_back(cosine_map(se, ce));
        maps.sc.push_back(std::move(per_sentence));
    }
    return maps;
}

Tensor word_attention(const Tensor& sq_sentence, double attention_scale) {
    if (sq_sentence.numel() == 0) throw ContractError("word_attention: empty similarity map");
    return softmax(scale(row_max(sq_sentence), attention_scale));
}

Tensor qacnn_forward(const ParamStore& params, const McqaExample& ex, const QacnnConfig& cfg,
                     AttentionRecord* attention) {
    if (ex.choices.size() < 2) throw ContractError("qacnn_forward: need at least 2 choices");
    const Tensor& E = params.get("qacnn.embed");
    const Tensor& W1 = params.get("qacnn.conv1.weight");
    const Tensor& b1 = params.get("qacnn.conv1.bias");
    const Tensor& W2 = params.get("qacnn.conv2.weight");
    const Tensor& b2 = params.get("qacnn.conv2.bias");
    const Tensor& fc1w = params.get("qacnn.fc1.weight");
    const Tensor& fc1b = params.get("qacnn.fc1.bias");
    const Tensor& fc2w = params.get("qacnn.fc2.weight");
    const Tensor& fc2b = params.get("qacnn.fc2.bias");

    Tensor qe = embed_lookup(E, ex.question);
    const std::size_t n_sent = ex.story.size();
    if (n_sent == 0) throw ContractError("qacnn_forward: empty story");

    std::vector<Tensor> story_emb, sq, word_attn;
    std::vector<Tensor> sent_logits;  // per-sentence max over its SQ block
    for (const auto& sent : ex.story) {
        story_emb.push_back(embed_lookup(E, sent));
        sq.push_back(cosine_map(story_emb.back(), qe));
        word_attn.push_back(word_attention(sq.back(), cfg.attention_scale));
        sent_logits.push_back(scale(max_all(sq.back()), cfg.attention_scale));
    }
    Tensor sent_attn = softmax(concat_rows(sent_logits));  // n_sent x 1

    if (attention) {
        attention->word_level.clear();
        for (const auto& a : word_attn) attention->word_level.push_back(a.data());
        attention->sentence_level = sent_attn.data();
    }

    std::vector<Tensor> scores;
    for (const auto& choice : ex.choices) {
        Tensor ce = embed_lookup(E, pad_choice(choice, cfg.choice_len));
        std::vector<Tensor> sent_features;
        for (std::size_t s = 0; s < n_sent; ++s) {
            Tensor sc = cosine_map(story_emb[s], ce);       // L_s x choice_len
            Tensor conv = conv1d(sc, W1, b1);               // L_s x f1
            sent_features.push_back(matmul(transpose(word_attn[s]), conv));  // 1 x f1
        }
        Tensor feats = concat_rows(sent_features);          // n_sent x f1
        Tensor conv2 = conv1d(feats, W2, b2);               // n_sent x f2
        Tensor choice_feat = matmul(transpose(sent_attn), conv2);  // 1 x f2
        Tensor hidden = relu(add(matmul(choice_feat, fc1w), fc1b));
        scores.push_back(add(matmul(hidden, fc2w), fc2b));  // 1 x 1
    }
    return softmax(concat_rows(scores));
}

std::size_t qacnn_predict(const ParamStore& params, const McqaExample& ex,
                          const QacnnConfig& cfg) {
    Tensor probs = qacnn_forward(params, ex, cfg);
    const auto& p = probs.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

AttentionRecord export_attention(const ParamStore& params, const McqaExample& ex,
                                 const QacnnConfig& cfg) {
    AttentionRecord rec;
    qacnn_forward(params, ex, cfg, &rec);
    // story sentences carry no padding, so the maps already align to tokens
    return rec;
}

}  // namespace mcqa
