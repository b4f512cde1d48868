#include "mcqa/memn2n.hpp"

namespace mcqa {

Tensor encode_sentence(const std::vector<std::size_t>& ids, const Tensor& table) {
    std::vector<std::size_t> real;
    real.reserve(ids.size());
    for (std::size_t id : ids)
        if (id != PAD_ID) real.push_back(id);
    if (real.empty()) throw ContractError("encode_sentence: sentence contains only PAD tokens");
    return mean_rows(embed_lookup(table, real));
}

ParamStore memn2n_init(const MemN2NConfig& cfg, std::size_t vocab_size, const RngStream& rng,
                       const EmbeddingMatrix* pretrained) {
    if (cfg.hops < 1) throw ConfigError("memn2n: hops must be >= 1");
    ParamStore store;
    auto random_table = [&](const std::string& name) {
        RngStream stream = rng.derive("init." + name);
        std::vector<double> data(vocab_size * cfg.embed_dim, 0.0);
        for (std::size_t id = 1; id < vocab_size; ++id)
            for (std::size_t k = 0; k < cfg.embed_dim; ++k)
                data[id * cfg.embed_dim + k] = stream.uniform(-0.1, 0.1);
        return Tensor({vocab_size, cfg.embed_dim}, std::move(data));
    };
    store.add("memn2n.A", random_table("memn2n.A"));
    store.add("memn2n.C", random_table("memn2n.C"));
    if (pretrained) {
        if (pretrained->dim != cfg.embed_dim || pretrained->table.dim(0) != vocab_size)
            throw ConfigError("memn2n: pretrained embedding shape does not match config");
        store.add("memn2n.B", pretrained->table.clone());
        store.add("memn2n.F", pretrained->table.clone());
        if (pretrained->frozen) {
            store.pin("memn2n.B");
            store.pin("memn2n.F");
        }
    } else {
        store.add("memn2n.B", random_table("memn2n.B"));
        store.add("memn2n.F", random_table("memn2n.F"));
    }
    return store;
}

MemN2NOutput memn2n_forward(const ParamStore& params, const McqaExample& ex,
                            const MemN2NConfig& cfg) {
    if (ex.story.empty()) throw ContractError("memn2n_forward: empty story");
    if (ex.choices.size() < 2) throw ContractError("memn2n_forward: need at least 2 choices");
    const Tensor& A = params.get("memn2n.A");
    const Tensor& B = params.get("memn2n.B");
    const Tensor& C = params.get("memn2n.C");
    const Tensor& F = params.get("memn2n.F");

    Tensor q = encode_sentence(ex.question, B);  // 1 x d
    std::vector<Tensor> mem_rows, out_rows;
    for (const auto& sent : ex.story) {
        mem_rows.push_back(encode_sentence(sent, A));
        out_rows.push_back(encode_sentence(sent, C));
    }
    Tensor memories = concat_rows(mem_rows);  // n x d
    Tensor outputs = concat_rows(out_rows);   // n x d

    MemN2NOutput result;
    for (std::size_t hop = 0; hop < cfg.hops; ++hop) {
        Tensor logits = matmul(memories, transpose(q));  // n x 1
        Tensor attn = softmax(logits);
        result.hop_attention.push_back(attn.data());
        Tensor weighted = matmul(transpose(attn), outputs);  // 1 x d
        q = add(q, weighted);
    }

    std::vector<Tensor> scores;
    for (const auto& choice : ex.choices) {
        Tensor c = encode_sentence(choice, F);
        scores.push_back(matmul(q, transpose(c)));  // 1 x 1
    }
    result.choice_probs = softmax(concat_rows(scores));
    return result;
}

std::size_t memn2n_predict(const ParamStore& params, const McqaExample& ex,
                           const MemN2NConfig& cfg) {
    MemN2NOutput out = memn2n_forward(params, ex, cfg);
    const auto& p = out.choice_probs.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

}  // namespace mcqa
