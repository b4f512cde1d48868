#include "mcqa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mcqa {

using ordered_json = nlohmann::ordered_json;

Vocab::Vocab() {
    id_to_token_ = {"<pad>", "<unk>"};
    token_to_id_["<pad>"] = PAD_ID;
    token_to_id_["<unk>"] = UNK_ID;
}

std::size_t Vocab::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    std::size_t id = id_to_token_.size();
    id_to_token_.push_back(token);
    token_to_id_[token] = id;
    return id;
}

std::size_t Vocab::encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? UNK_ID : it->second;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            // punctuation becomes a standalone token
            flush();
            out.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    flush();
    return out;
}

namespace {

[[noreturn]] void record_error(std::size_t line_no, const std::string& what) {
    throw DataError("line " + std::to_string(line_no) + ": " + what);
}

TokenizedExample parse_record(const ordered_json& j, std::size_t line_no) {
    static const std::vector<std::string> known = {"story", "question", "choices", "answer", "qtype"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            record_error(line_no, "unknown field '" + it.key() + "'");
    if (!j.contains("story") || !j["story"].is_array() || j["story"].empty())
        record_error(line_no, "missing or empty 'story'");
    if (!j.contains("question") || !j["question"].is_string())
        record_error(line_no, "missing 'question'");
    if (!j.contains("choices") || !j["choices"].is_array())
        record_error(line_no, "missing 'choices'");

    TokenizedExample ex;
    for (const auto& s : j["story"]) {
        if (!s.is_string()) record_error(line_no, "story sentences must be strings");
        auto toks = tokenize(s.get<std::string>());
        if (toks.empty()) record_error(line_no, "empty story sentence");
        ex.story.push_back(std::move(toks));
    }
    ex.question = tokenize(j["question"].get<std::string>());
    if (ex.question.empty()) record_error(line_no, "empty question");
    for (const auto& c : j["choices"]) {
        if (!c.is_string()) record_error(line_no, "choices must be strings");
        auto toks = tokenize(c.get<std::string>());
        if (toks.empty()) record_error(line_no, "empty choice");
        ex.choices.push_back(std::move(toks));
    }
    if (ex.choices.size() < 2) record_error(line_no, "need at least 2 choices");
    if (j.contains("answer")) {
        if (!j["answer"].is_number_integer()) record_error(line_no, "'answer' must be an integer");
        ex.answer = j["answer"].get<int>();
        if (ex.answer < 0 || ex.answer >= static_cast<int>(ex.choices.size()))
            record_error(line_no, "answer " + std::to_string(ex.answer) + " out of range for " +
                                      std::to_string(ex.choices.size()) + " choices");
    }
    if (j.contains("qtype")) {
        if (!j["qtype"].is_number_integer()) record_error(line_no, "'qtype' must be an integer");
        ex.qtype = j["qtype"].get<int>();
        if (ex.qtype < 1 || ex.qtype > 3) record_error(line_no, "qtype must be in 1..3");
    }
    return ex;
}

std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) out.push_back(' ');
        out += toks[i];
    }
    return out;
}

}  // namespace

Dataset load_dataset(const std::string& path, const std::string& name, const std::string& split) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    Dataset ds;
    ds.name = name;
    ds.split = split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            record_error(line_no, std::string("malformed record: ") + e.what());
        }
        TokenizedExample ex = parse_record(j, line_no);
        if (ds.choice_count == 0)
            ds.choice_count = ex.choices.size();
        else if (ex.choices.size() != ds.choice_count)
            record_error(line_no, "choice count " + std::to_string(ex.choices.size()) +
                                      " differs from dataset choice count " +
                                      std::to_string(ds.choice_count));
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    for (const auto& ex : ds.examples) {
        ordered_json j;
        j["story"] = ordered_json::array();
        for (const auto& s : ex.story) j["story"].push_back(join_tokens(s));
        j["question"] = join_tokens(ex.question);
        j["choices"] = ordered_json::array();
        for (const auto& c : ex.choices) j["choices"].push_back(join_tokens(c));
        if (ex.answer >= 0) j["answer"] = ex.answer;
        if (ex.qtype > 0) j["qtype"] = ex.qtype;
        out << j.dump() << "\n";
    }
}

Vocab build_vocab(const std::vector<const Dataset*>& datasets, std::size_t min_count) {
    if (datasets.empty()) throw ContractError("build_vocab: no datasets");
    std::unordered_map<std::string, std::size_t> freq;
    auto count = [&](const std::vector<std::string>& toks) {
        for (const auto& t : toks) ++freq[t];
    };
    for (const Dataset* ds : datasets)
        for (const auto& ex : ds->examples) {
            for (const auto& s : ex.story) count(s);
            count(ex.question);
            for (const auto& c : ex.choices) count(c);
        }
    std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : entries)
        if (n >= std::max<std::size_t>(min_count, 1)) v.add(tok);
    return v;
}

McqaExample encode_example(const Vocab& vocab, const TokenizedExample& ex,
                           const TruncationBounds& bounds) {
    auto story = ex.story;
    // longest-first truncation; ties drop the later sentence
    while (story.size() > bounds.max_sentences) {
        std::size_t longest = 0;
        for (std::size_t i = 1; i < story.size(); ++i)
            if (story[i].size() >= story[longest].size()) longest = i;
        story.erase(story.begin() + static_cast<std::ptrdiff_t>(longest));
    }
    auto encode_seq = [&](const std::vector<std::string>& toks) {
        std::vector<std::size_t> ids;
        const std::size_t n = std::min(toks.size(), bounds.max_sentence_len);
        ids.reserve(n);
        for (std::size_t i = 0; i < n; ++i) ids.push_back(vocab.encode(toks[i]));
        return ids;
    };
    McqaExample out;
    for (const auto& s : story) out.story.push_back(encode_seq(s));
    out.question = encode_seq(ex.question);
    for (const auto& c : ex.choices) out.choices.push_back(encode_seq(c));
    out.answer = ex.answer;
    out.qtype = ex.qtype;
    return out;
}

std::vector<McqaExample> encode_dataset(const Vocab& vocab, const Dataset& ds,
                                        const TruncationBounds& bounds) {
    std::vector<McqaExample> out;
    out.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) out.push_back(encode_example(vocab, ex, bounds));
    return out;
}

EmbeddingMatrix load_embeddings(const std::string& path, const Vocab& vocab, std::size_t d,
                                const RngStream& rng) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);
    std::unordered_map<std::string, std::vector<double>> file_vecs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string tok;
        is >> tok;
        std::vector<double> vec;
        double v;
        while (is >> v) vec.push_back(v);
        if (vec.size() != d)
            record_error(line_no, "expected " + std::to_string(d) + " values, got " +
                                      std::to_string(vec.size()));
        file_vecs[tok] = std::move(vec);
    }
    EmbeddingMatrix em;
    em.dim = d;
    em.frozen = true;
    std::vector<double> data(vocab.size() * d, 0.0);
    RngStream stream = rng.derive("embed-init");
    for (std::size_t id = 1; id < vocab.size(); ++id) {
        auto it = file_vecs.find(vocab.token(id));
        if (it != file_vecs.end()) {
            std::copy(it->second.begin(), it->second.end(), data.begin() + id * d);
        } else {
            for (std::size_t k = 0; k < d; ++k) data[id * d + k] = stream.uniform(-0.1, 0.1);
        }
    }
    em.table = Tensor({vocab.size(), d}, std::move(data));
    return em;
}

EmbeddingMatrix random_embeddings(const Vocab& vocab, std::size_t d, const RngStream& rng,
                                  const std::string& stream_name) {
    EmbeddingMatrix em;
    em.dim = d;
    em.frozen = false;
    std::vector<double> data(vocab.size() * d, 0.0);
    RngStream stream = rng.derive(stream_name);
    for (std::size_t id = 1; id < vocab.size(); ++id)
        for (std::size_t k = 0; k < d; ++k) data[id * d + k] = stream.uniform(-0.1, 0.1);
    em.table = Tensor({vocab.size(), d}, std::move(data));
    return em;
}

Dataset subsample(const Dataset& ds, double fraction, const RngStream& rng) {
    if (ds.split != "train") throw ContractError("subsample: only train splits may be subsampled");
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("subsample: fraction must lie in [0,1]");
    const std::size_t n = ds.examples.size();
    const std::size_t k = static_cast<std::size_t>(fraction * static_cast<double>(n));
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    RngStream stream = rng.derive("subsample");
    stream.shuffle(perm);
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.name = ds.name;
    out.split = ds.split;
    out.choice_count = ds.choice_count;
    for (std::size_t i : chosen) out.examples.push_back(ds.examples[i]);
    return out;
}

// --- synthetic benchmark --------------------------------------------------

namespace {

struct SynthPools {
    std::vector<std::string> entities, attributes, fillers;
    std::unordered_map<std::string, std::string> target_rename;
};

SynthPools make_pools(const SynthConfig& cfg) {
    SynthPools p;
    for (std::size_t i = 0; i < cfg.entity_pool; ++i) p.entities.push_back("ent" + std::to_string(i));
    for (std::size_t i = 0; i < cfg.attribute_pool; ++i)
        p.attributes.push_back("att" + std::to_string(i));
    for (std::size_t i = 0; i < cfg.filler_pool; ++i) p.fillers.push_back("fil" + std::to_string(i));
    auto shift = [&](const std::vector<std::string>& pool, const std::string& prefix) {
        const std::size_t m =
            static_cast<std::size_t>(cfg.shift_ratio * static_cast<double>(pool.size()));
        for (std::size_t i = 0; i < m; ++i)
            p.target_rename[pool[i]] = prefix + pool[i];
    };
    shift(p.entities, "t");
    shift(p.attributes, "t");
    shift(p.fillers, "t");
    return p;
}

std::vector<std::size_t> sample_distinct(RngStream& rng, std::size_t pool, std::size_t k) {
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(k);
    return idx;
}

TokenizedExample gen_example(const SynthConfig& cfg, const SynthPools& pools, bool target,
                             RngStream& rng) {
    const std::size_t K = cfg.sentences_per_story;
    const std::size_t choices = target ? cfg.target_choices : cfg.source_choices;
    auto ents = sample_distinct(rng, pools.entities.size(), K);
    auto atts = sample_distinct(rng, pools.attributes.size(), K);

    TokenizedExample ex;
    for (std::size_t s = 0; s < K; ++s) {
        std::vector<std::string> sent = {pools.entities[ents[s]], "has",
                                         pools.attributes[atts[s]]};
        while (sent.size() < cfg.sentence_len)
            sent.push_back(pools.fillers[rng.uniform_int(pools.fillers.size())]);
        ex.story.push_back(std::move(sent));
    }
    const std::size_t q = rng.uniform_int(K);
    ex.question = {"which", pools.entities[ents[q]]};

    // qtype grades distractor difficulty: 1 = out-of-story attributes only,
    // 2 = mixed, 3 = in-story attributes only
    ex.qtype = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<std::size_t> in_story;
    for (std::size_t s = 0; s < K; ++s)
        if (s != q) in_story.push_back(atts[s]);
    rng.shuffle(in_story);
    std::vector<std::size_t> out_story;
    for (std::size_t a = 0; a < pools.attributes.size(); ++a)
        if (std::find(atts.begin(), atts.end(), a) == atts.end()) out_story.push_back(a);
    rng.shuffle(out_story);

    const std::size_t n_distract = choices - 1;
    std::size_t n_in = 0;
    if (ex.qtype == 2) n_in = n_distract / 2;
    if (ex.qtype == 3) n_in = n_distract;
    n_in = std::min(n_in, in_story.size());
    std::vector<std::size_t> distract;
    for (std::size_t i = 0; i < n_in; ++i) distract.push_back(in_story[i]);
    for (std::size_t i = 0; distract.size() < n_distract; ++i) distract.push_back(out_story[i]);

    std::vector<std::vector<std::string>> all_choices;
    all_choices.push_back({"the", pools.attributes[atts[q]]});
    for (std::size_t a : distract) all_choices.push_back({"the", pools.attributes[a]});
    std::vector<std::size_t> order(choices);
    for (std::size_t i = 0; i < choices; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < choices; ++i) {
        ex.choices.push_back(all_choices[order[i]]);
        if (order[i] == 0) ex.answer = static_cast<int>(i);
    }

    if (target) {
        auto rename = [&](std::vector<std::string>& toks) {
            for (auto& t : toks) {
                auto it = pools.target_rename.find(t);
                if (it != pools.target_rename.end()) t = it->second;
            }
        };
        for (auto& s : ex.story) rename(s);
        rename(ex.question);
        for (auto& c : ex.choices) rename(c);
    }
    return ex;
}

Dataset gen_split(const SynthConfig& cfg, const SynthPools& pools, bool target,
                  const std::string& split, std::size_t n, const RngStream& base) {
    Dataset ds;
    ds.name = target ? "synth-target" : "synth-source";
    ds.split = split;
    ds.choice_count = target ? cfg.target_choices : cfg.source_choices;
    RngStream rng = base.derive((target ? std::string("target-") : std::string("source-")) + split);
    for (std::size_t i = 0; i < n; ++i) ds.examples.push_back(gen_example(cfg, pools, target, rng));
    return ds;
}

}  // namespace

SynthBenchmark gen_synthetic(const SynthConfig& cfg) {
    if (cfg.sentence_len < 3) throw ConfigError("gen_synthetic: sentence_len must be >= 3");
    if (cfg.entity_pool < cfg.sentences_per_story || cfg.attribute_pool < cfg.sentences_per_story)
        throw ConfigError("gen_synthetic: token pools smaller than sentences_per_story");
    const std::size_t max_choices = std::max(cfg.source_choices, cfg.target_choices);
    if (max_choices < 2) throw ConfigError("gen_synthetic: need at least 2 choices");
    if (cfg.attribute_pool < cfg.sentences_per_story + max_choices - 1)
        throw ConfigError("gen_synthetic: attribute pool too small for out-of-story distractors");
    if (cfg.filler_pool == 0 && cfg.sentence_len > 3)
        throw ConfigError("gen_synthetic: filler pool empty but sentence_len > 3");

    SynthPools pools = make_pools(cfg);
    RngStream base(cfg.seed);
    RngStream root = base.derive("gen-synthetic");
    SynthBenchmark b;
    b.source_train = gen_split(cfg, pools, false, "train", cfg.source_train, root);
    b.source_dev = gen_split(cfg, pools, false, "dev", cfg.source_dev, root);
    b.source_test = gen_split(cfg, pools, false, "test", cfg.source_test, root);
    b.target_train = gen_split(cfg, pools, true, "train", cfg.target_train, root);
    b.target_dev = gen_split(cfg, pools, true, "dev", cfg.target_dev, root);
    b.target_test = gen_split(cfg, pools, true, "test", cfg.target_test, root);
    return b;
}

double synthetic_oracle_accuracy(const Dataset& ds) {
    if (ds.examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : ds.examples) {
        const std::string& entity = ex.question.back();
        std::string attribute;
        for (const auto& s : ex.story)
            if (s[0] == entity) attribute = s[2];
        int pick = 0;
        for (std::size_t c = 0; c < ex.choices.size(); ++c)
            if (std::find(ex.choices[c].begin(), ex.choices[c].end(), attribute) !=
                ex.choices[c].end())
                pick = static_cast<int>(c);
        if (pick == ex.answer) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.examples.size());
}

}  // namespace mcqa
