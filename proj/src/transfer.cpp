#include "mcqa/transfer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace mcqa {

using ordered_json = nlohmann::ordered_json;

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "memn2n") return ModelKind::MemN2N;
    if (s == "qacnn") return ModelKind::Qacnn;
    throw ConfigError("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
    return k == ModelKind::MemN2N ? "memn2n" : "qacnn";
}

ParamStore model_init(const ModelHyper& hyper, std::size_t vocab_size, const RngStream& rng,
                      const EmbeddingMatrix* pretrained) {
    if (hyper.kind == ModelKind::MemN2N)
        return memn2n_init(hyper.memn2n, vocab_size, rng, pretrained);
    return qacnn_init(hyper.qacnn, vocab_size, rng, pretrained);
}

Tensor model_forward(const ModelHyper& hyper, const ParamStore& params, const McqaExample& ex) {
    if (hyper.kind == ModelKind::MemN2N)
        return memn2n_forward(params, ex, hyper.memn2n).choice_probs;
    return qacnn_forward(params, ex, hyper.qacnn);
}

std::size_t model_predict(const ModelHyper& hyper, const ParamStore& params,
                          const McqaExample& ex) {
    Tensor probs = model_forward(hyper, params, ex);
    const auto& p = probs.data();
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

// --- freeze specs ---------------------------------------------------------

bool pattern_match(const std::string& pattern, const std::string& name) {
    std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

FreezeSpec freeze_preset(const std::string& name) {
    FreezeSpec spec;
    spec.preset = name;
    if (name == "target-only" || name == "source-only" || name == "source+target" ||
        name == "ft-all") {
        return spec;
    }
    if (name == "ft-last") {
        spec.frozen_patterns = {"*.embed",  "*.conv1.*", "*.conv2.*", "*.fc1.*",
                                "memn2n.A", "memn2n.B",  "memn2n.C"};
        return spec;
    }
    if (name == "ft-last2") {
        spec.frozen_patterns = {"*.embed", "*.conv1.*", "*.conv2.*", "memn2n.A", "memn2n.C"};
        return spec;
    }
    throw ConfigError("unknown freeze preset: " + name);
}

void apply_freeze(ParamStore& store, const FreezeSpec& spec) {
    std::size_t trainable = 0;
    for (const auto& name : store.names()) {
        bool frozen = store.is_pinned(name);
        for (const auto& pat : spec.frozen_patterns)
            if (pattern_match(pat, name)) frozen = true;
        store.set_frozen(name, frozen);
        if (!frozen) ++trainable;
    }
    if (trainable == 0 && spec.preset != "source-only")
        throw ConfigError("freeze spec '" + spec.preset + "' leaves no trainable parameters");
}

// --- records --------------------------------------------------------------

std::string fingerprint(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string run_record_to_json(const RunRecord& rec) {
    ordered_json j;
    j["config_fingerprint"] = rec.config_fingerprint;
    j["seed"] = rec.seed;
    j["train_loss"] = rec.train_loss;
    j["dev_accuracy"] = rec.dev_accuracy;
    j["selected_epoch"] = rec.selected_epoch;
    j["test_accuracy"] = rec.test_accuracy;
    if (!rec.qtype_accuracy.empty()) {
        ordered_json q = ordered_json::object();
        for (const auto& [type, entry] : rec.qtype_accuracy) {
            ordered_json e;
            e["count"] = entry.first;
            e["accuracy"] = entry.second;
            q[std::to_string(type)] = e;
        }
        j["qtype_accuracy"] = q;
    }
    return j.dump();
}

// --- training -------------------------------------------------------------

double evaluate(const ModelHyper& hyper, const ParamStore& params,
                const std::vector<McqaExample>& ds) {
    if (ds.empty()) throw ContractError("evaluate: empty dataset");
    std::size_t correct = 0;
    for (const auto& ex : ds) {
        if (ex.answer < 0) throw ContractError("evaluate: unlabeled example");
        if (model_predict(hyper, params, ex) == static_cast<std::size_t>(ex.answer)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::map<int, std::pair<std::size_t, double>> eval_by_qtype(
    const ModelHyper& hyper, const ParamStore& params, const std::vector<McqaExample>& ds) {
    std::map<int, std::pair<std::size_t, std::size_t>> tallies;  // type -> (count, correct)
    for (const auto& ex : ds) {
        if (ex.qtype < 1 || ex.qtype > 3) throw ContractError("eval_by_qtype: untagged example");
        if (ex.answer < 0) throw ContractError("eval_by_qtype: unlabeled example");
        auto& t = tallies[ex.qtype];
        ++t.first;
        if (model_predict(hyper, params, ex) == static_cast<std::size_t>(ex.answer)) ++t.second;
    }
    std::map<int, std::pair<std::size_t, double>> out;
    for (const auto& [type, t] : tallies)
        out[type] = {t.first, static_cast<double>(t.second) / static_cast<double>(t.first)};
    return out;
}

TrainResult train(const ParamStore& init, const std::vector<McqaExample>& train_set,
                  const std::vector<McqaExample>& dev_set, const TrainConfig& cfg) {
    if (cfg.batch_size == 0 || cfg.max_epochs == 0)
        throw ConfigError("train: batch_size and max_epochs must be positive");
    for (const auto& ex : train_set)
        if (ex.answer < 0) throw ContractError("train: unlabeled training example");

    const auto t0 = std::chrono::steady_clock::now();
    ParamStore params = init.clone();
    ParamStore best = params.clone();
    RunRecord rec;
    rec.seed = cfg.seed;
    double best_dev = -1.0;
    std::size_t since_best = 0;

    RngStream shuffle_stream = RngStream(cfg.seed).derive("train.shuffle");
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_stream.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Graph graph;
            Graph::Scope scope(graph);
            Tensor batch_loss = Tensor::scalar(0.0);
            for (std::size_t i = start; i < end; ++i) {
                const McqaExample& ex = train_set[order[i]];
                Tensor probs = model_forward(cfg.model, params, ex);
                batch_loss = add(batch_loss, nll_loss(probs, static_cast<std::size_t>(ex.answer)));
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
            const double loss_val = batch_loss.item();
            if (std::isnan(loss_val) || std::isinf(loss_val))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += loss_val * static_cast<double>(end - start);
            graph.backward(batch_loss);
            sgd_step(params, cfg.lr);
        }
        rec.train_loss.push_back(order.empty() ? 0.0
                                               : loss_sum / static_cast<double>(order.size()));
        const double dev_acc = evaluate(cfg.model, params, dev_set);
        rec.dev_accuracy.push_back(dev_acc);
        if (dev_acc > best_dev) {
            best_dev = dev_acc;
            best = params.clone();
            rec.selected_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    rec.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(best), std::move(rec)};
}

// --- transfer pipeline ----------------------------------------------------

namespace {

std::string config_text(const TrainConfig& cfg, const FreezeSpec& freeze,
                        const DatasetTriple& source, const DatasetTriple& target) {
    ordered_json j;
    j["model"] = to_string(cfg.model.kind);
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["seed"] = cfg.seed;
    if (cfg.model.kind == ModelKind::MemN2N) {
        j["embed_dim"] = cfg.model.memn2n.embed_dim;
        j["hops"] = cfg.model.memn2n.hops;
    } else {
        j["embed_dim"] = cfg.model.qacnn.embed_dim;
        j["choice_len"] = cfg.model.qacnn.choice_len;
        j["conv_width"] = cfg.model.qacnn.conv_width;
        j["filters"] = {cfg.model.qacnn.filters1, cfg.model.qacnn.filters2};
        j["hidden"] = cfg.model.qacnn.hidden;
        j["attention_scale"] = cfg.model.qacnn.attention_scale;
    }
    j["freeze"] = freeze.preset;
    j["source"] = {source.train.name, source.train.size(), source.dev.size(), source.test.size()};
    j["target"] = {target.train.name, target.train.size(), target.dev.size(), target.test.size()};
    return j.dump();
}

}  // namespace

RunRecord transfer_run(const DatasetTriple& source, const DatasetTriple& target,
                       const TrainConfig& cfg, const FreezeSpec& freeze, ParamStore* out_params,
                       const std::string* pretrained_embeddings_path) {
    // vocabulary covers both sides so target tokens have embedding rows even
    // when training never sees them
    Vocab vocab = build_vocab({&source.train, &target.train}, 1);
    RngStream root(cfg.seed);

    EmbeddingMatrix pretrained;
    const EmbeddingMatrix* pretrained_ptr = nullptr;
    if (pretrained_embeddings_path) {
        const std::size_t d = cfg.model.kind == ModelKind::MemN2N ? cfg.model.memn2n.embed_dim
                                                                  : cfg.model.qacnn.embed_dim;
        pretrained = load_embeddings(*pretrained_embeddings_path, vocab, d, root);
        pretrained_ptr = &pretrained;
    }

    auto enc = [&](const Dataset& ds) { return encode_dataset(vocab, ds, cfg.bounds); };
    ParamStore params = model_init(cfg.model, vocab.size(), root, pretrained_ptr);

    RunRecord rec;
    rec.config_fingerprint = fingerprint(config_text(cfg, freeze, source, target));
    rec.seed = cfg.seed;

    const auto target_test = enc(target.test);
    auto finish = [&](ParamStore&& final_params, RunRecord&& inner) {
        inner.config_fingerprint = rec.config_fingerprint;
        inner.test_accuracy = evaluate(cfg.model, final_params, target_test);
        bool all_tagged = !target.test.examples.empty();
        for (const auto& ex : target.test.examples)
            if (ex.qtype < 1) all_tagged = false;
        if (all_tagged)
            inner.qtype_accuracy = eval_by_qtype(cfg.model, final_params, target_test);
        if (out_params) *out_params = std::move(final_params);
        return std::move(inner);
    };

    if (freeze.preset == "target-only") {
        auto result = train(params, enc(target.train), enc(target.dev), cfg);
        return finish(std::move(result.best_params), std::move(result.record));
    }
    if (freeze.preset == "source+target") {
        auto combined = enc(source.train);
        auto tgt = enc(target.train);
        combined.insert(combined.end(), tgt.begin(), tgt.end());
        auto result = train(params, combined, enc(target.dev), cfg);
        return finish(std::move(result.best_params), std::move(result.record));
    }

    // step 1: pre-train on the source; identical regardless of the freeze spec
    auto pre = train(params, enc(source.train), enc(source.dev), cfg);

    if (freeze.preset == "source-only") {
        RunRecord inner = std::move(pre.record);
        return finish(std::move(pre.best_params), std::move(inner));
    }

    // step 2: freeze-stratified fine-tuning on the target
    ParamStore tuned = pre.best_params.clone();
    apply_freeze(tuned, freeze);
    TrainConfig ft_cfg = cfg;
    ft_cfg.seed = RngStream(cfg.seed).derive("finetune-stage").next_u64();
    auto result = train(tuned, enc(target.train), enc(target.dev), ft_cfg);
    result.record.seed = cfg.seed;
    return finish(std::move(result.best_params), std::move(result.record));
}

std::vector<AblationRow> ablate_fraction(AblationAxis axis, const std::vector<double>& fractions,
                                         const DatasetTriple& source, const DatasetTriple& target,
                                         const TrainConfig& base_cfg, const FreezeSpec& freeze,
                                         const std::vector<std::uint64_t>& seeds) {
    if (fractions.empty() || seeds.empty())
        throw ConfigError("ablate_fraction: need at least one fraction and seed");
    for (std::size_t i = 1; i < fractions.size(); ++i)
        if (fractions[i] <= fractions[i - 1])
            throw ConfigError("ablate_fraction: fractions must be strictly ascending");

    struct Job {
        std::size_t fi, si;
    };
    std::vector<Job> jobs;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
        for (std::size_t si = 0; si < seeds.size(); ++si) jobs.push_back({fi, si});
    std::vector<double> acc(jobs.size(), 0.0);

    auto run_job = [&](const Job& job) {
        TrainConfig cfg = base_cfg;
        cfg.seed = seeds[job.si];
        DatasetTriple src = source, tgt = target;
        RngStream rng(cfg.seed);
        if (axis == AblationAxis::Target)
            tgt.train = subsample(target.train, fractions[job.fi], rng);
        else
            src.train = subsample(source.train, fractions[job.fi], rng);
        return transfer_run(src, tgt, cfg, freeze).test_accuracy;
    };

    std::size_t threads = 1;
    if (const char* env = std::getenv("MCQA_TRANSFER_THREADS")) {
        threads = static_cast<std::size_t>(std::max(1, std::atoi(env)));
    }
    threads = std::min(threads, jobs.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) acc[i] = run_job(jobs[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    acc[i] = run_job(jobs[i]);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<AblationRow> rows;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        AblationRow row;
        row.fraction = fractions[fi];
        double sum = 0.0;
        for (std::size_t si = 0; si < seeds.size(); ++si)
            sum += acc[fi * seeds.size() + si];
        row.mean_accuracy = sum / static_cast<double>(seeds.size());
        double ss = 0.0;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const double d = acc[fi * seeds.size() + si] - row.mean_accuracy;
            ss += d * d;
        }
        row.stdev = seeds.size() > 1 ? std::sqrt(ss / static_cast<double>(seeds.size() - 1)) : 0.0;
        row.delta = fi == 0 ? 0.0 : row.mean_accuracy - rows.back().mean_accuracy;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mcqa
