#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcqa/checkpoint.hpp"
#include "mcqa/corpus.hpp"
#include "mcqa/report.hpp"
#include "mcqa/selflabel.hpp"
#include "mcqa/transfer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace mcqa;

namespace {

constexpr const char* kEngineVersion = "0.1.0";

void expect_fields(const ordered_json& j, const std::vector<std::string>& allowed,
                   const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError(where + ": unknown field '" + it.key() + "'");
}

struct ExperimentConfig {
    ModelHyper model;
    TrainConfig train;
    TruncationBounds bounds;
    std::map<std::string, std::string> dataset_paths;
    std::optional<SynthConfig> synthetic;
    std::optional<std::string> embeddings_path;
    std::string freeze = "ft-all";
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::string axis = "target";
    std::size_t selflabel_epochs = 10;
    bool selflabel_select_peak = false;
    std::optional<double> reference_accuracy;
    std::string out_dir = "out";
    std::size_t example_index = 0;
};

template <class T>
void read_if(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ExperimentConfig parse_config(const ordered_json& j) {
    expect_fields(j, {"model", "train", "bounds", "datasets", "synthetic", "embeddings", "freeze",
                      "seed", "seeds", "fractions", "axis", "selflabel", "out", "example_index"},
                  "config");
    ExperimentConfig cfg;
    if (j.contains("model")) {
        const auto& m = j["model"];
        expect_fields(m, {"kind", "embed_dim", "hops", "choice_len", "conv_width", "filters1",
                          "filters2", "hidden", "attention_scale"},
                      "model");
        std::string kind = "qacnn";
        read_if(m, "kind", kind);
        cfg.model.kind = model_kind_from_string(kind);
        std::size_t embed_dim = 16;
        read_if(m, "embed_dim", embed_dim);
        cfg.model.memn2n.embed_dim = embed_dim;
        cfg.model.qacnn.embed_dim = embed_dim;
        read_if(m, "hops", cfg.model.memn2n.hops);
        read_if(m, "choice_len", cfg.model.qacnn.choice_len);
        read_if(m, "conv_width", cfg.model.qacnn.conv_width);
        read_if(m, "filters1", cfg.model.qacnn.filters1);
        read_if(m, "filters2", cfg.model.qacnn.filters2);
        read_if(m, "hidden", cfg.model.qacnn.hidden);
        read_if(m, "attention_scale", cfg.model.qacnn.attention_scale);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        expect_fields(t, {"lr", "batch_size", "max_epochs", "patience"}, "train");
        read_if(t, "lr", cfg.train.lr);
        read_if(t, "batch_size", cfg.train.batch_size);
        read_if(t, "max_epochs", cfg.train.max_epochs);
        read_if(t, "patience", cfg.train.patience);
    }
    if (j.contains("bounds")) {
        const auto& b = j["bounds"];
        expect_fields(b, {"max_sentences", "max_sentence_len"}, "bounds");
        read_if(b, "max_sentences", cfg.bounds.max_sentences);
        read_if(b, "max_sentence_len", cfg.bounds.max_sentence_len);
    }
    if (j.contains("datasets")) {
        const auto& d = j["datasets"];
        expect_fields(d, {"source_train", "source_dev", "source_test", "target_train",
                          "target_dev", "target_test"},
                      "datasets");
        for (auto it = d.begin(); it != d.end(); ++it)
            cfg.dataset_paths[it.key()] = it.value().get<std::string>();
    }
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        expect_fields(s, {"entity_pool", "attribute_pool", "filler_pool", "sentences_per_story",
                          "sentence_len", "source_choices", "target_choices", "source_train",
                          "source_dev", "source_test", "target_train", "target_dev", "target_test",
                          "shift_ratio", "seed"},
                      "synthetic");
        SynthConfig sc;
        read_if(s, "entity_pool", sc.entity_pool);
        read_if(s, "attribute_pool", sc.attribute_pool);
        read_if(s, "filler_pool", sc.filler_pool);
        read_if(s, "sentences_per_story", sc.sentences_per_story);
        read_if(s, "sentence_len", sc.sentence_len);
        read_if(s, "source_choices", sc.source_choices);
        read_if(s, "target_choices", sc.target_choices);
        read_if(s, "source_train", sc.source_train);
        read_if(s, "source_dev", sc.source_dev);
        read_if(s, "source_test", sc.source_test);
        read_if(s, "target_train", sc.target_train);
        read_if(s, "target_dev", sc.target_dev);
        read_if(s, "target_test", sc.target_test);
        read_if(s, "shift_ratio", sc.shift_ratio);
        read_if(s, "seed", sc.seed);
        cfg.synthetic = sc;
    }
    if (j.contains("embeddings")) {
        const auto& e = j["embeddings"];
        expect_fields(e, {"path"}, "embeddings");
        cfg.embeddings_path = e.at("path").get<std::string>();
    }
    read_if(j, "freeze", cfg.freeze);
    read_if(j, "seed", cfg.seed);
    read_if(j, "seeds", cfg.seeds);
    read_if(j, "fractions", cfg.fractions);
    read_if(j, "axis", cfg.axis);
    if (j.contains("selflabel")) {
        const auto& s = j["selflabel"];
        expect_fields(s, {"epochs", "select_peak", "reference_accuracy"}, "selflabel");
        read_if(s, "epochs", cfg.selflabel_epochs);
        read_if(s, "select_peak", cfg.selflabel_select_peak);
        if (s.contains("reference_accuracy"))
            cfg.reference_accuracy = s["reference_accuracy"].get<double>();
    }
    read_if(j, "out", cfg.out_dir);
    read_if(j, "example_index", cfg.example_index);
    if (cfg.seeds.empty()) cfg.seeds = {cfg.seed};
    cfg.train.seed = cfg.seed;
    cfg.train.bounds = cfg.bounds;
    return cfg;
}

std::string canonical_config_text(const ExperimentConfig& cfg, const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["model"] = to_string(cfg.model.kind);
    j["embed_dim"] = cfg.model.qacnn.embed_dim;
    j["lr"] = cfg.train.lr;
    j["batch_size"] = cfg.train.batch_size;
    j["max_epochs"] = cfg.train.max_epochs;
    j["patience"] = cfg.train.patience;
    j["freeze"] = cfg.freeze;
    j["seed"] = cfg.seed;
    j["seeds"] = cfg.seeds;
    if (cfg.synthetic) {
        j["synthetic_seed"] = cfg.synthetic->seed;
        j["shift_ratio"] = cfg.synthetic->shift_ratio;
    }
    for (const auto& [k, v] : cfg.dataset_paths) j["dataset." + k] = v;
    return j.dump();
}

struct Corpora {
    DatasetTriple source, target;
    bool has_source = false, has_target = false;
};

Corpora load_corpora(const ExperimentConfig& cfg) {
    Corpora c;
    if (cfg.synthetic) {
        SynthBenchmark b = gen_synthetic(*cfg.synthetic);
        c.source = {std::move(b.source_train), std::move(b.source_dev), std::move(b.source_test)};
        c.target = {std::move(b.target_train), std::move(b.target_dev), std::move(b.target_test)};
        c.has_source = c.has_target = true;
        return c;
    }
    auto load = [&](const char* key, const char* split) -> std::optional<Dataset> {
        auto it = cfg.dataset_paths.find(key);
        if (it == cfg.dataset_paths.end()) return std::nullopt;
        std::string name = std::string(key).substr(0, std::string(key).find('_'));
        return load_dataset(it->second, name, split);
    };
    if (auto d = load("source_train", "train")) {
        c.source.train = std::move(*d);
        c.has_source = true;
        if (auto dv = load("source_dev", "dev")) c.source.dev = std::move(*dv);
        if (auto dt = load("source_test", "test")) c.source.test = std::move(*dt);
    }
    if (auto d = load("target_train", "train")) {
        c.target.train = std::move(*d);
        c.has_target = true;
    }
    if (auto dv = load("target_dev", "dev")) {
        c.target.dev = std::move(*dv);
        c.has_target = true;
    }
    if (auto dt = load("target_test", "test")) {
        c.target.test = std::move(*dt);
        c.has_target = true;
    }
    return c;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
}

void write_bundle_manifest(const fs::path& out_dir, const std::string& command,
                           const std::string& fingerprint_hex) {
    ordered_json m;
    m["engine_version"] = kEngineVersion;
    m["command"] = command;
    m["config_fingerprint"] = fingerprint_hex;
    write_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

void write_timing(const fs::path& out_dir, double seconds) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "wall_clock_sec %.3f\n", seconds);
    write_file(out_dir / "timing.txt", buf);
}

Vocab vocab_from_manifest(const ordered_json& manifest) {
    Vocab v;
    for (const auto& tok : manifest.at("vocab")) v.add(tok.get<std::string>());
    return v;
}

ordered_json vocab_to_json(const Vocab& v) {
    ordered_json arr = ordered_json::array();
    for (std::size_t id = 2; id < v.size(); ++id) arr.push_back(v.token(id));
    return arr;
}

ModelHyper hyper_from_manifest(const ordered_json& manifest, const ExperimentConfig& cfg) {
    ModelHyper h = cfg.model;
    const auto& m = manifest.at("model");
    h.kind = model_kind_from_string(m.at("kind").get<std::string>());
    std::size_t embed_dim = m.at("embed_dim").get<std::size_t>();
    h.memn2n.embed_dim = embed_dim;
    h.qacnn.embed_dim = embed_dim;
    if (m.contains("hops")) h.memn2n.hops = m.at("hops").get<std::size_t>();
    if (m.contains("choice_len")) h.qacnn.choice_len = m.at("choice_len").get<std::size_t>();
    if (m.contains("conv_width")) h.qacnn.conv_width = m.at("conv_width").get<std::size_t>();
    if (m.contains("filters1")) h.qacnn.filters1 = m.at("filters1").get<std::size_t>();
    if (m.contains("filters2")) h.qacnn.filters2 = m.at("filters2").get<std::size_t>();
    if (m.contains("hidden")) h.qacnn.hidden = m.at("hidden").get<std::size_t>();
    if (m.contains("attention_scale"))
        h.qacnn.attention_scale = m.at("attention_scale").get<double>();
    return h;
}

ordered_json hyper_to_json(const ModelHyper& h) {
    ordered_json m;
    m["kind"] = to_string(h.kind);
    if (h.kind == ModelKind::MemN2N) {
        m["embed_dim"] = h.memn2n.embed_dim;
        m["hops"] = h.memn2n.hops;
    } else {
        m["embed_dim"] = h.qacnn.embed_dim;
        m["choice_len"] = h.qacnn.choice_len;
        m["conv_width"] = h.qacnn.conv_width;
        m["filters1"] = h.qacnn.filters1;
        m["filters2"] = h.qacnn.filters2;
        m["hidden"] = h.qacnn.hidden;
        m["attention_scale"] = h.qacnn.attention_scale;
    }
    return m;
}

// --- commands -------------------------------------------------------------

int cmd_pretrain(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_source) throw ConfigError("pretrain: source datasets required");

    std::vector<const Dataset*> vocab_sources = {&c.source.train};
    if (c.has_target && !c.target.train.examples.empty()) vocab_sources.push_back(&c.target.train);
    Vocab vocab = build_vocab(vocab_sources, 1);

    RngStream root(cfg.seed);
    EmbeddingMatrix pretrained;
    const EmbeddingMatrix* pretrained_ptr = nullptr;
    if (cfg.embeddings_path) {
        const std::size_t d = cfg.model.kind == ModelKind::MemN2N ? cfg.model.memn2n.embed_dim
                                                                  : cfg.model.qacnn.embed_dim;
        pretrained = load_embeddings(*cfg.embeddings_path, vocab, d, root);
        pretrained_ptr = &pretrained;
    }
    ParamStore params = model_init(cfg.model, vocab.size(), root, pretrained_ptr);

    auto train_set = encode_dataset(vocab, c.source.train, cfg.bounds);
    auto dev_set = encode_dataset(vocab, c.source.dev, cfg.bounds);
    auto result = train(params, train_set, dev_set, cfg.train);

    const std::string fp = fingerprint(canonical_config_text(cfg, "pretrain"));
    result.record.config_fingerprint = fp;
    if (!c.source.test.examples.empty())
        result.record.test_accuracy =
            evaluate(cfg.model, result.best_params, encode_dataset(vocab, c.source.test, cfg.bounds));

    fs::create_directories(cfg.out_dir);
    ordered_json manifest;
    manifest["engine_version"] = kEngineVersion;
    manifest["config_fingerprint"] = fp;
    manifest["seed"] = cfg.seed;
    manifest["model"] = hyper_to_json(cfg.model);
    manifest["vocab"] = vocab_to_json(vocab);
    save_checkpoint(result.best_params, manifest.dump(), fs::path(cfg.out_dir) / "checkpoint.ckpt");
    write_file(fs::path(cfg.out_dir) / "record.json", run_record_to_json(result.record) + "\n");
    write_bundle_manifest(cfg.out_dir, "pretrain", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "pretrain: dev=" << result.record.dev_accuracy[result.record.selected_epoch]
              << " test=" << result.record.test_accuracy << "\n";
    return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_target) throw ConfigError("finetune: target datasets required");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    ordered_json manifest = ordered_json::parse(ckpt.manifest);
    Vocab vocab = vocab_from_manifest(manifest);
    ModelHyper hyper = hyper_from_manifest(manifest, cfg);

    ParamStore params = ckpt.params.clone();
    apply_freeze(params, freeze_preset(cfg.freeze));
    TrainConfig tc = cfg.train;
    tc.model = hyper;
    auto result = train(params, encode_dataset(vocab, c.target.train, cfg.bounds),
                        encode_dataset(vocab, c.target.dev, cfg.bounds), tc);
    const std::string fp = fingerprint(canonical_config_text(cfg, "finetune"));
    result.record.config_fingerprint = fp;
    if (!c.target.test.examples.empty()) {
        auto test_set = encode_dataset(vocab, c.target.test, cfg.bounds);
        result.record.test_accuracy = evaluate(hyper, result.best_params, test_set);
        bool tagged = true;
        for (const auto& ex : c.target.test.examples)
            if (ex.qtype < 1) tagged = false;
        if (tagged) result.record.qtype_accuracy = eval_by_qtype(hyper, result.best_params, test_set);
    }

    fs::create_directories(cfg.out_dir);
    manifest["config_fingerprint"] = fp;
    save_checkpoint(result.best_params, manifest.dump(), fs::path(cfg.out_dir) / "checkpoint.ckpt");
    write_file(fs::path(cfg.out_dir) / "record.json", run_record_to_json(result.record) + "\n");
    write_bundle_manifest(cfg.out_dir, "finetune", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "finetune(" << cfg.freeze << "): test=" << result.record.test_accuracy << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_target || c.target.test.examples.empty())
        throw ConfigError("eval: target_test dataset required");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    ordered_json manifest = ordered_json::parse(ckpt.manifest);
    Vocab vocab = vocab_from_manifest(manifest);
    ModelHyper hyper = hyper_from_manifest(manifest, cfg);

    auto test_set = encode_dataset(vocab, c.target.test, cfg.bounds);
    const double acc = evaluate(hyper, ckpt.params, test_set);
    const std::string fp = fingerprint(canonical_config_text(cfg, "eval"));

    fs::create_directories(cfg.out_dir);
    RunRecord rec;
    rec.config_fingerprint = fp;
    rec.seed = cfg.seed;
    rec.test_accuracy = acc;
    bool tagged = true;
    for (const auto& ex : c.target.test.examples)
        if (ex.qtype < 1) tagged = false;
    if (tagged) rec.qtype_accuracy = eval_by_qtype(hyper, ckpt.params, test_set);
    write_file(fs::path(cfg.out_dir) / "record.json", run_record_to_json(rec) + "\n");
    write_bundle_manifest(cfg.out_dir, "eval", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "eval: accuracy=" << acc << "\n";
    for (const auto& [type, entry] : rec.qtype_accuracy)
        std::cout << "  type " << type << ": n=" << entry.first << " acc=" << entry.second << "\n";
    return 0;
}

int cmd_selflabel(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_target) throw ConfigError("selflabel: target datasets required");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    ordered_json manifest = ordered_json::parse(ckpt.manifest);
    Vocab vocab = vocab_from_manifest(manifest);

    SelfLabelConfig sc;
    sc.epochs = cfg.selflabel_epochs;
    sc.inner = cfg.train;
    sc.inner.model = hyper_from_manifest(manifest, cfg);
    sc.freeze = freeze_preset(cfg.freeze);
    sc.select_peak = cfg.selflabel_select_peak;

    auto target_train = encode_dataset(vocab, c.target.train, cfg.bounds);
    auto test_set = encode_dataset(vocab, c.target.test, cfg.bounds);
    auto result = self_label_finetune(ckpt.params, target_train, test_set, sc);

    const std::string fp = fingerprint(canonical_config_text(cfg, "selflabel"));
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "trace.csv", trace_csv(result.trace));
    write_file(fs::path(cfg.out_dir) / "curve.svg",
               accuracy_curve_svg(result.trace.test_accuracy, cfg.reference_accuracy));
    manifest["config_fingerprint"] = fp;
    save_checkpoint(result.params, manifest.dump(), fs::path(cfg.out_dir) / "checkpoint.ckpt");
    write_bundle_manifest(cfg.out_dir, "selflabel", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "selflabel: trace[0]=" << result.trace.test_accuracy.front()
              << " peak=" << result.trace.test_accuracy[result.best_epoch] << " (epoch "
              << result.best_epoch << ")\n";
    return 0;
}

int cmd_ablate(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_source || !c.has_target)
        throw ConfigError("ablate: source and target datasets required");
    AblationAxis axis = cfg.axis == "source" ? AblationAxis::Source : AblationAxis::Target;
    if (cfg.axis != "source" && cfg.axis != "target")
        throw ConfigError("ablate: axis must be 'source' or 'target'");
    TrainConfig tc = cfg.train;
    tc.model = cfg.model;
    auto rows = ablate_fraction(axis, cfg.fractions, c.source, c.target, tc,
                                freeze_preset(cfg.freeze), cfg.seeds);
    const std::string fp = fingerprint(canonical_config_text(cfg, "ablate"));
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "table.csv", ablation_csv(rows));
    write_bundle_manifest(cfg.out_dir, "ablate", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << ablation_csv(rows);
    return 0;
}

int cmd_gensynth(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!cfg.synthetic) throw ConfigError("gen-synth: 'synthetic' config section required");
    SynthBenchmark b = gen_synthetic(*cfg.synthetic);
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);
    save_dataset(b.source_train, (out / "source_train.jsonl").string());
    save_dataset(b.source_dev, (out / "source_dev.jsonl").string());
    save_dataset(b.source_test, (out / "source_test.jsonl").string());
    save_dataset(b.target_train, (out / "target_train.jsonl").string());
    save_dataset(b.target_dev, (out / "target_dev.jsonl").string());
    save_dataset(b.target_test, (out / "target_test.jsonl").string());
    write_bundle_manifest(cfg.out_dir, "gen-synth",
                          fingerprint(canonical_config_text(cfg, "gen-synth")));
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "gen-synth: wrote 6 splits to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_export_attn(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Corpora c = load_corpora(cfg);
    if (!c.has_target || c.target.test.examples.empty())
        throw ConfigError("export-attn: target_test dataset required");
    if (cfg.example_index >= c.target.test.examples.size())
        throw ConfigError("export-attn: example_index out of range");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    ordered_json manifest = ordered_json::parse(ckpt.manifest);
    Vocab vocab = vocab_from_manifest(manifest);
    ModelHyper hyper = hyper_from_manifest(manifest, cfg);
    if (hyper.kind != ModelKind::Qacnn)
        throw ConfigError("export-attn: attention export requires a qacnn checkpoint");

    const TokenizedExample& raw = c.target.test.examples[cfg.example_index];
    McqaExample ex = encode_example(vocab, raw, cfg.bounds);
    AttentionRecord rec = export_attention(ckpt.params, ex, hyper.qacnn);

    // token surface forms for the encoded (possibly truncated) story
    std::vector<std::vector<std::string>> sentences;
    for (const auto& sent : ex.story) {
        std::vector<std::string> toks;
        for (std::size_t id : sent) toks.push_back(vocab.token(id));
        sentences.push_back(std::move(toks));
    }

    const std::string fp = fingerprint(canonical_config_text(cfg, "export-attn"));
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "attention.svg", attention_heatmap_svg(sentences, rec));
    write_file(fs::path(cfg.out_dir) / "attention.txt", attention_record_text(sentences, rec));
    write_bundle_manifest(cfg.out_dir, "export-attn", fp);
    write_timing(cfg.out_dir,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "export-attn: wrote attention.svg (" << sentences.size() << " sentences)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-choice QA transfer-learning engine"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, freeze, fractions_arg;
    std::optional<std::uint64_t> seed_flag;
    std::optional<std::size_t> epochs_flag;
    app.add_option("--config", config_path, "experiment config file (JSON)");
    app.add_option("--seed", seed_flag, "override config seed");
    app.add_option("--out", out_dir, "override output directory");
    app.add_option("--checkpoint", checkpoint_path, "checkpoint path");
    app.add_option("--freeze", freeze, "freeze preset");
    app.add_option("--fractions", fractions_arg, "comma-separated fractions for ablate");
    app.add_option("--epochs", epochs_flag, "self-label epochs / max train epochs");

    auto* pretrain = app.add_subcommand("pretrain", "train on the source dataset");
    auto* finetune = app.add_subcommand("finetune", "fine-tune a checkpoint on the target");
    auto* selflabel = app.add_subcommand("selflabel", "unsupervised self-label fine-tuning");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* ablate = app.add_subcommand("ablate", "data-fraction ablation sweep");
    auto* gensynth = app.add_subcommand("gen-synth", "generate the synthetic benchmark");
    auto* export_attn = app.add_subcommand("export-attn", "export attention heatmap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ordered_json j = ordered_json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config file: " + config_path);
            try {
                j = ordered_json::parse(in);
            } catch (const std::exception& e) {
                throw ConfigError(std::string("config parse error: ") + e.what());
            }
        }
        ExperimentConfig cfg = parse_config(j);
        // flags take precedence over config fields
        if (seed_flag) {
            cfg.seed = *seed_flag;
            cfg.train.seed = *seed_flag;
            cfg.seeds = {*seed_flag};
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!freeze.empty()) cfg.freeze = freeze;
        if (!fractions_arg.empty()) {
            cfg.fractions.clear();
            std::istringstream is(fractions_arg);
            std::string tok;
            while (std::getline(is, tok, ',')) cfg.fractions.push_back(std::stod(tok));
        }
        if (epochs_flag) {
            cfg.selflabel_epochs = *epochs_flag;
            cfg.train.max_epochs = *epochs_flag;
        }

        auto need_ckpt = [&]() -> const std::string& {
            if (checkpoint_path.empty()) throw ConfigError("--checkpoint is required");
            return checkpoint_path;
        };
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (finetune->parsed()) return cmd_finetune(cfg, need_ckpt());
        if (selflabel->parsed()) return cmd_selflabel(cfg, need_ckpt());
        if (eval_cmd->parsed()) return cmd_eval(cfg, need_ckpt());
        if (ablate->parsed()) return cmd_ablate(cfg);
        if (gensynth->parsed()) return cmd_gensynth(cfg);
        if (export_attn->parsed()) return cmd_export_attn(cfg, need_ckpt());
        throw ConfigError("no command given");
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
