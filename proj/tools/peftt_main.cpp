// Command-line front end: train / eval / account / synth.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "peftt/accounting.hpp"
#include "peftt/checkpoint.hpp"
#include "peftt/report.hpp"
#include "peftt/scenarios.hpp"
#include "peftt/training.hpp"

namespace fs = std::filesystem;
using namespace peftt;

namespace {

int env_thread_cap() {
    const char* v = std::getenv("PEFTT_THREADS");
    if (!v) return 1;
    const int n = std::atoi(v);
    return n < 1 ? 1 : n;
}

struct CorpusOptions {
    std::string spec;        // synthetic:CxN[@seed], one path, or three comma paths
    char delimiter = '\t';
    uint64_t fallback_seed = 1;  // synthetic seed / split seed when unspecified
};

bool is_synthetic(const std::string& spec) { return spec.rfind("synthetic:", 0) == 0; }

CorpusSplits resolve_corpus(const CorpusOptions& opt) {
    if (opt.spec.empty()) throw std::invalid_argument("no --corpus given");
    if (is_synthetic(opt.spec)) {
        SynthSpec spec = SynthSpec::parse(opt.spec.substr(std::string("synthetic:").size()));
        if (opt.spec.find('@') == std::string::npos) spec.seed = opt.fallback_seed;
        CorpusSplits s;
        s.label_names = synth_label_names(spec.n_classes);
        SynthSpec val = spec, test = spec;
        val.n_per_class = std::max(1, spec.n_per_class / 5);
        val.seed = spec.seed + 101;
        test.n_per_class = val.n_per_class;
        test.seed = spec.seed + 202;
        s.train = synthesize_corpus(spec);
        s.validation = synthesize_corpus(val);
        s.test = synthesize_corpus(test);
        return s;
    }
    const size_t c1 = opt.spec.find(',');
    if (c1 == std::string::npos) {
        LoadedCorpus loaded = load_tncc(opt.spec, opt.delimiter);
        if (loaded.skipped_empty > 0) {
            std::cerr << "warning: skipped " << loaded.skipped_empty
                      << " lines with empty titles\n";
        }
        return split_corpus(std::move(loaded.examples), std::move(loaded.label_names),
                            opt.fallback_seed);
    }
    const size_t c2 = opt.spec.find(',', c1 + 1);
    if (c2 == std::string::npos) {
        throw std::invalid_argument("--corpus expects one path, three comma-separated paths, "
                                    "or synthetic:<classes>x<per-class>");
    }
    const std::string paths[3] = {opt.spec.substr(0, c1), opt.spec.substr(c1 + 1, c2 - c1 - 1),
                                  opt.spec.substr(c2 + 1)};
    CorpusSplits s;
    std::vector<Example>* splits[3] = {&s.train, &s.validation, &s.test};
    for (int i = 0; i < 3; ++i) {
        LoadedCorpus loaded = load_tncc(paths[i], opt.delimiter);
        if (loaded.skipped_empty > 0) {
            std::cerr << "warning: " << paths[i] << ": skipped " << loaded.skipped_empty
                      << " lines with empty titles\n";
        }
        // Re-index labels by name against the shared order of first appearance.
        std::vector<int> remap(loaded.label_names.size());
        for (size_t k = 0; k < loaded.label_names.size(); ++k) {
            const std::string& name = loaded.label_names[k];
            auto it = std::find(s.label_names.begin(), s.label_names.end(), name);
            if (it == s.label_names.end()) {
                remap[k] = static_cast<int>(s.label_names.size());
                s.label_names.push_back(name);
            } else {
                remap[k] = static_cast<int>(it - s.label_names.begin());
            }
        }
        for (Example& ex : loaded.examples) {
            ex.label = remap[static_cast<size_t>(ex.label)];
            splits[i]->push_back(std::move(ex));
        }
    }
    return s;
}

Template default_synth_template() { return Template::parse("{mask} {text}"); }

Verbalizer default_synth_verbalizer(const std::vector<std::string>& label_names) {
    Verbalizer v;
    for (const std::string& name : label_names) {
        Verbalizer::Entry e;
        e.label_name = name;
        e.words = {"topic_" + name};
        v.entries.push_back(std::move(e));
    }
    return v;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

void write_label_map(const fs::path& path, const std::vector<std::string>& names) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    for (const std::string& n : names) f << n << '\n';
}

std::vector<std::string> read_label_map(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return names;
}

struct TrainArgs {
    std::string scenario;
    std::string model = "desk";
    std::string mode = "adapter_prompt";
    CorpusOptions corpus;
    std::string template_path, verbalizer_path;
    std::string adapter_variant = "parallel";
    bool tie_mlm_head = false;
    int rank = 8;
    double lr = 0.0;
    int batch_size = 0;  // 0 = scenario default
    int epochs = 30;
    int max_len = 108;
    uint64_t seed = 1;
    std::string out_dir;
    int repeats = 1;
    bool quiet = false;
};

Scenario build_scenario(const TrainArgs& a) {
    Scenario s;
    if (!a.scenario.empty()) {
        auto spec = parse_scenario_abbreviation(a.scenario);
        if (!spec) {
            throw std::invalid_argument("unknown scenario abbreviation '" + a.scenario + "'");
        }
        s = make_scenario(*spec);
    } else {
        auto mode = parse_mode(a.mode);
        if (!mode) throw std::invalid_argument("unknown mode '" + a.mode + "'");
        if (a.model == "desk") {
            s.name = "desk-" + std::string(mode_name(*mode));
            s.model_key = "desk";
            s.family = "bert";
            s.config = desk_config();
        } else {
            const CatalogEntry* e = find_catalog_entry(a.model);
            if (!e) throw std::invalid_argument("unknown model '" + a.model + "'");
            s.name = a.model + "-" + mode_name(*mode);
            s.model_key = a.model;
            s.family = e->family;
            s.config = e->config;
        }
        s.mode = *mode;
    }
    if (a.lr > 0.0) s.hp.lr = a.lr;
    if (a.batch_size > 0) s.hp.batch_size = a.batch_size;
    s.hp.epochs = a.epochs;
    s.hp.max_len = a.max_len;
    s.config.max_len = a.max_len;
    s.config.tie_mlm_head = a.tie_mlm_head;
    s.hp.rank = a.rank;
    s.hp.seed = a.seed;
    if (a.adapter_variant == "sequential") {
        s.hp.adapter_mode = AdapterMode::sequential;
    } else if (a.adapter_variant != "parallel") {
        throw std::invalid_argument("unknown adapter variant '" + a.adapter_variant +
                                    "' (parallel | sequential)");
    }
    return s;
}

struct PromptConfig {
    std::optional<Template> tmpl;
    std::optional<Verbalizer> verbalizer;
};

PromptConfig resolve_prompt_config(const TrainArgs& a, const Scenario& s,
                                   const CorpusSplits& corpus) {
    PromptConfig p;
    if (!mode_uses_prompt(s.mode)) return p;
    if (!a.template_path.empty()) {
        p.tmpl = Template::load(a.template_path);
    } else if (is_synthetic(a.corpus.spec)) {
        p.tmpl = default_synth_template();
    } else {
        throw std::invalid_argument("mode '" + std::string(mode_name(s.mode)) +
                                    "' requires --template for a file corpus");
    }
    if (!a.verbalizer_path.empty()) {
        p.verbalizer = Verbalizer::load(a.verbalizer_path);
    } else if (is_synthetic(a.corpus.spec)) {
        p.verbalizer = default_synth_verbalizer(corpus.label_names);
    } else {
        throw std::invalid_argument("mode '" + std::string(mode_name(s.mode)) +
                                    "' requires --verbalizer for a file corpus");
    }
    return p;
}

void persist_run(const fs::path& dir, const TrainResult& result) {
    fs::create_directories(dir);
    write_text(dir / "report.json", report_to_json(result.report));
    write_text(dir / "table.txt", report_table({result.report}));
    write_label_map(dir / "label_map.txt", result.label_names);
    result.tokenizer.vocab().save((dir / "vocab.txt").string());
    save_model_checkpoint((dir / "checkpoint.peftt").string(), result.model,
                          result.adapters ? &*result.adapters : nullptr, result.report.mode);
    if (result.adapters) {
        save_model_checkpoint((dir / "base.peftt").string(), result.model, nullptr,
                              result.report.mode);
        save_adapter_checkpoint((dir / "adapters.peftt").string(), result.model,
                                *result.adapters, result.report.mode);
    }
    if (result.tmpl) {
        write_text(dir / "template.txt",
                   result.tmpl->render("{text}", "{mask}") + "\n");
    }
    if (result.verbalizer) result.verbalizer->save((dir / "verbalizer.tsv").string());
}

int cmd_train(const TrainArgs& args) {
    const Scenario base_scenario = build_scenario(args);
    CorpusOptions corpus_opt = args.corpus;
    corpus_opt.fallback_seed = args.seed;
    const CorpusSplits corpus = resolve_corpus(corpus_opt);
    const PromptConfig prompt = resolve_prompt_config(args, base_scenario, corpus);

    const int repeats = std::max(1, args.repeats);
    std::vector<TrainReport> reports(static_cast<size_t>(repeats));
    std::vector<std::optional<TrainResult>> results(static_cast<size_t>(repeats));

    const int workers = std::min(repeats, env_thread_cap());
    std::atomic<int> next{0};
    std::mutex log_mutex;
    std::vector<std::string> errors;

    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < repeats; i = next.fetch_add(1)) {
            Scenario s = base_scenario;
            s.hp.seed = args.seed + static_cast<uint64_t>(i);
            TrainOptions opts;
            opts.log = (repeats == 1 && !args.quiet) ? &std::cout : nullptr;
            try {
                TrainResult r = run_training(s, corpus, prompt.tmpl, prompt.verbalizer, opts);
                reports[static_cast<size_t>(i)] = r.report;
                if (repeats > 1 && !args.quiet) {
                    std::lock_guard<std::mutex> lock(log_mutex);
                    std::cout << s.name << " [seed " << s.hp.seed << "] test_acc "
                              << r.report.test_acc << " test_macro_f1 "
                              << r.report.test_macro_f1 << "\n";
                }
                results[static_cast<size_t>(i)] = std::move(r);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(log_mutex);
                errors.push_back(e.what());
                return;
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (!errors.empty()) throw std::runtime_error(errors.front());

    std::cout << report_table(reports);
    if (repeats > 1) std::cout << repeat_summary_text(summarize_repeats(reports));

    if (!args.out_dir.empty()) {
        const fs::path out(args.out_dir);
        for (int i = 0; i < repeats; ++i) {
            const fs::path dir = repeats == 1
                                     ? out
                                     : out / ("rep" + std::to_string(i));
            persist_run(dir, *results[static_cast<size_t>(i)]);
        }
        std::ofstream table(out / "table.txt", std::ios::binary);
        table << report_table(reports);
        if (repeats > 1) table << repeat_summary_text(summarize_repeats(reports));
    }
    return 0;
}

struct EvalArgs {
    std::string dir;
    std::string checkpoint;
    std::string adapters;
    CorpusOptions corpus;
    std::string split = "test";
    uint64_t seed = 1;
    int max_len = 108;
};

int cmd_eval(const EvalArgs& args) {
    fs::path run_dir = args.dir.empty() ? fs::path(args.checkpoint).parent_path()
                                        : fs::path(args.dir);
    const std::string ckpt_path =
        !args.checkpoint.empty() ? args.checkpoint : (run_dir / "checkpoint.peftt").string();

    LoadedCheckpoint loaded = load_model_checkpoint(ckpt_path);
    if (loaded.adapter_only) {
        throw std::invalid_argument("eval: '" + ckpt_path +
                                    "' is adapter-only; pass it via --adapters together with "
                                    "a base checkpoint");
    }
    std::optional<AdapterSet> adapters = std::move(loaded.adapters);
    if (!args.adapters.empty()) {
        if (adapters) {
            throw std::invalid_argument("eval: base checkpoint already contains adapters");
        }
        LoadedCheckpoint only = load_model_checkpoint(args.adapters);
        adapters = attach_adapters(loaded.model, only);
    }

    Tokenizer tokenizer(Vocabulary::load((run_dir / "vocab.txt").string()));
    const std::vector<std::string> label_names = read_label_map(run_dir / "label_map.txt");

    std::optional<Template> tmpl;
    std::optional<Verbalizer> verbalizer;
    if (loaded.model.head == HeadKind::mlm) {
        tmpl = Template::load((run_dir / "template.txt").string());
        verbalizer = Verbalizer::load((run_dir / "verbalizer.tsv").string());
        verbalizer->align_to(label_names);
        verbalizer->bind(tokenizer.vocab(), /*add_missing=*/false);
    }

    CorpusOptions corpus_opt = args.corpus;
    corpus_opt.fallback_seed = args.seed;
    CorpusSplits corpus = resolve_corpus(corpus_opt);
    if (corpus.label_names != label_names) {
        // Remap corpus labels onto the frozen training-time order.
        std::vector<int> remap(corpus.label_names.size(), -1);
        for (size_t i = 0; i < corpus.label_names.size(); ++i) {
            auto it = std::find(label_names.begin(), label_names.end(), corpus.label_names[i]);
            if (it == label_names.end()) {
                throw std::invalid_argument("eval: corpus label '" + corpus.label_names[i] +
                                            "' was not seen at training time");
            }
            remap[i] = static_cast<int>(it - label_names.begin());
        }
        for (auto* split : {&corpus.train, &corpus.validation, &corpus.test}) {
            for (Example& ex : *split) ex.label = remap[static_cast<size_t>(ex.label)];
        }
        corpus.label_names = label_names;
    }

    std::span<const Example> split;
    if (args.split == "test") {
        split = corpus.test;
    } else if (args.split == "val" || args.split == "validation") {
        split = corpus.validation;
    } else if (args.split == "train") {
        split = corpus.train;
    } else {
        throw std::invalid_argument("eval: unknown split '" + args.split + "'");
    }

    auto [acc, f1] = evaluate(loaded.model, adapters ? &*adapters : nullptr, tokenizer,
                              tmpl ? &*tmpl : nullptr, verbalizer ? &*verbalizer : nullptr,
                              split, args.max_len, static_cast<int>(label_names.size()));
    char line[160];
    std::snprintf(line, sizeof(line), "split %s  n %zu  acc %.17g  macro_f1 %.17g\n",
                  args.split.c_str(), split.size(), acc, f1);
    std::cout << line;
    return 0;
}

int cmd_account(const std::string& model, int rank) {
    std::vector<AccountingRow> rows;
    if (model == "all") {
        for (const CatalogEntry& e : model_catalog()) {
            for (AccountingRow& r : account_table(e.key, rank)) rows.push_back(std::move(r));
        }
    } else {
        rows = account_table(model, rank);
    }
    std::cout << render_table(rows);
    return 0;
}

struct SynthArgs {
    int classes = 12;
    int per_class = 50;
    uint64_t seed = 1;
    std::string out;
    std::string imbalance;
    std::string template_out, verbalizer_out, label_map_out;
    char delimiter = '\t';
};

int cmd_synth(const SynthArgs& args) {
    SynthSpec spec;
    spec.n_classes = args.classes;
    spec.n_per_class = args.per_class;
    spec.seed = args.seed;
    if (!args.imbalance.empty()) {
        std::istringstream in(args.imbalance);
        std::string item;
        while (std::getline(in, item, ',')) spec.class_weights.push_back(std::stod(item));
    }
    const std::vector<Example> examples = synthesize_corpus(spec);
    const std::vector<std::string> names = synth_label_names(spec.n_classes);
    save_tsv(args.out, examples, names, args.delimiter);
    std::cout << "wrote " << examples.size() << " examples to " << args.out << "\n";
    if (!args.template_out.empty()) write_text(args.template_out, "{mask} {text}\n");
    if (!args.verbalizer_out.empty()) default_synth_verbalizer(names).save(args.verbalizer_out);
    if (!args.label_map_out.empty()) write_label_map(args.label_map_out, names);
    return 0;
}

char parse_delimiter(const std::string& s) {
    if (s == "\\t" || s == "tab" || s == "\t") return '\t';
    if (s.size() != 1) {
        throw std::invalid_argument("--delimiter must be one character or 'tab'");
    }
    return s[0];
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parameter-efficient fine-tuning workbench for masked-LM encoders"};
    app.require_subcommand(1);

    TrainArgs train;
    std::string train_delim = "\t", eval_delim = "\t";
    CLI::App* t = app.add_subcommand("train", "Run one fine-tuning scenario");
    t->add_option("--scenario", train.scenario,
                  "Scenario abbreviation (CSW, TBAP, ... with optional -desk suffix)");
    t->add_option("--model", train.model, "Catalog model key or 'desk'");
    t->add_option("--mode", train.mode, "full | prompt | adapter | adapter_prompt");
    t->add_option("--corpus", train.corpus.spec,
                  "TSV path, three comma-separated paths, or synthetic:<C>x<N>[@seed]")
        ->required();
    t->add_option("--template", train.template_path, "Template file ({mask} and {text})");
    t->add_option("--verbalizer", train.verbalizer_path, "Verbalizer file (label<TAB>words)");
    t->add_option("--rank", train.rank, "Adapter rank");
    t->add_option("--adapter-variant", train.adapter_variant,
                  "parallel (additive low-rank update) | sequential (two-stage)");
    t->add_flag("--tie-mlm-head", train.tie_mlm_head,
                "Tie the MLM output projection to the token embeddings");
    t->add_option("--lr", train.lr, "Learning rate (0 = scenario default)");
    t->add_option("--batch-size", train.batch_size, "Batch size (0 = scenario default)");
    t->add_option("--epochs", train.epochs, "Training epochs");
    t->add_option("--max-len", train.max_len, "Maximum sequence length");
    t->add_option("--seed", train.seed, "Base seed");
    t->add_option("--delimiter", train_delim, "Corpus field delimiter");
    t->add_option("--out", train.out_dir, "Output directory for reports and checkpoints");
    t->add_option("--repeats", train.repeats, "Independent runs with consecutive seeds");
    t->add_flag("--quiet", train.quiet, "Suppress per-epoch logs");

    EvalArgs eval;
    CLI::App* e = app.add_subcommand("eval", "Score a checkpoint on a corpus split");
    e->add_option("--dir", eval.dir, "Training output directory");
    e->add_option("--checkpoint", eval.checkpoint, "Checkpoint path (default <dir>/checkpoint.peftt)");
    e->add_option("--adapters", eval.adapters, "Adapter-only checkpoint to re-inject");
    e->add_option("--corpus", eval.corpus.spec, "Corpus spec, as in train")->required();
    e->add_option("--split", eval.split, "train | val | test");
    e->add_option("--seed", eval.seed, "Seed for synthetic corpora / ratio splits");
    e->add_option("--max-len", eval.max_len, "Maximum sequence length");
    e->add_option("--delimiter", eval_delim, "Corpus field delimiter");

    std::string account_model = "all";
    int account_rank = 8;
    CLI::App* a = app.add_subcommand("account", "Trainable-parameter accounting");
    a->add_option("--model", account_model, "Catalog model key or 'all'");
    a->add_option("--rank", account_rank, "Adapter rank");

    SynthArgs synth;
    std::string synth_delim = "\t";
    CLI::App* sy = app.add_subcommand("synth", "Write a synthetic separable corpus");
    sy->add_option("--classes", synth.classes, "Number of classes");
    sy->add_option("--per-class", synth.per_class, "Examples per class");
    sy->add_option("--seed", synth.seed, "Seed");
    sy->add_option("--out", synth.out, "Output TSV path")->required();
    sy->add_option("--imbalance", synth.imbalance, "Comma-separated class weights");
    sy->add_option("--template-out", synth.template_out, "Also write a default template");
    sy->add_option("--verbalizer-out", synth.verbalizer_out, "Also write a default verbalizer");
    sy->add_option("--label-map-out", synth.label_map_out, "Also write the label order");
    sy->add_option("--delimiter", synth_delim, "Output field delimiter");

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) {
            train.corpus.delimiter = parse_delimiter(train_delim);
            return cmd_train(train);
        }
        if (e->parsed()) {
            eval.corpus.delimiter = parse_delimiter(eval_delim);
            return cmd_eval(eval);
        }
        if (a->parsed()) return cmd_account(account_model, account_rank);
        if (sy->parsed()) {
            synth.delimiter = parse_delimiter(synth_delim);
            return cmd_synth(synth);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
