#include "clint/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "clint/data.hpp"
#include "clint/errors.hpp"
#include "clint/experiments.hpp"
#include "clint/nnet.hpp"
#include "clint/tokenizer.hpp"
#include "clint/training.hpp"

namespace clint {

namespace {

namespace fs = std::filesystem;

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Records everything needed to rerun a command bit-identically: resolved
// flags, the seed, and a digest of every input file.
class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    void add(const std::string& key, const std::string& value) {
        entries_.emplace_back(key, value);
    }
    void add(const std::string& key, int64_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, uint64_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, double value) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", value);
        add(key, std::string(buf));
    }
    void add_input(const std::string& key, const std::string& path) {
        add(key, path);
        add(key + "_digest", hex64(fnv1a64(read_file(path))));
    }

    void write(const std::string& out_dir) const {
        std::ostringstream body;
        body << "command=" << command_ << '\n';
        for (const auto& [k, v] : entries_) body << k << '=' << v << '\n';
        std::ofstream out(fs::path(out_dir) / "manifest.txt", std::ios::binary);
        if (!out) throw DataError("cannot write manifest under " + out_dir);
        out << body.str();
        out << "config_hash=" << hex64(fnv1a64(body.str())) << '\n';
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

uint64_t default_seed() {
    if (const char* env = std::getenv("CLINT_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw ConfigError(std::string("CLINT_SEED is not an integer: ") + env);
        }
    }
    return 0;
}

struct ModelShapeFlags {
    int layers = 2;
    int hidden = 32;
    int heads = 2;
    int ff = 64;
    int max_positions = 512;
    double dropout = 0.1;

    void attach(CLI::App* sub) {
        sub->add_option("--layers", layers, "Encoder layers");
        sub->add_option("--hidden", hidden, "Hidden size");
        sub->add_option("--heads", heads, "Attention heads");
        sub->add_option("--ff", ff, "Feed-forward size");
        sub->add_option("--max-positions", max_positions, "Position embedding capacity");
        sub->add_option("--dropout", dropout, "Dropout rate");
    }

    ModelConfig to_config(int vocab_size, uint64_t seed) const {
        ModelConfig cfg;
        cfg.num_layers = layers;
        cfg.hidden_size = hidden;
        cfg.num_heads = heads;
        cfg.ff_size = ff;
        cfg.vocab_size = vocab_size;
        cfg.max_positions = max_positions;
        cfg.dropout = dropout;
        cfg.seed = seed;
        return cfg;
    }

    void record(Manifest& m) const {
        m.add("layers", static_cast<int64_t>(layers));
        m.add("hidden", static_cast<int64_t>(hidden));
        m.add("heads", static_cast<int64_t>(heads));
        m.add("ff", static_cast<int64_t>(ff));
        m.add("max_positions", static_cast<int64_t>(max_positions));
        m.add("dropout", dropout);
    }
};

template <typename T>
std::string join_csl(const std::vector<T>& values) {
    std::ostringstream out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        out << values[i];
    }
    return out.str();
}

struct TrainFlags {
    std::string config_file;
    double learning_rate = -1.0;
    int epochs = -1;
    int batch_size = -1;
    int max_seq_len = -1;
    double mask_prob = -1.0;

    void attach(CLI::App* sub) {
        sub->add_option("--config", config_file, "key=value train config file");
        sub->add_option("--learning-rate", learning_rate, "Adam learning rate");
        sub->add_option("--epochs", epochs, "Training epochs");
        sub->add_option("--batch-size", batch_size, "Batch size");
        sub->add_option("--max-seq-len", max_seq_len, "Word pieces per example after framing");
        sub->add_option("--mask-prob", mask_prob, "Cloze selection probability");
    }

    // File values first, then flag overrides.
    TrainConfig resolve(uint64_t seed) const {
        TrainConfig cfg;
        if (!config_file.empty()) cfg = load_train_config(config_file);
        if (learning_rate > 0) cfg.learning_rate = learning_rate;
        if (epochs >= 0) cfg.epochs = epochs;
        if (batch_size > 0) cfg.batch_size = batch_size;
        if (max_seq_len > 0) cfg.max_seq_len = max_seq_len;
        if (mask_prob > 0) cfg.mask_prob = mask_prob;
        cfg.seed = seed;
        return cfg;
    }

    void record(Manifest& m, const TrainConfig& cfg) const {
        m.add("learning_rate", cfg.learning_rate);
        m.add("epochs", static_cast<int64_t>(cfg.epochs));
        m.add("batch_size", static_cast<int64_t>(cfg.batch_size));
        m.add("max_seq_len", static_cast<int64_t>(cfg.max_seq_len));
        m.add("mask_prob", cfg.mask_prob);
        m.add("seed", cfg.seed);
    }
};

TokenizerArtifacts load_artifacts(const std::string& vocab_path, const std::string& merges_path) {
    return {load_vocab(vocab_path), load_merges(merges_path)};
}

std::vector<std::string> texts_of(const std::vector<Article>& articles) {
    std::vector<std::string> texts;
    texts.reserve(articles.size());
    for (const Article& a : articles) texts.push_back(a.text);
    return texts;
}

void emit_report(const ExperimentReport& report, const std::string& out_dir,
                 const std::string& filename, bool to_stdout) {
    report.save((fs::path(out_dir) / filename).string());
    if (to_stdout) std::cout << report.to_csv();
}

void print_log_tail(const std::vector<TrainLogRow>& log) {
    for (const TrainLogRow& r : log) {
        std::cout << "epoch " << r.epoch << " [" << r.split << "] loss " << r.loss << " accuracy "
                  << r.accuracy << '\n';
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"clint: byte-pair tokenizer, bidirectional encoder, and experiment harness "
                 "for hyperpartisan news classification"};
    app.require_subcommand(1);

    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_given = false;
    app.add_option("--out", out_dir, "Directory for checkpoints, CSVs, and the run manifest")
        ->capture_default_str();
    app.add_option("--seed", seed, "Run seed (default: CLINT_SEED env var, else 0)")
        ->each([&seed_given](const std::string&) { seed_given = true; });
    bool csv_stdout = false;
    app.add_flag("--csv", csv_stdout, "Also print report CSVs to standard output");
    int jobs = 1;
    app.add_option("--jobs", jobs, "Parallel workers for independent grid/ablation cells");

    // --- tokenizer-train ---
    auto* tok_cmd = app.add_subcommand("tokenizer-train", "Learn a BPE vocabulary from a corpus");
    std::string tok_data;
    int tok_vocab_size = 0;
    int tok_min_pair_freq = 2;
    tok_cmd->add_option("--data", tok_data, "JSON-lines corpus")->required();
    tok_cmd->add_option("--vocab-size", tok_vocab_size, "Maximum vocabulary size")->required();
    tok_cmd->add_option("--min-pair-freq", tok_min_pair_freq, "Minimum pair frequency to merge");

    // --- pretrain ---
    auto* pre_cmd = app.add_subcommand("pretrain", "Cloze pre-training on an unlabeled corpus");
    std::string pre_data, pre_vocab, pre_merges, pre_ckpt_in;
    ModelShapeFlags pre_shape;
    TrainFlags pre_train;
    pre_cmd->add_option("--data", pre_data, "JSON-lines corpus (labels ignored)")->required();
    pre_cmd->add_option("--vocab", pre_vocab, "Vocab file")->required();
    pre_cmd->add_option("--merges", pre_merges, "Merges file")->required();
    pre_cmd->add_option("--ckpt", pre_ckpt_in, "Starting checkpoint (default: fresh init)");
    pre_shape.attach(pre_cmd);
    pre_train.attach(pre_cmd);

    // --- finetune ---
    auto* ft_cmd = app.add_subcommand("finetune", "Supervised fine-tuning on labeled articles");
    std::string ft_data, ft_vocab, ft_merges, ft_ckpt_in;
    int ft_permute_n = 0;
    uint64_t ft_permute_seed = 0;
    ModelShapeFlags ft_shape;
    TrainFlags ft_train;
    ft_cmd->add_option("--data", ft_data, "JSON-lines labeled corpus")->required();
    ft_cmd->add_option("--vocab", ft_vocab, "Vocab file")->required();
    ft_cmd->add_option("--merges", ft_merges, "Merges file")->required();
    ft_cmd->add_option("--ckpt", ft_ckpt_in, "Starting checkpoint (default: fresh init)");
    ft_cmd->add_option("--permute-ngrams", ft_permute_n,
                       "Shuffle training inputs in chunks of N pieces");
    ft_cmd->add_option("--permute-seed", ft_permute_seed, "Seed for the permutation stream");
    ft_shape.attach(ft_cmd);
    ft_train.attach(ft_cmd);

    // --- eval ---
    auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on labeled articles");
    std::string ev_data, ev_vocab, ev_merges, ev_ckpt;
    int ev_max_seq_len = 0;
    int ev_permute_n = 0;
    uint64_t ev_permute_seed = 0;
    ev_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint to evaluate")->required();
    ev_cmd->add_option("--data", ev_data, "JSON-lines labeled corpus")->required();
    ev_cmd->add_option("--vocab", ev_vocab, "Vocab file")->required();
    ev_cmd->add_option("--merges", ev_merges, "Merges file")->required();
    ev_cmd->add_option("--max-seq-len", ev_max_seq_len, "Word pieces per example")->required();
    ev_cmd->add_option("--permute-ngrams", ev_permute_n, "Permute inputs in chunks of N");
    ev_cmd->add_option("--permute-seed", ev_permute_seed, "Seed for the permutation stream");

    // --- grid ---
    auto* gr_cmd = app.add_subcommand("grid", "Sequence-length x learning-rate grid search");
    std::string gr_data, gr_vocab, gr_merges, gr_ckpt;
    std::vector<int> gr_seq_lens;
    std::vector<double> gr_lrs;
    TrainFlags gr_train;
    gr_cmd->add_option("--ckpt", gr_ckpt, "Starting checkpoint for every cell")->required();
    gr_cmd->add_option("--data", gr_data, "JSON-lines labeled corpus (80/20 split)")->required();
    gr_cmd->add_option("--vocab", gr_vocab, "Vocab file")->required();
    gr_cmd->add_option("--merges", gr_merges, "Merges file")->required();
    gr_cmd->add_option("--seq-lens", gr_seq_lens, "Comma-separated sequence lengths")
        ->required()
        ->delimiter(',');
    gr_cmd->add_option("--learning-rates", gr_lrs, "Comma-separated learning rates")
        ->required()
        ->delimiter(',');
    gr_train.attach(gr_cmd);

    // --- permute-eval ---
    auto* pm_cmd = app.add_subcommand(
        "permute-eval", "Evaluate across permute_ngrams granularities (optionally re-fine-tuning "
                        "each cell on permuted training inputs)");
    std::string pm_data, pm_vocab, pm_merges, pm_ckpt;
    std::vector<int> pm_ngrams;
    int pm_finetune_epochs = 0;
    uint64_t pm_permute_seed = 0;
    TrainFlags pm_train;
    pm_cmd->add_option("--ckpt", pm_ckpt, "Checkpoint to evaluate")->required();
    pm_cmd->add_option("--data", pm_data, "JSON-lines labeled corpus")->required();
    pm_cmd->add_option("--vocab", pm_vocab, "Vocab file")->required();
    pm_cmd->add_option("--merges", pm_merges, "Merges file")->required();
    pm_cmd->add_option("--ngrams", pm_ngrams, "Comma-separated permutation granularities")
        ->required()
        ->delimiter(',');
    pm_cmd->add_option("--finetune-epochs", pm_finetune_epochs,
                       "Fine-tune each cell on the 80%% split first (0 = evaluate only)");
    pm_cmd->add_option("--permute-seed", pm_permute_seed, "Seed for the permutation stream");
    pm_train.attach(pm_cmd);

    // --- self-train ---
    auto* st_cmd = app.add_subcommand("self-train", "Pseudo-label promotion over slice votes");
    std::string st_data, st_pool, st_vocab, st_merges, st_ckpt_in;
    int st_warmup = 40, st_epochs = 60, st_pool_sample = 500, st_num_slices = 5, st_slice_len = 0;
    ModelShapeFlags st_shape;
    TrainFlags st_train;
    st_cmd->add_option("--data", st_data, "JSON-lines labeled corpus")->required();
    st_cmd->add_option("--pool", st_pool, "JSON-lines unlabeled pool")->required();
    st_cmd->add_option("--vocab", st_vocab, "Vocab file")->required();
    st_cmd->add_option("--merges", st_merges, "Merges file")->required();
    st_cmd->add_option("--ckpt", st_ckpt_in, "Starting checkpoint (default: fresh init)");
    st_cmd->add_option("--warmup-epochs", st_warmup, "Epochs before promotion starts");
    st_cmd->add_option("--selftrain-epochs", st_epochs, "Promotion epochs");
    st_cmd->add_option("--pool-sample", st_pool_sample, "Articles sampled per epoch");
    st_cmd->add_option("--num-slices", st_num_slices, "Slices per article");
    st_cmd->add_option("--slice-len", st_slice_len,
                       "Pieces per slice (default: max-seq-len minus framing)");
    st_shape.attach(st_cmd);
    st_train.attach(st_cmd);

    // --- consistency ---
    auto* cs_cmd = app.add_subcommand("consistency", "Per-article slice agreement");
    std::string cs_data, cs_vocab, cs_merges, cs_ckpt;
    int cs_num_slices = 5, cs_slice_len = 0, cs_max_seq_len = 0;
    cs_cmd->add_option("--ckpt", cs_ckpt, "Checkpoint")->required();
    cs_cmd->add_option("--data", cs_data, "JSON-lines corpus")->required();
    cs_cmd->add_option("--vocab", cs_vocab, "Vocab file")->required();
    cs_cmd->add_option("--merges", cs_merges, "Merges file")->required();
    cs_cmd->add_option("--max-seq-len", cs_max_seq_len, "Word pieces per slice after framing")
        ->required();
    cs_cmd->add_option("--num-slices", cs_num_slices, "Slices per article");
    cs_cmd->add_option("--slice-len", cs_slice_len,
                       "Pieces per slice (default: max-seq-len minus framing)");

    // --- ablate-pretraining ---
    auto* ab_cmd = app.add_subcommand("ablate-pretraining",
                                      "Fine-tune from random vs pre-trained init per seq length");
    std::string ab_data, ab_unlabeled, ab_vocab, ab_merges;
    std::vector<int> ab_seq_lens;
    int ab_pretrain_epochs = 10;
    ModelShapeFlags ab_shape;
    TrainFlags ab_train;
    ab_cmd->add_option("--data", ab_data, "JSON-lines labeled corpus (80/20 split)")->required();
    ab_cmd->add_option("--unlabeled", ab_unlabeled, "JSON-lines unlabeled corpus")->required();
    ab_cmd->add_option("--vocab", ab_vocab, "Vocab file")->required();
    ab_cmd->add_option("--merges", ab_merges, "Merges file")->required();
    ab_cmd->add_option("--seq-lens", ab_seq_lens, "Comma-separated sequence lengths")
        ->required()
        ->delimiter(',');
    ab_cmd->add_option("--pretrain-epochs", ab_pretrain_epochs, "Cloze pre-training epochs");
    ab_shape.attach(ab_cmd);
    ab_train.attach(ab_cmd);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (!seed_given) seed = default_seed();
        fs::create_directories(out_dir);

        if (*tok_cmd) {
            Manifest manifest("tokenizer-train");
            manifest.add_input("data", tok_data);
            manifest.add("vocab_size", static_cast<int64_t>(tok_vocab_size));
            manifest.add("min_pair_freq", static_cast<int64_t>(tok_min_pair_freq));
            manifest.write(out_dir);

            const auto articles = load_corpus(tok_data);
            const auto artifacts = train_bpe(texts_of(articles), tok_vocab_size, tok_min_pair_freq);
            save_vocab(artifacts.vocab, (fs::path(out_dir) / "vocab.txt").string());
            save_merges(artifacts.merges, (fs::path(out_dir) / "merges.txt").string());
            std::cout << "vocab size " << artifacts.vocab.size() << ", " << artifacts.merges.size()
                      << " merges\n";
            return 0;
        }

        if (*pre_cmd) {
            const TrainConfig cfg = pre_train.resolve(seed);
            Manifest manifest("pretrain");
            manifest.add_input("data", pre_data);
            manifest.add_input("vocab", pre_vocab);
            manifest.add_input("merges", pre_merges);
            if (!pre_ckpt_in.empty()) manifest.add_input("ckpt", pre_ckpt_in);
            else pre_shape.record(manifest);
            pre_train.record(manifest, cfg);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(pre_vocab, pre_merges);
            Parameters<float> params =
                pre_ckpt_in.empty()
                    ? init_params<float>(pre_shape.to_config(artifacts.vocab.size(), seed))
                    : load_checkpoint(pre_ckpt_in);
            std::vector<TrainLogRow> log;
            const auto articles = load_corpus(pre_data);
            params = pretrain(std::move(params), texts_of(articles), artifacts, cfg, &log);
            save_checkpoint(params, (fs::path(out_dir) / "model.ckpt").string());
            save_train_log(log, (fs::path(out_dir) / "train_log.csv").string());
            print_log_tail(log);
            return 0;
        }

        if (*ft_cmd) {
            TrainConfig cfg = ft_train.resolve(seed);
            if (ft_permute_n > 0) cfg.permutation = PermutationSpec{ft_permute_n, ft_permute_seed};
            Manifest manifest("finetune");
            manifest.add_input("data", ft_data);
            manifest.add_input("vocab", ft_vocab);
            manifest.add_input("merges", ft_merges);
            if (!ft_ckpt_in.empty()) manifest.add_input("ckpt", ft_ckpt_in);
            else ft_shape.record(manifest);
            if (ft_permute_n > 0) {
                manifest.add("permute_ngrams", static_cast<int64_t>(ft_permute_n));
                manifest.add("permute_seed", ft_permute_seed);
            }
            ft_train.record(manifest, cfg);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(ft_vocab, ft_merges);
            Parameters<float> params =
                ft_ckpt_in.empty()
                    ? init_params<float>(ft_shape.to_config(artifacts.vocab.size(), seed))
                    : load_checkpoint(ft_ckpt_in);
            std::vector<TrainLogRow> log;
            const auto articles = load_corpus(ft_data);
            params = finetune(std::move(params), articles, artifacts, cfg, &log);
            save_checkpoint(params, (fs::path(out_dir) / "model.ckpt").string());
            save_train_log(log, (fs::path(out_dir) / "train_log.csv").string());
            print_log_tail(log);
            return 0;
        }

        if (*ev_cmd) {
            Manifest manifest("eval");
            manifest.add_input("ckpt", ev_ckpt);
            manifest.add_input("data", ev_data);
            manifest.add_input("vocab", ev_vocab);
            manifest.add_input("merges", ev_merges);
            manifest.add("max_seq_len", static_cast<int64_t>(ev_max_seq_len));
            if (ev_permute_n > 0) {
                manifest.add("permute_ngrams", static_cast<int64_t>(ev_permute_n));
                manifest.add("permute_seed", ev_permute_seed);
            }
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(ev_vocab, ev_merges);
            const auto params = load_checkpoint(ev_ckpt);
            const auto articles = load_corpus(ev_data);
            std::optional<PermutationSpec> spec;
            if (ev_permute_n > 0) spec = PermutationSpec{ev_permute_n, ev_permute_seed};
            const Metrics m = evaluate(params, articles, artifacts, ev_max_seq_len, spec);

            ExperimentReport report;
            report.header = {"max_seq_len", "accuracy", "precision", "recall", "f1"};
            report.rows.push_back({std::to_string(ev_max_seq_len),
                                   m.accuracy() ? std::to_string(*m.accuracy()) : "",
                                   m.precision() ? std::to_string(*m.precision()) : "",
                                   m.recall() ? std::to_string(*m.recall()) : "",
                                   m.f1() ? std::to_string(*m.f1()) : ""});
            std::cout << report.to_csv();
            report.save((fs::path(out_dir) / "eval.csv").string());
            return 0;
        }

        if (*gr_cmd) {
            const TrainConfig cfg = gr_train.resolve(seed);
            Manifest manifest("grid");
            manifest.add_input("ckpt", gr_ckpt);
            manifest.add_input("data", gr_data);
            manifest.add_input("vocab", gr_vocab);
            manifest.add_input("merges", gr_merges);
            manifest.add("seq_lens", join_csl(gr_seq_lens));
            manifest.add("learning_rates", join_csl(gr_lrs));
            gr_train.record(manifest, cfg);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(gr_vocab, gr_merges);
            const auto params = load_checkpoint(gr_ckpt);
            const auto split = split_80_20(load_corpus(gr_data));
            const auto report =
                grid_search(params, split, gr_seq_lens, gr_lrs, artifacts, cfg, jobs);
            emit_report(report, out_dir, "grid.csv", csv_stdout);
            return 0;
        }

        if (*pm_cmd) {
            const TrainConfig cfg = pm_train.resolve(seed);
            Manifest manifest("permute-eval");
            manifest.add_input("ckpt", pm_ckpt);
            manifest.add_input("data", pm_data);
            manifest.add_input("vocab", pm_vocab);
            manifest.add_input("merges", pm_merges);
            manifest.add("ngrams", join_csl(pm_ngrams));
            manifest.add("finetune_epochs", static_cast<int64_t>(pm_finetune_epochs));
            manifest.add("permute_seed", pm_permute_seed);
            pm_train.record(manifest, cfg);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(pm_vocab, pm_merges);
            const auto params = load_checkpoint(pm_ckpt);
            const auto articles = load_corpus(pm_data);
            DatasetSplit split;
            if (pm_finetune_epochs > 0) {
                split = split_80_20(articles);
            } else {
                split.validation = articles;
            }
            const auto report = permutation_ablation(params, split, pm_ngrams, artifacts, cfg,
                                                     pm_finetune_epochs, pm_permute_seed, jobs);
            emit_report(report, out_dir, "permute.csv", csv_stdout);
            return 0;
        }

        if (*st_cmd) {
            SelfTrainConfig cfg;
            cfg.train = st_train.resolve(seed);
            cfg.warmup_epochs = st_warmup;
            cfg.self_train_epochs = st_epochs;
            cfg.pool_sample = st_pool_sample;
            cfg.slices.num_slices = st_num_slices;
            cfg.slices.slice_len = st_slice_len > 0 ? st_slice_len : cfg.train.max_seq_len - 2;

            Manifest manifest("self-train");
            manifest.add_input("data", st_data);
            manifest.add_input("pool", st_pool);
            manifest.add_input("vocab", st_vocab);
            manifest.add_input("merges", st_merges);
            if (!st_ckpt_in.empty()) manifest.add_input("ckpt", st_ckpt_in);
            else st_shape.record(manifest);
            manifest.add("warmup_epochs", static_cast<int64_t>(cfg.warmup_epochs));
            manifest.add("selftrain_epochs", static_cast<int64_t>(cfg.self_train_epochs));
            manifest.add("pool_sample", static_cast<int64_t>(cfg.pool_sample));
            manifest.add("num_slices", static_cast<int64_t>(cfg.slices.num_slices));
            manifest.add("slice_len", static_cast<int64_t>(cfg.slices.slice_len));
            st_train.record(manifest, cfg.train);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(st_vocab, st_merges);
            Parameters<float> params =
                st_ckpt_in.empty()
                    ? init_params<float>(st_shape.to_config(artifacts.vocab.size(), seed))
                    : load_checkpoint(st_ckpt_in);
            const auto labeled = load_corpus(st_data);
            const auto pool = load_corpus(st_pool);
            auto result = self_train(std::move(params), labeled, pool, artifacts, cfg);
            save_checkpoint(result.params, (fs::path(out_dir) / "model.ckpt").string());

            ExperimentReport report;
            report.header = {"epoch", "promoted", "train_set_size"};
            for (size_t e = 0; e < result.promoted_per_epoch.size(); ++e) {
                report.rows.push_back({std::to_string(e),
                                       std::to_string(result.promoted_per_epoch[e]),
                                       std::to_string(result.train_set_size[e])});
            }
            emit_report(report, out_dir, "selftrain.csv", csv_stdout);
            return 0;
        }

        if (*cs_cmd) {
            SliceConfig slice_cfg;
            slice_cfg.num_slices = cs_num_slices;
            slice_cfg.slice_len = cs_slice_len > 0 ? cs_slice_len : cs_max_seq_len - 2;

            Manifest manifest("consistency");
            manifest.add_input("ckpt", cs_ckpt);
            manifest.add_input("data", cs_data);
            manifest.add_input("vocab", cs_vocab);
            manifest.add_input("merges", cs_merges);
            manifest.add("num_slices", static_cast<int64_t>(slice_cfg.num_slices));
            manifest.add("slice_len", static_cast<int64_t>(slice_cfg.slice_len));
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(cs_vocab, cs_merges);
            const auto params = load_checkpoint(cs_ckpt);
            const auto articles = load_corpus(cs_data);

            ExperimentReport report;
            report.header = {"article_id", "agreement"};
            for (const Article& a : articles) {
                const double agreement = consistency(params, a, artifacts, slice_cfg);
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f", agreement);
                report.rows.push_back({a.id, buf});
            }
            emit_report(report, out_dir, "consistency.csv", csv_stdout);
            return 0;
        }

        if (*ab_cmd) {
            TrainConfig ft_cfg = ab_train.resolve(seed);
            TrainConfig pre_cfg = ft_cfg;
            pre_cfg.epochs = ab_pretrain_epochs;

            Manifest manifest("ablate-pretraining");
            manifest.add_input("data", ab_data);
            manifest.add_input("unlabeled", ab_unlabeled);
            manifest.add_input("vocab", ab_vocab);
            manifest.add_input("merges", ab_merges);
            manifest.add("seq_lens", join_csl(ab_seq_lens));
            manifest.add("pretrain_epochs", static_cast<int64_t>(ab_pretrain_epochs));
            ab_shape.record(manifest);
            ab_train.record(manifest, ft_cfg);
            manifest.write(out_dir);

            const auto artifacts = load_artifacts(ab_vocab, ab_merges);
            const auto base =
                init_params<float>(ab_shape.to_config(artifacts.vocab.size(), seed));
            const auto split = split_80_20(load_corpus(ab_data));
            const auto unlabeled = texts_of(load_corpus(ab_unlabeled));
            const auto report = pretraining_ablation(base, unlabeled, split, ab_seq_lens,
                                                     artifacts, ft_cfg, pre_cfg, jobs);
            emit_report(report, out_dir, "ablate_pretraining.csv", csv_stdout);
            return 0;
        }

        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return 3;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace clint
