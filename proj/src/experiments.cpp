#include "clint/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>
#include <unordered_set>

#include "clint/errors.hpp"

namespace clint {

namespace {

std::string fmt_ratio(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

std::string fmt_lr(double lr) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", lr);
    return buf;
}

std::vector<std::string> metrics_cells(const Metrics& m) {
    return {fmt_ratio(m.accuracy()), fmt_ratio(m.precision()), fmt_ratio(m.recall()),
            fmt_ratio(m.f1())};
}

// Runs work(0..n) across up to `jobs` threads; each index owns its own output
// slot, so the only synchronization point is the claim counter.
void run_cells(int n, int jobs, const std::function<void(int)>& work) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(jobs));
    for (int t = 0; t < jobs; ++t) {
        threads.emplace_back([&, t]() {
            try {
                for (;;) {
                    const int i = next.fetch_add(1);
                    if (i >= n) break;
                    work(i);
                }
            } catch (...) {
                errors[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    }
    for (std::thread& th : threads) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

std::optional<double> Metrics::accuracy() const {
    const int64_t n = total();
    if (n == 0) return std::nullopt;
    return static_cast<double>(tp + tn) / static_cast<double>(n);
}

std::optional<double> Metrics::precision() const {
    if (tp + fp == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::optional<double> Metrics::recall() const {
    if (tp + fn == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> Metrics::f1() const {
    const auto p = precision();
    const auto r = recall();
    if (!p || !r || *p + *r == 0.0) return std::nullopt;
    return 2.0 * *p * *r / (*p + *r);
}

Metrics Metrics::from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn) {
    if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw InputError("negative confusion count");
    return Metrics{tp, fp, fn, tn};
}

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw InputError("predictions and labels differ in length");
    }
    if (predictions.empty()) throw InputError("no predictions to score");
    Metrics m;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], l = labels[i];
        if ((p != 0 && p != 1) || (l != 0 && l != 1)) {
            throw InputError("predictions and labels must be 0 or 1");
        }
        if (p == 1 && l == 1) ++m.tp;
        else if (p == 1 && l == 0) ++m.fp;
        else if (p == 0 && l == 1) ++m.fn;
        else ++m.tn;
    }
    return m;
}

Metrics evaluate(const Parameters<float>& params, const std::vector<Article>& dataset,
                 const TokenizerArtifacts& tok, int max_seq_len,
                 const std::optional<PermutationSpec>& permutation) {
    if (dataset.empty()) throw InputError("empty evaluation set");
    std::vector<int> preds, labels;
    preds.reserve(dataset.size());
    labels.reserve(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Article& a = dataset[i];
        if (!a.label.has_value()) throw InputError("unlabeled article in evaluation set: " + a.id);
        std::vector<TokenId> ids = encode(a.text, tok.vocab, tok.merges);
        if (permutation) {
            Rng rng(derive_seed(permutation->seed, static_cast<uint64_t>(i), kStreamPermute));
            ids = permute_ngrams(ids, permutation->permute_ngrams, rng);
        }
        const ModelInput framed =
            truncate_for_model(ids, max_seq_len, params.config.max_positions);
        const float p = classify(params, framed.ids, framed.mask);
        preds.push_back(p > 0.5f ? 1 : 0);
        labels.push_back(*a.label ? 1 : 0);
    }
    return compute_metrics(preds, labels);
}

std::vector<std::vector<TokenId>> slice_article(const std::vector<TokenId>& ids,
                                                const SliceConfig& cfg) {
    if (ids.empty()) throw InputError("cannot slice an empty article");
    if (cfg.num_slices < 1 || cfg.slice_len < 1) {
        throw ConfigError("slice config must have positive num_slices and slice_len");
    }
    const int64_t len = static_cast<int64_t>(ids.size());
    const int64_t slice_len = cfg.slice_len;
    const int64_t num = cfg.num_slices;

    std::vector<int64_t> starts;
    starts.reserve(static_cast<size_t>(num));
    if (len >= num * slice_len) {
        for (int64_t i = 0; i < num; ++i) starts.push_back(i * slice_len);
    } else {
        const int64_t span = std::max<int64_t>(0, len - slice_len);
        for (int64_t i = 0; i < num; ++i) {
            const int64_t start =
                num == 1 ? 0
                         : static_cast<int64_t>(std::llround(static_cast<double>(i * span) /
                                                             static_cast<double>(num - 1)));
            starts.push_back(start);
        }
    }

    std::vector<std::vector<TokenId>> slices;
    slices.reserve(starts.size());
    for (const int64_t s : starts) {
        const int64_t e = std::min(s + slice_len, len);
        slices.emplace_back(ids.begin() + static_cast<ptrdiff_t>(s),
                            ids.begin() + static_cast<ptrdiff_t>(e));
    }
    return slices;
}

std::optional<int> promotion_decision(const std::vector<int>& slice_votes) {
    if (slice_votes.empty()) throw InputError("no slice votes");
    int64_t ones = 0;
    for (const int v : slice_votes) {
        if (v != 0 && v != 1) throw InputError("slice votes must be 0 or 1");
        ones += v;
    }
    const int64_t zeros = static_cast<int64_t>(slice_votes.size()) - ones;
    if (ones > zeros && ones > 4) return 1;
    if (zeros > ones && zeros > 4) return 0;
    return std::nullopt;
}

namespace {

std::vector<int> slice_votes_for(const Parameters<float>& params,
                                 const std::vector<TokenId>& content,
                                 const SliceConfig& slice_cfg) {
    const auto slices = slice_article(content, slice_cfg);
    std::vector<int> votes;
    votes.reserve(slices.size());
    for (const auto& slice : slices) {
        const ModelInput framed =
            truncate_for_model(slice, slice_cfg.slice_len + 2, params.config.max_positions);
        votes.push_back(classify(params, framed.ids, framed.mask) > 0.5f ? 1 : 0);
    }
    return votes;
}

}  // namespace

double consistency(const Parameters<float>& params, const Article& article,
                   const TokenizerArtifacts& tok, const SliceConfig& cfg) {
    if (article.text.empty()) throw InputError("cannot score consistency of an empty article");
    const std::vector<TokenId> content = encode(article.text, tok.vocab, tok.merges);
    const std::vector<int> votes = slice_votes_for(params, content, cfg);
    int64_t ones = 0;
    for (const int v : votes) ones += v;
    const int64_t modal = std::max(ones, static_cast<int64_t>(votes.size()) - ones);
    return static_cast<double>(modal) / static_cast<double>(votes.size());
}

SelfTrainResult self_train(Parameters<float> params, const std::vector<Article>& labeled,
                           const std::vector<Article>& pool, const TokenizerArtifacts& tok,
                           const SelfTrainConfig& cfg) {
    if (pool.empty()) throw ConfigError("self-training pool is empty");
    std::unordered_set<std::string> train_ids;
    for (const Article& a : labeled) train_ids.insert(a.id);
    for (const Article& a : pool) {
        if (train_ids.count(a.id)) {
            throw InputError("pool article " + a.id + " already in the labeled set");
        }
    }

    bool has_pos = false, has_neg = false;
    std::vector<EncodedExample> examples;
    examples.reserve(labeled.size());
    for (const Article& a : labeled) {
        if (!a.label.has_value()) throw InputError("unlabeled article in labeled set: " + a.id);
        (*a.label ? has_pos : has_neg) = true;
        examples.push_back({encode(a.text, tok.vocab, tok.merges), *a.label ? 1 : 0});
    }
    if (!has_pos || !has_neg) throw ConfigError("labeled set contains a single class");

    cfg.train.validate(params.config.max_positions);
    OptimizerState<float> opt = OptimizerState<float>::shaped(params);
    int epoch = 0;
    for (int w = 0; w < cfg.warmup_epochs; ++w) {
        finetune_epoch(params, opt, examples, cfg.train, epoch++);
    }

    SelfTrainResult result{std::move(params), {}, {}};
    std::vector<size_t> remaining(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) remaining[i] = i;

    for (int e = 0; e < cfg.self_train_epochs; ++e) {
        Rng sample_rng(derive_seed(cfg.train.seed, static_cast<uint64_t>(epoch), kStreamPool));
        std::vector<size_t> sampled = remaining;
        sample_rng.shuffle(sampled);
        const size_t k = std::min<size_t>(static_cast<size_t>(cfg.pool_sample), sampled.size());
        sampled.resize(k);

        int promoted = 0;
        std::unordered_set<size_t> promoted_idx;
        for (const size_t pi : sampled) {
            const std::vector<TokenId> content = encode(pool[pi].text, tok.vocab, tok.merges);
            const std::vector<int> votes = slice_votes_for(result.params, content, cfg.slices);
            if (const auto label = promotion_decision(votes)) {
                examples.push_back({content, *label});
                promoted_idx.insert(pi);
                ++promoted;
            }
        }
        if (!promoted_idx.empty()) {
            std::vector<size_t> kept;
            kept.reserve(remaining.size() - promoted_idx.size());
            for (const size_t pi : remaining) {
                if (!promoted_idx.count(pi)) kept.push_back(pi);
            }
            remaining = std::move(kept);
        }

        finetune_epoch(result.params, opt, examples, cfg.train, epoch++);
        result.promoted_per_epoch.push_back(promoted);
        result.train_set_size.push_back(static_cast<int64_t>(examples.size()));
    }
    return result;
}

std::string ExperimentReport::to_csv() const {
    std::string out;
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    }
    return out;
}

void ExperimentReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report: " + path);
    out << to_csv();
}

ExperimentReport grid_search(const Parameters<float>& base, const DatasetSplit& split,
                             const std::vector<int>& seq_lens, const std::vector<double>& lrs,
                             const TokenizerArtifacts& tok, const TrainConfig& cfg_template,
                             int jobs) {
    if (seq_lens.empty() || lrs.empty()) throw ConfigError("grid axes must be non-empty");
    const int n_cells = static_cast<int>(seq_lens.size() * lrs.size());
    std::vector<Metrics> results(static_cast<size_t>(n_cells));

    run_cells(n_cells, jobs, [&](int cell) {
        const int seq_len = seq_lens[static_cast<size_t>(cell) / lrs.size()];
        const double lr = lrs[static_cast<size_t>(cell) % lrs.size()];
        TrainConfig cfg = cfg_template;
        cfg.max_seq_len = seq_len;
        cfg.learning_rate = lr;
        Parameters<float> tuned = finetune(base, split.train, tok, cfg);
        results[static_cast<size_t>(cell)] = evaluate(tuned, split.validation, tok, seq_len);
    });

    ExperimentReport report;
    report.header = {"max_seq_len", "learning_rate", "accuracy", "precision", "recall", "f1"};
    for (int cell = 0; cell < n_cells; ++cell) {
        const int seq_len = seq_lens[static_cast<size_t>(cell) / lrs.size()];
        const double lr = lrs[static_cast<size_t>(cell) % lrs.size()];
        std::vector<std::string> row = {std::to_string(seq_len), fmt_lr(lr)};
        for (std::string& cellv : metrics_cells(results[static_cast<size_t>(cell)])) {
            row.push_back(std::move(cellv));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport pretraining_ablation(const Parameters<float>& base,
                                      const std::vector<std::string>& unlabeled,
                                      const DatasetSplit& split, const std::vector<int>& seq_lens,
                                      const TokenizerArtifacts& tok, const TrainConfig& finetune_cfg,
                                      const TrainConfig& pretrain_cfg, int jobs) {
    if (unlabeled.empty()) throw InputError("unlabeled corpus is empty");
    if (seq_lens.empty()) throw ConfigError("seq_lens must be non-empty");

    // One-time cost, shared by every pre-trained cell.
    const Parameters<float> pretrained = pretrain(base, unlabeled, tok, pretrain_cfg);

    const int n_cells = static_cast<int>(2 * seq_lens.size());
    std::vector<Metrics> results(static_cast<size_t>(n_cells));
    run_cells(n_cells, jobs, [&](int cell) {
        const int seq_len = seq_lens[static_cast<size_t>(cell / 2)];
        const bool use_pretrained = cell % 2 == 1;
        TrainConfig cfg = finetune_cfg;
        cfg.max_seq_len = seq_len;
        Parameters<float> tuned =
            finetune(use_pretrained ? pretrained : base, split.train, tok, cfg);
        results[static_cast<size_t>(cell)] = evaluate(tuned, split.validation, tok, seq_len);
    });

    ExperimentReport report;
    report.header = {"max_seq_len", "pretraining", "accuracy", "precision", "recall", "f1"};
    for (int cell = 0; cell < n_cells; ++cell) {
        const int seq_len = seq_lens[static_cast<size_t>(cell / 2)];
        std::vector<std::string> row = {std::to_string(seq_len),
                                        cell % 2 == 1 ? "cloze" : "none"};
        for (std::string& cellv : metrics_cells(results[static_cast<size_t>(cell)])) {
            row.push_back(std::move(cellv));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

ExperimentReport permutation_ablation(const Parameters<float>& base, const DatasetSplit& split,
                                      const std::vector<int>& ngram_sizes,
                                      const TokenizerArtifacts& tok, const TrainConfig& cfg_template,
                                      int finetune_epochs, uint64_t permute_seed, int jobs) {
    if (ngram_sizes.empty()) throw ConfigError("ngram_sizes must be non-empty");
    const int n_cells = static_cast<int>(ngram_sizes.size());
    std::vector<Metrics> results(static_cast<size_t>(n_cells));

    run_cells(n_cells, jobs, [&](int cell) {
        const PermutationSpec spec{ngram_sizes[static_cast<size_t>(cell)], permute_seed};
        Parameters<float> model = base;
        if (finetune_epochs > 0) {
            TrainConfig cfg = cfg_template;
            cfg.epochs = finetune_epochs;
            cfg.permutation = spec;
            model = finetune(std::move(model), split.train, tok, cfg);
        }
        results[static_cast<size_t>(cell)] =
            evaluate(model, split.validation, tok, cfg_template.max_seq_len, spec);
    });

    ExperimentReport report;
    report.header = {"permute_ngrams", "accuracy", "precision", "recall", "f1"};
    for (int cell = 0; cell < n_cells; ++cell) {
        std::vector<std::string> row = {std::to_string(ngram_sizes[static_cast<size_t>(cell)])};
        for (std::string& cellv : metrics_cells(results[static_cast<size_t>(cell)])) {
            row.push_back(std::move(cellv));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace clint
