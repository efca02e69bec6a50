#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clint/data.hpp"
#include "clint/nnet.hpp"
#include "clint/permute.hpp"
#include "clint/tokenizer.hpp"
#include "clint/training.hpp"

namespace clint {

struct SliceConfig {
    int num_slices = 5;
    int slice_len = 98;  // content pieces per slice
};

// Confusion counts with derived ratios; undefined ratios are absent, not 0.
struct Metrics {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    int64_t total() const { return tp + fp + fn + tn; }
    std::optional<double> accuracy() const;
    std::optional<double> precision() const;
    std::optional<double> recall() const;
    std::optional<double> f1() const;

    static Metrics from_counts(int64_t tp, int64_t fp, int64_t fn, int64_t tn);

    bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// Classifies every article (train_mode off, threshold 0.5) and tallies the
// confusion table. Articles are truncated after the optional permutation.
Metrics evaluate(const Parameters<float>& params, const std::vector<Article>& dataset,
                 const TokenizerArtifacts& tok, int max_seq_len,
                 const std::optional<PermutationSpec>& permutation = std::nullopt);

// Contiguous windows over the article's content ids. When the article tiles
// exactly, windows are consecutive from the start; otherwise start offsets are
// evenly spaced (and may overlap or repeat).
std::vector<std::vector<TokenId>> slice_article(const std::vector<TokenId>& ids,
                                                const SliceConfig& cfg);

// Fraction of slices whose prediction matches the modal prediction.
double consistency(const Parameters<float>& params, const Article& article,
                   const TokenizerArtifacts& tok, const SliceConfig& cfg);

// Pseudo-label promotion rule: strictly more than four slices must agree.
// Returns the agreed label, or nothing when the article is not promoted.
std::optional<int> promotion_decision(const std::vector<int>& slice_votes);

struct SelfTrainConfig {
    TrainConfig train;
    int warmup_epochs = 40;
    int self_train_epochs = 60;
    int pool_sample = 500;
    SliceConfig slices;
};

struct SelfTrainResult {
    Parameters<float> params;
    std::vector<int> promoted_per_epoch;
    std::vector<int64_t> train_set_size;
};

// Warmup fine-tuning, then per epoch: sample the pool, predict on slices,
// promote unanimous articles into the training set, and keep training.
// Promoted articles keep their pseudo-labels for good.
SelfTrainResult self_train(Parameters<float> params, const std::vector<Article>& labeled,
                           const std::vector<Article>& pool, const TokenizerArtifacts& tok,
                           const SelfTrainConfig& cfg);

struct ExperimentReport {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_csv() const;
    void save(const std::string& path) const;
};

// One fine-tuning run per (seq_len, lr) cell, all from the same starting
// checkpoint and seed; rows come out row-major over seq_lens x lrs.
ExperimentReport grid_search(const Parameters<float>& base, const DatasetSplit& split,
                             const std::vector<int>& seq_lens, const std::vector<double>& lrs,
                             const TokenizerArtifacts& tok, const TrainConfig& cfg_template,
                             int jobs = 1);

// For each seq_len, fine-tunes from random init and from a pre-trained
// checkpoint (pre-training runs once and is shared across seq_lens).
ExperimentReport pretraining_ablation(const Parameters<float>& base,
                                      const std::vector<std::string>& unlabeled,
                                      const DatasetSplit& split, const std::vector<int>& seq_lens,
                                      const TokenizerArtifacts& tok, const TrainConfig& finetune_cfg,
                                      const TrainConfig& pretrain_cfg, int jobs = 1);

// Per-N evaluation with permuted inputs, mirroring the shuffling ablation.
// When finetune_epochs > 0, each cell first re-fine-tunes from `base` with the
// same permutation applied to its training inputs.
ExperimentReport permutation_ablation(const Parameters<float>& base, const DatasetSplit& split,
                                      const std::vector<int>& ngram_sizes,
                                      const TokenizerArtifacts& tok, const TrainConfig& cfg_template,
                                      int finetune_epochs, uint64_t permute_seed, int jobs = 1);

}  // namespace clint
