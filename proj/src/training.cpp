#include "clint/training.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clint/errors.hpp"
#include "clint/permute.hpp"

namespace clint {

void TrainConfig::validate(int model_max_positions) const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (mask_prob <= 0.0 || mask_prob >= 1.0) throw ConfigError("mask_prob must be in (0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (max_seq_len > model_max_positions) {
        throw ConfigError("max_seq_len " + std::to_string(max_seq_len) +
                          " exceeds model position capacity " +
                          std::to_string(model_max_positions));
    }
}

TrainConfig train_config_from_kv(const std::string& text) {
    TrainConfig cfg;
    std::optional<int> perm_n;
    std::optional<uint64_t> perm_seed;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("train config line " + std::to_string(line_no) + ": missing '='");
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "max_seq_len") cfg.max_seq_len = std::stoi(val);
            else if (key == "mask_prob") cfg.mask_prob = std::stod(val);
            else if (key == "beta1") cfg.beta1 = std::stod(val);
            else if (key == "beta2") cfg.beta2 = std::stod(val);
            else if (key == "epsilon") cfg.epsilon = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "permute_ngrams") perm_n = std::stoi(val);
            else if (key == "permute_seed") perm_seed = std::stoull(val);
            else throw FormatError("unknown train config key: " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError("bad value for " + key + ": " + val);
        } catch (const std::out_of_range&) {
            throw FormatError("bad value for " + key + ": " + val);
        }
    }
    if (perm_n) cfg.permutation = PermutationSpec{*perm_n, perm_seed.value_or(cfg.seed)};
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read train config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return train_config_from_kv(buf.str());
}

ClozeOutput cloze_mask(const std::vector<TokenId>& ids, const std::vector<uint8_t>& mask,
                       double mask_prob, int vocab_size, Rng& rng) {
    if (ids.size() != mask.size()) throw InputError("mask length does not match ids");
    std::vector<int> eligible;
    for (size_t t = 0; t < ids.size(); ++t) {
        if (mask[t] && ids[t] >= kNumSpecials) eligible.push_back(static_cast<int>(t));
    }
    if (eligible.empty()) throw InputError("no eligible positions to mask");

    std::vector<int> selected;
    while (selected.empty()) {
        for (const int t : eligible) {
            if (rng.bernoulli(mask_prob)) selected.push_back(t);
        }
    }

    ClozeOutput out;
    out.masked_ids = ids;
    for (const int t : selected) {
        out.target_positions.push_back(t);
        out.target_ids.push_back(ids[static_cast<size_t>(t)]);
        const double u = rng.uniform();
        if (u < 0.8) {
            out.masked_ids[static_cast<size_t>(t)] = kMaskId;
        } else if (u < 0.9) {
            out.masked_ids[static_cast<size_t>(t)] =
                static_cast<TokenId>(rng.uniform_int(static_cast<uint64_t>(vocab_size)));
        }
        // else: keep the original id
    }
    return out;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
    std::string out = "epoch,split,loss,accuracy\n";
    char buf[128];
    for (const TrainLogRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f\n", r.epoch, r.split.c_str(), r.loss,
                      r.accuracy);
        out += buf;
    }
    return out;
}

void save_train_log(const std::vector<TrainLogRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write training log: " + path);
    out << train_log_csv(rows);
}

Parameters<float> pretrain(Parameters<float> params, const std::vector<std::string>& corpus,
                           const TokenizerArtifacts& tok, const TrainConfig& cfg,
                           std::vector<TrainLogRow>* log) {
    if (corpus.empty()) throw InputError("pretraining corpus is empty");
    cfg.validate(params.config.max_positions);

    std::vector<std::vector<TokenId>> encoded;
    encoded.reserve(corpus.size());
    for (const std::string& text : corpus) encoded.push_back(encode(text, tok.vocab, tok.merges));

    OptimizerState<float> opt = OptimizerState<float>::shaped(params);
    const int V = params.config.vocab_size;
    const int64_t n = static_cast<int64_t>(encoded.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        int64_t loss_count = 0;
        int64_t correct = 0;
        int64_t targets = 0;

        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            const int64_t end = std::min<int64_t>(start + cfg.batch_size, n);
            GradientSet<float> batch_grads = GradientSet<float>::shaped(params.config);
            double batch_loss = 0.0;
            const float inv_b = 1.0f / static_cast<float>(end - start);

            for (int64_t i = start; i < end; ++i) {
                const ModelInput framed = truncate_for_model(encoded[static_cast<size_t>(i)],
                                                             cfg.max_seq_len,
                                                             params.config.max_positions);
                Rng cloze_rng(derive_seed(cfg.seed, epoch_example_key(epoch, i), kStreamCloze));
                const ClozeOutput cloze =
                    cloze_mask(framed.ids, framed.mask, cfg.mask_prob, V, cloze_rng);
                Rng drop_rng(derive_seed(cfg.seed, epoch_example_key(epoch, i), kStreamDropout));
                const auto result = mlm_loss(params, cloze.masked_ids, framed.mask,
                                             cloze.target_positions, cloze.target_ids, true,
                                             drop_rng);
                batch_loss += result.loss;
                add_scaled(batch_grads, result.grads, inv_b);
                correct += result.correct_targets;
                targets += static_cast<int64_t>(cloze.target_positions.size());
            }

            adam_step(params, batch_grads, opt, cfg.learning_rate, cfg.beta1, cfg.beta2,
                      cfg.epsilon);
            loss_sum += batch_loss;
            loss_count += end - start;
        }

        if (log) {
            log->push_back({epoch, "pretrain", loss_sum / static_cast<double>(loss_count),
                            targets > 0 ? static_cast<double>(correct) / static_cast<double>(targets)
                                        : 0.0});
        }
    }
    return params;
}

void finetune_epoch(Parameters<float>& params, OptimizerState<float>& opt,
                    const std::vector<EncodedExample>& examples, const TrainConfig& cfg, int epoch,
                    std::vector<TrainLogRow>* log) {
    const int64_t n = static_cast<int64_t>(examples.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch), kStreamShuffle));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t batches = 0;
    int64_t correct = 0;

    for (int64_t start = 0; start < n; start += cfg.batch_size) {
        const int64_t end = std::min<int64_t>(start + cfg.batch_size, n);
        std::vector<LabeledInput<float>> batch;
        batch.reserve(static_cast<size_t>(end - start));
        for (int64_t b = start; b < end; ++b) {
            const int64_t i = order[static_cast<size_t>(b)];
            std::vector<TokenId> content = examples[static_cast<size_t>(i)].content;
            if (cfg.permutation) {
                Rng perm_rng(derive_seed(cfg.permutation->seed, epoch_example_key(epoch, i),
                                         kStreamPermute));
                content = permute_ngrams(content, cfg.permutation->permute_ngrams, perm_rng);
            }
            const ModelInput framed =
                truncate_for_model(content, cfg.max_seq_len, params.config.max_positions);
            batch.push_back({framed.ids, framed.mask, examples[static_cast<size_t>(i)].label});
        }

        Rng drop_rng(derive_seed(cfg.seed, epoch_example_key(epoch, batches), kStreamDropout));
        const auto result = classification_loss(params, batch, true, drop_rng);
        for (size_t b = 0; b < batch.size(); ++b) {
            const int pred = result.prob_positive[b] > 0.5f ? 1 : 0;
            if (pred == batch[b].label) ++correct;
        }
        adam_step(params, result.grads, opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
        loss_sum += static_cast<double>(result.loss);
        ++batches;
    }

    if (log && batches > 0) {
        log->push_back({epoch, "train", loss_sum / static_cast<double>(batches),
                        static_cast<double>(correct) / static_cast<double>(n)});
    }
}

Parameters<float> finetune(Parameters<float> params, const std::vector<Article>& dataset,
                           const TokenizerArtifacts& tok, const TrainConfig& cfg,
                           std::vector<TrainLogRow>* log) {
    if (dataset.empty()) throw InputError("fine-tuning dataset is empty");
    cfg.validate(params.config.max_positions);

    bool has_pos = false, has_neg = false;
    for (const Article& a : dataset) {
        if (!a.label.has_value()) throw InputError("unlabeled article in fine-tuning set: " + a.id);
        (*a.label ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw ConfigError("fine-tuning set contains a single class");

    std::vector<EncodedExample> examples;
    examples.reserve(dataset.size());
    for (const Article& a : dataset) {
        examples.push_back({encode(a.text, tok.vocab, tok.merges), *a.label ? 1 : 0});
    }

    OptimizerState<float> opt = OptimizerState<float>::shaped(params);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        finetune_epoch(params, opt, examples, cfg, epoch, log);
    }
    return params;
}

}  // namespace clint
