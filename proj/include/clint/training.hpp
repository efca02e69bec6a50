#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clint/data.hpp"
#include "clint/nnet.hpp"
#include "clint/permute.hpp"
#include "clint/rng.hpp"
#include "clint/tokenizer.hpp"

namespace clint {

struct TrainConfig {
    double learning_rate = 1e-3;
    int epochs = 100;
    int batch_size = 8;
    int max_seq_len = 64;
    double mask_prob = 0.15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    uint64_t seed = 0;
    std::optional<PermutationSpec> permutation;

    void validate(int model_max_positions) const;
};

// key=value text, one field per line, mirroring the struct field names.
// Unset keys keep their defaults.
TrainConfig train_config_from_kv(const std::string& text);
TrainConfig load_train_config(const std::string& path);

// Sub-stream tags for deterministic per-(epoch, example) RNG derivation.
constexpr uint64_t kStreamCloze = 1;
constexpr uint64_t kStreamDropout = 2;
constexpr uint64_t kStreamShuffle = 3;
constexpr uint64_t kStreamPermute = 4;
constexpr uint64_t kStreamPool = 5;

inline uint64_t epoch_example_key(int epoch, int64_t example) {
    return (static_cast<uint64_t>(epoch) << 32) | static_cast<uint64_t>(example);
}

struct ClozeOutput {
    std::vector<TokenId> masked_ids;
    std::vector<int> target_positions;
    std::vector<TokenId> target_ids;  // originals at target_positions
};

// Selects each eligible (real, non-special) position with probability
// mask_prob; 80% of selections become MASK, 10% a random vocab id, 10% stay.
// Resamples if the draw selects nothing, so at least one target always exists.
ClozeOutput cloze_mask(const std::vector<TokenId>& ids, const std::vector<uint8_t>& mask,
                       double mask_prob, int vocab_size, Rng& rng);

template <typename S>
struct OptimizerState {
    std::vector<Mat<S>> first_moment;
    std::vector<Mat<S>> second_moment;
    int64_t step = 0;

    static OptimizerState shaped(const Parameters<S>& params) {
        OptimizerState st;
        for_each_tensor(params, [&st](const std::string&, const Mat<S>& m) {
            st.first_moment.emplace_back(m.rows, m.cols);
            st.second_moment.emplace_back(m.rows, m.cols);
        });
        return st;
    }
};

// Bias-corrected Adam update in place.
template <typename S>
void adam_step(Parameters<S>& params, const GradientSet<S>& grads, OptimizerState<S>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state.step += 1;
    const S b1 = S(beta1), b2 = S(beta2);
    const S corr1 = S(1) - static_cast<S>(std::pow(beta1, static_cast<double>(state.step)));
    const S corr2 = S(1) - static_cast<S>(std::pow(beta2, static_cast<double>(state.step)));
    size_t ti = 0;
    for_each_tensor_pair(params, const_cast<GradientSet<S>&>(grads),
                         [&](const std::string& name, Mat<S>& p, Mat<S>& g) {
                             if (g.rows != p.rows || g.cols != p.cols) {
                                 throw TrainingError("gradient shape mismatch for " + name);
                             }
                             if (!g.finite()) {
                                 throw TrainingError("non-finite gradient in " + name);
                             }
                             Mat<S>& m = state.first_moment[ti];
                             Mat<S>& v = state.second_moment[ti];
                             ++ti;
                             for (size_t i = 0; i < p.data.size(); ++i) {
                                 const S gi = g.data[i];
                                 m.data[i] = b1 * m.data[i] + (S(1) - b1) * gi;
                                 v.data[i] = b2 * v.data[i] + (S(1) - b2) * gi * gi;
                                 const S mhat = m.data[i] / corr1;
                                 const S vhat = v.data[i] / corr2;
                                 p.data[i] -= S(lr) * mhat / (std::sqrt(vhat) + S(eps));
                             }
                         });
}

struct TrainLogRow {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
};

std::string train_log_csv(const std::vector<TrainLogRow>& rows);
void save_train_log(const std::vector<TrainLogRow>& rows, const std::string& path);

// Cloze pre-training over an unlabeled corpus. One Adam step per batch;
// every article is re-masked fresh each epoch.
Parameters<float> pretrain(Parameters<float> params, const std::vector<std::string>& corpus,
                           const TokenizerArtifacts& tok, const TrainConfig& cfg,
                           std::vector<TrainLogRow>* log = nullptr);

// Supervised fine-tuning with per-epoch seeded shuffling. If cfg carries a
// PermutationSpec, every example is re-permuted each epoch before framing.
Parameters<float> finetune(Parameters<float> params, const std::vector<Article>& dataset,
                           const TokenizerArtifacts& tok, const TrainConfig& cfg,
                           std::vector<TrainLogRow>* log = nullptr);

struct EncodedExample {
    std::vector<TokenId> content;  // unframed word-piece ids
    int label = 0;
};

// One shuffled pass over the examples; optimizer state persists across calls.
// The epoch index seeds the shuffle/permutation/dropout streams.
void finetune_epoch(Parameters<float>& params, OptimizerState<float>& opt,
                    const std::vector<EncodedExample>& examples, const TrainConfig& cfg, int epoch,
                    std::vector<TrainLogRow>* log = nullptr);

}  // namespace clint
