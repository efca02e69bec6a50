#pragma once

#include <vector>

#include "clint/nnet.hpp"
#include "clint/rng.hpp"
#include "clint/tokenizer.hpp"

namespace clint::testing {

inline ModelConfig tiny_config(int layers = 1, int hidden = 8, int heads = 2, int ff = 12,
                               int vocab = 17, int positions = 12, double dropout = 0.0,
                               uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.num_layers = layers;
    cfg.hidden_size = hidden;
    cfg.num_heads = heads;
    cfg.ff_size = ff;
    cfg.vocab_size = vocab;
    cfg.max_positions = positions;
    cfg.dropout = dropout;
    cfg.seed = seed;
    return cfg;
}

struct FramedInput {
    std::vector<TokenId> ids;
    std::vector<uint8_t> mask;
};

// CLS + random content + SEP, padded with PAD to total_len.
inline FramedInput random_framed(Rng& rng, int content_len, int total_len, int vocab_size) {
    FramedInput in;
    in.ids.push_back(kClsId);
    for (int t = 0; t < content_len; ++t) {
        in.ids.push_back(static_cast<TokenId>(
            kNumSpecials + rng.uniform_int(static_cast<uint64_t>(vocab_size - kNumSpecials))));
    }
    in.ids.push_back(kSepId);
    in.mask.assign(in.ids.size(), 1);
    in.ids.resize(static_cast<size_t>(total_len), kPadId);
    in.mask.resize(static_cast<size_t>(total_len), 0);
    return in;
}

}  // namespace clint::testing
