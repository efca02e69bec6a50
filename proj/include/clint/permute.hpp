#pragma once

#include <cstdint>
#include <vector>

#include "clint/rng.hpp"
#include "clint/tokenizer.hpp"

namespace clint {

// Shuffling granularity for the word-order ablation: the sequence is cut into
// chunks of permute_ngrams pieces whose order is randomized.
struct PermutationSpec {
    int permute_ngrams = 1;
    uint64_t seed = 0;
};

// Splits ids into consecutive chunks of n (last chunk may be shorter), then
// Fisher-Yates shuffles the chunk order. Chunk interiors are preserved.
// Applied to unframed content ids, so CLS/SEP are never moved.
std::vector<TokenId> permute_ngrams(const std::vector<TokenId>& ids, int n, Rng& rng);

}  // namespace clint
