#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clint {

using TokenId = int32_t;

constexpr TokenId kPadId = 0;
constexpr TokenId kUnkId = 1;
constexpr TokenId kClsId = 2;
constexpr TokenId kSepId = 3;
constexpr TokenId kMaskId = 4;
constexpr int kNumSpecials = 5;

// Marker token emitted in front of every word; turns back into a space on decode.
extern const char* const kWordMarker;

// BERT-style position budget; sequences never exceed this many pieces.
constexpr int kPositionCapacity = 512;

struct Vocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, TokenId> ids;

    // Fresh vocabulary holding only the five specials at ids 0-4.
    static Vocab with_specials();

    TokenId add(const std::string& token);
    std::optional<TokenId> find(const std::string& token) const;
    int size() const { return static_cast<int>(tokens.size()); }
};

struct BpeMerges {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::unordered_map<std::string, int> ranks;  // "left right" -> rank

    void add(const std::string& left, const std::string& right);
    std::optional<int> rank_of(const std::string& left, const std::string& right) const;
    int size() const { return static_cast<int>(pairs.size()); }
};

struct TokenizerArtifacts {
    Vocab vocab;
    BpeMerges merges;
};

// Learns merges greedily by pair frequency; ties break lexicographically on
// (left, right). Stops at vocab_size or when no pair reaches min_pair_freq.
TokenizerArtifacts train_bpe(const std::vector<std::string>& corpus, int vocab_size,
                             int min_pair_freq = 2);

std::vector<TokenId> encode(const std::string& text, const Vocab& vocab, const BpeMerges& merges);
std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab);

struct ModelInput {
    std::vector<TokenId> ids;     // [CLS] content... [SEP] [PAD]...
    std::vector<uint8_t> mask;    // 1 = real position, 0 = padding
};

// Frames content ids as [CLS] + first (max_seq_len - 2) pieces + [SEP],
// padded to exactly max_seq_len.
ModelInput truncate_for_model(const std::vector<TokenId>& ids, int max_seq_len,
                              int position_capacity = kPositionCapacity);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);
void save_merges(const BpeMerges& merges, const std::string& path);
BpeMerges load_merges(const std::string& path);

// Whitespace-separated words; the unit the byte-pair encoder works on.
std::vector<std::string> split_words(const std::string& text);

// UTF-8 code points of a word, one string each.
std::vector<std::string> split_code_points(const std::string& word);

}  // namespace clint
