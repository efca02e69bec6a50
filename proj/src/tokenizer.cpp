#include "clint/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "clint/errors.hpp"

namespace clint {

const char* const kWordMarker = "\xE2\x96\x81";  // U+2581

namespace {

const char* const kSpecialTokens[kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

std::string pair_key(const std::string& left, const std::string& right) {
    return left + ' ' + right;
}

// Merges every adjacent (left, right) occurrence, scanning left to right.
void apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right, const std::string& merged) {
    std::vector<std::string> out;
    out.reserve(symbols.size());
    size_t i = 0;
    while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
            out.push_back(merged);
            i += 2;
        } else {
            out.push_back(std::move(symbols[i]));
            i += 1;
        }
    }
    symbols = std::move(out);
}

}  // namespace

Vocab Vocab::with_specials() {
    Vocab v;
    for (const char* tok : kSpecialTokens) v.add(tok);
    return v;
}

TokenId Vocab::add(const std::string& token) {
    const TokenId id = static_cast<TokenId>(tokens.size());
    tokens.push_back(token);
    ids.emplace(token, id);
    return id;
}

std::optional<TokenId> Vocab::find(const std::string& token) const {
    const auto it = ids.find(token);
    if (it == ids.end()) return std::nullopt;
    return it->second;
}

void BpeMerges::add(const std::string& left, const std::string& right) {
    ranks.emplace(pair_key(left, right), static_cast<int>(pairs.size()));
    pairs.emplace_back(left, right);
}

std::optional<int> BpeMerges::rank_of(const std::string& left, const std::string& right) const {
    const auto it = ranks.find(pair_key(left, right));
    if (it == ranks.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (const char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                words.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::vector<std::string> split_code_points(const std::string& word) {
    std::vector<std::string> points;
    size_t i = 0;
    while (i < word.size()) {
        const unsigned char b = static_cast<unsigned char>(word[i]);
        size_t len = 1;
        if ((b & 0xE0) == 0xC0) len = 2;
        else if ((b & 0xF0) == 0xE0) len = 3;
        else if ((b & 0xF8) == 0xF0) len = 4;
        if (i + len > word.size()) len = 1;  // malformed tail, take the byte
        points.push_back(word.substr(i, len));
        i += len;
    }
    return points;
}

TokenizerArtifacts train_bpe(const std::vector<std::string>& corpus, int vocab_size,
                             int min_pair_freq) {
    if (min_pair_freq < 1) throw ConfigError("min_pair_freq must be positive");

    // Word frequencies in deterministic (sorted) order.
    std::map<std::string, int64_t> word_freq;
    for (const std::string& text : corpus) {
        for (std::string& w : split_words(text)) word_freq[std::move(w)] += 1;
    }
    if (word_freq.empty()) throw InputError("corpus has no words");

    std::set<std::string> base_chars;
    for (const auto& [word, freq] : word_freq) {
        for (std::string& cp : split_code_points(word)) base_chars.insert(std::move(cp));
    }
    if (vocab_size <= static_cast<int>(base_chars.size()) + kNumSpecials) {
        throw ConfigError("vocab_size too small for base characters plus specials");
    }

    Vocab vocab = Vocab::with_specials();
    vocab.add(kWordMarker);
    for (const std::string& c : base_chars) {
        if (!vocab.find(c)) vocab.add(c);
    }

    struct WordEntry {
        std::vector<std::string> symbols;
        int64_t freq;
    };
    std::vector<WordEntry> words;
    words.reserve(word_freq.size());
    for (const auto& [word, freq] : word_freq) {
        std::vector<std::string> symbols = {kWordMarker};
        for (std::string& cp : split_code_points(word)) symbols.push_back(std::move(cp));
        words.push_back({std::move(symbols), freq});
    }

    BpeMerges merges;
    while (vocab.size() < vocab_size) {
        // std::map iterates pairs in lexicographic order, so scanning with a
        // strict > keeps the lexicographically smallest pair on ties.
        std::map<std::pair<std::string, std::string>, int64_t> counts;
        for (const WordEntry& w : words) {
            for (size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                counts[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
            }
        }
        const std::pair<std::string, std::string>* best = nullptr;
        int64_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best = &pair;
                best_count = count;
            }
        }
        if (best == nullptr || best_count < min_pair_freq) break;

        const std::string merged = best->first + best->second;
        merges.add(best->first, best->second);
        vocab.add(merged);
        for (WordEntry& w : words) apply_merge(w.symbols, best->first, best->second, merged);
    }

    return {std::move(vocab), std::move(merges)};
}

std::vector<TokenId> encode(const std::string& text, const Vocab& vocab, const BpeMerges& merges) {
    std::vector<TokenId> out;
    for (const std::string& word : split_words(text)) {
        std::vector<std::string> symbols = {kWordMarker};
        for (std::string& cp : split_code_points(word)) symbols.push_back(std::move(cp));

        for (;;) {
            int best_rank = -1;
            for (size_t i = 0; i + 1 < symbols.size(); ++i) {
                const auto rank = merges.rank_of(symbols[i], symbols[i + 1]);
                if (rank && (best_rank < 0 || *rank < best_rank)) best_rank = *rank;
            }
            if (best_rank < 0) break;
            const auto& [left, right] = merges.pairs[static_cast<size_t>(best_rank)];
            apply_merge(symbols, left, right, left + right);
        }

        for (const std::string& sym : symbols) {
            const auto id = vocab.find(sym);
            out.push_back(id ? *id : kUnkId);
        }
    }
    return out;
}

std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab) {
    std::string joined;
    for (const TokenId id : ids) {
        if (id < 0 || id >= vocab.size()) {
            throw InputError("token id " + std::to_string(id) + " out of range");
        }
        joined += vocab.tokens[static_cast<size_t>(id)];
    }
    // Replace each marker with a space, then drop the leading one.
    std::string out;
    size_t i = 0;
    const std::string marker = kWordMarker;
    while (i < joined.size()) {
        if (joined.compare(i, marker.size(), marker) == 0) {
            out.push_back(' ');
            i += marker.size();
        } else {
            out.push_back(joined[i]);
            i += 1;
        }
    }
    if (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

ModelInput truncate_for_model(const std::vector<TokenId>& ids, int max_seq_len,
                              int position_capacity) {
    if (max_seq_len < 3) throw ConfigError("max_seq_len must be at least 3");
    if (max_seq_len > position_capacity) {
        throw ConfigError("max_seq_len " + std::to_string(max_seq_len) +
                          " exceeds position capacity " + std::to_string(position_capacity));
    }
    const int keep = std::min<int>(static_cast<int>(ids.size()), max_seq_len - 2);
    ModelInput in;
    in.ids.reserve(static_cast<size_t>(max_seq_len));
    in.ids.push_back(kClsId);
    in.ids.insert(in.ids.end(), ids.begin(), ids.begin() + keep);
    in.ids.push_back(kSepId);
    in.mask.assign(in.ids.size(), 1);
    in.ids.resize(static_cast<size_t>(max_seq_len), kPadId);
    in.mask.resize(static_cast<size_t>(max_seq_len), 0);
    return in;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab file: " + path);
    for (const std::string& tok : vocab.tokens) out << tok << '\n';
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw FormatError("empty token at line " + std::to_string(v.size()));
        if (v.find(line)) throw FormatError("duplicate token: " + line);
        v.add(line);
    }
    if (v.size() < kNumSpecials) throw FormatError("vocab file missing special tokens");
    for (int i = 0; i < kNumSpecials; ++i) {
        if (v.tokens[static_cast<size_t>(i)] != kSpecialTokens[i]) {
            throw FormatError("special token mismatch at id " + std::to_string(i));
        }
    }
    return v;
}

void save_merges(const BpeMerges& merges, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write merges file: " + path);
    out << "#clint merges v1\n";
    for (const auto& [left, right] : merges.pairs) out << left << ' ' << right << '\n';
}

BpeMerges load_merges(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read merges file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("#clint merges", 0) != 0) {
        throw FormatError("merges file missing version header");
    }
    BpeMerges merges;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
            throw FormatError("malformed merge at line " + std::to_string(line_no));
        }
        merges.add(line.substr(0, sp), line.substr(sp + 1));
    }
    return merges;
}

}  // namespace clint
