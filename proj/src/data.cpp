#include "clint/data.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "clint/errors.hpp"

namespace clint {

namespace {

void write_u32le(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

void write_u64le(std::ostream& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        const char b = static_cast<char>((v >> (8 * i)) & 0xff);
        out.write(&b, 1);
    }
}

uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64le(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

constexpr char kMagic[4] = {'C', 'B', 'C', 'K'};
constexpr uint32_t kVersion = 1;

}  // namespace

std::string label_source_name(LabelSource s) {
    switch (s) {
        case LabelSource::by_article: return "by_article";
        case LabelSource::by_publisher: return "by_publisher";
        case LabelSource::none: return "none";
    }
    return "none";
}

LabelSource label_source_from_name(const std::string& name) {
    if (name == "by_article") return LabelSource::by_article;
    if (name == "by_publisher") return LabelSource::by_publisher;
    if (name == "none") return LabelSource::none;
    throw DataError("unknown label_source: " + name);
}

std::vector<Article> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read corpus file: " + path);

    std::vector<Article> articles;
    std::unordered_set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }

        Article a;
        try {
            a.id = j.at("id").get<std::string>();
            a.text = j.at("text").get<std::string>();
            if (j.contains("label") && !j["label"].is_null()) a.label = j["label"].get<bool>();
            if (j.contains("label_source")) {
                a.label_source = label_source_from_name(j["label_source"].get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }

        if (a.id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty id");
        if (a.label.has_value() != (a.label_source != LabelSource::none)) {
            throw DataError("line " + std::to_string(line_no) +
                            ": label and label_source disagree for id " + a.id);
        }
        if (!seen.insert(a.id).second) {
            throw DataError("line " + std::to_string(line_no) + ": duplicate id " + a.id);
        }
        articles.push_back(std::move(a));
    }
    return articles;
}

void save_corpus(const std::vector<Article>& articles, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const Article& a : articles) {
        nlohmann::json j;
        j["id"] = a.id;
        j["text"] = a.text;
        if (a.label.has_value()) j["label"] = *a.label;
        j["label_source"] = label_source_name(a.label_source);
        out << j.dump() << '\n';
    }
}

DatasetSplit split_80_20(const std::vector<Article>& articles) {
    if (articles.size() < 5) {
        throw ConfigError("need at least 5 articles to split, got " +
                          std::to_string(articles.size()));
    }
    const size_t n_train = articles.size() * 8 / 10;
    DatasetSplit split;
    split.train.assign(articles.begin(), articles.begin() + static_cast<ptrdiff_t>(n_train));
    split.validation.assign(articles.begin() + static_cast<ptrdiff_t>(n_train), articles.end());
    return split;
}

void save_checkpoint(const Parameters<float>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint file: " + path);
    out.write(kMagic, 4);
    write_u32le(out, kVersion);

    const std::string cfg_text = config_to_kv(params.config);
    write_u32le(out, static_cast<uint32_t>(cfg_text.size()));
    out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    for_each_tensor(params, [&out](const std::string& name, const Mat<float>& m) {
        write_u32le(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32le(out, 2);
        write_u64le(out, static_cast<uint64_t>(m.rows));
        write_u64le(out, static_cast<uint64_t>(m.cols));
        for (const float v : m.data) {
            const uint32_t bits = std::bit_cast<uint32_t>(v);
            write_u32le(out, bits);
        }
    });
    if (!out) throw DataError("failed writing checkpoint file: " + path);
}

Parameters<float> load_checkpoint(const std::string& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint file: " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("not a checkpoint file: bad magic");
    }
    const uint32_t version = read_u32le(in);
    if (version != kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }

    const uint32_t cfg_len = read_u32le(in);
    std::string cfg_text(cfg_len, '\0');
    if (!in.read(cfg_text.data(), cfg_len)) throw FormatError("checkpoint truncated");
    const ModelConfig cfg = config_from_kv(cfg_text);

    if (expected) {
        const bool same_shape =
            cfg.num_layers == expected->num_layers && cfg.hidden_size == expected->hidden_size &&
            cfg.num_heads == expected->num_heads && cfg.ff_size == expected->ff_size &&
            cfg.vocab_size == expected->vocab_size && cfg.max_positions == expected->max_positions;
        if (!same_shape) {
            throw FormatError("checkpoint shape mismatch: file built for a different model");
        }
    }

    Parameters<float> params = Parameters<float>::shaped(cfg);
    for_each_tensor(params, [&in](const std::string& name, Mat<float>& m) {
        const uint32_t name_len = read_u32le(in);
        std::string got(name_len, '\0');
        if (!in.read(got.data(), name_len)) throw FormatError("checkpoint truncated");
        if (got != name) throw FormatError("unexpected tensor '" + got + "', wanted '" + name + "'");
        const uint32_t rank = read_u32le(in);
        if (rank != 2) throw FormatError("tensor " + name + " has unsupported rank");
        const uint64_t rows = read_u64le(in);
        const uint64_t cols = read_u64le(in);
        if (rows != static_cast<uint64_t>(m.rows) || cols != static_cast<uint64_t>(m.cols)) {
            throw FormatError("tensor " + name + " shape mismatch against config");
        }
        for (float& v : m.data) {
            const uint32_t bits = read_u32le(in);
            v = std::bit_cast<float>(bits);
        }
    });

    char extra;
    if (in.read(&extra, 1)) throw FormatError("trailing bytes after checkpoint payload");
    return params;
}

}  // namespace clint
