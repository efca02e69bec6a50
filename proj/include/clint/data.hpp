#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clint/nnet.hpp"

namespace clint {

enum class LabelSource { by_article, by_publisher, none };

std::string label_source_name(LabelSource s);
LabelSource label_source_from_name(const std::string& name);

struct Article {
    std::string id;
    std::string text;
    std::optional<bool> label;  // true = hyperpartisan
    LabelSource label_source = LabelSource::none;
};

// JSON-lines corpus: one object per line with id, text, label?, label_source.
std::vector<Article> load_corpus(const std::string& path);
void save_corpus(const std::vector<Article>& articles, const std::string& path);

struct DatasetSplit {
    std::vector<Article> train;
    std::vector<Article> validation;
};

// Positional split: first floor(0.8 n) articles train, remainder validation.
// No shuffling; order is file order.
DatasetSplit split_80_20(const std::vector<Article>& articles);

// Binary checkpoint: "CBCK" magic, version, embedded config, named tensors.
void save_checkpoint(const Parameters<float>& params, const std::string& path);
Parameters<float> load_checkpoint(const std::string& path,
                                  const ModelConfig* expected = nullptr);

}  // namespace clint
