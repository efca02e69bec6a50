#include "clint/nnet.hpp"

#include <cstdio>
#include <sstream>

namespace clint {

void ModelConfig::validate() const {
    if (num_layers <= 0 || hidden_size <= 0 || num_heads <= 0 || ff_size <= 0 ||
        vocab_size <= 0 || max_positions <= 0) {
        throw ConfigError("all model dimensions must be positive");
    }
    if (hidden_size % num_heads != 0) {
        throw ConfigError("hidden_size " + std::to_string(hidden_size) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

int64_t ModelConfig::param_count() const {
    const int64_t H = hidden_size, F = ff_size, V = vocab_size, P = max_positions;
    const int64_t attn = 4 * (H * H + H);
    const int64_t ffn = H * F + F + F * H + H;
    const int64_t norms = 4 * H;
    return V * H + P * H + num_layers * (attn + ffn + norms) + 2 * H + (2 * H + 2) + V;
}

ModelConfig ModelConfig::bert_base() {
    ModelConfig c;
    c.num_layers = 12;
    c.hidden_size = 768;
    c.num_heads = 12;
    c.ff_size = 3072;
    c.vocab_size = 30522;
    c.max_positions = 512;
    c.dropout = 0.1;
    return c;
}

ModelConfig ModelConfig::bert_large() {
    ModelConfig c;
    c.num_layers = 24;
    c.hidden_size = 1024;
    c.num_heads = 16;
    c.ff_size = 4096;
    c.vocab_size = 30522;
    c.max_positions = 512;
    c.dropout = 0.1;
    return c;
}

std::string config_to_kv(const ModelConfig& cfg) {
    char drop[64];
    std::snprintf(drop, sizeof(drop), "%.17g", cfg.dropout);
    std::ostringstream out;
    out << "num_layers=" << cfg.num_layers << '\n'
        << "hidden_size=" << cfg.hidden_size << '\n'
        << "num_heads=" << cfg.num_heads << '\n'
        << "ff_size=" << cfg.ff_size << '\n'
        << "vocab_size=" << cfg.vocab_size << '\n'
        << "max_positions=" << cfg.max_positions << '\n'
        << "dropout=" << drop << '\n'
        << "seed=" << cfg.seed << '\n';
    return out.str();
}

ModelConfig config_from_kv(const std::string& text) {
    ModelConfig cfg;
    int seen = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "num_layers") cfg.num_layers = std::stoi(val);
            else if (key == "hidden_size") cfg.hidden_size = std::stoi(val);
            else if (key == "num_heads") cfg.num_heads = std::stoi(val);
            else if (key == "ff_size") cfg.ff_size = std::stoi(val);
            else if (key == "vocab_size") cfg.vocab_size = std::stoi(val);
            else if (key == "max_positions") cfg.max_positions = std::stoi(val);
            else if (key == "dropout") cfg.dropout = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else throw FormatError("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError("bad value for config key " + key + ": " + val);
        } catch (const std::out_of_range&) {
            throw FormatError("bad value for config key " + key + ": " + val);
        }
        ++seen;
    }
    if (seen < 8) throw FormatError("config text missing keys");
    cfg.validate();
    return cfg;
}

}  // namespace clint
