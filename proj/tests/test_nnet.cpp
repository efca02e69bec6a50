#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "clint/errors.hpp"
#include "clint/nnet.hpp"
#include "support.hpp"

using namespace clint;
using clint::testing::random_framed;
using clint::testing::tiny_config;

TEST_CASE("parameter count matches the closed-form shape sum") {
    const ModelConfig cfg = tiny_config(2, 32, 2, 64, 100, 64);

    // Independent route: enumerate tensors and sum their sizes.
    auto params = Parameters<float>::shaped(cfg);
    int64_t by_tensors = 0;
    for_each_tensor(params, [&by_tensors](const std::string&, const Mat<float>& m) {
        by_tensors += static_cast<int64_t>(m.size());
    });

    CHECK(by_tensors == 22566);  // summed tensor by tensor by hand
    CHECK(cfg.param_count() == by_tensors);
}

TEST_CASE("preset parameter counts sit near the published model sizes") {
    const double base = static_cast<double>(ModelConfig::bert_base().param_count());
    CHECK(base > 110e6 * 0.95);
    CHECK(base < 110e6 * 1.05);

    const double large = static_cast<double>(ModelConfig::bert_large().param_count());
    CHECK(large > 340e6 * 0.95);
    CHECK(large < 340e6 * 1.05);
}

TEST_CASE("init_params is deterministic and follows the init scheme") {
    ModelConfig cfg = tiny_config(2, 16, 4, 24, 30, 16);
    cfg.seed = 42;
    const auto a = init_params<float>(cfg);
    const auto b = init_params<float>(cfg);

    for_each_tensor_pair(const_cast<Parameters<float>&>(a), const_cast<Parameters<float>&>(b),
                         [](const std::string&, Mat<float>& x, Mat<float>& y) {
                             CHECK(x.data == y.data);
                         });

    for (const auto& l : a.layers) {
        for (const float v : l.ln1_g.data) CHECK(v == 1.0f);
        for (const float v : l.ln1_b.data) CHECK(v == 0.0f);
        for (const float v : l.bq.data) CHECK(v == 0.0f);
    }
    for (const float v : a.final_ln_g.data) CHECK(v == 1.0f);
    for (const float v : a.cls_b.data) CHECK(v == 0.0f);
    for (const float v : a.mlm_bias.data) CHECK(v == 0.0f);

    bool any_nonzero = false;
    for (const float v : a.tok_emb.data) {
        CHECK(std::abs(v) <= 0.04f);  // truncated at two standard deviations
        any_nonzero = any_nonzero || v != 0.0f;
    }
    CHECK(any_nonzero);

    ModelConfig bad = cfg;
    bad.hidden_size = 10;
    bad.num_heads = 4;
    CHECK_THROWS_AS(init_params<float>(bad), ConfigError);
}

TEST_CASE("attention rows are normalized over unmasked keys") {
    const ModelConfig cfg = tiny_config(2, 16, 4, 24, 30, 16);
    const auto params = init_params<float>(cfg);
    Rng rng(3);
    const auto in = random_framed(rng, 6, 12, cfg.vocab_size);

    const auto probs = attention_probs(params, in.ids, in.mask);
    REQUIRE(probs.size() == 2);
    for (const auto& layer : probs) {
        REQUIRE(layer.size() == 4);
        for (const auto& head : layer) {
            for (int q = 0; q < head.rows; ++q) {
                double sum = 0.0;
                for (int k = 0; k < head.cols; ++k) {
                    if (!in.mask[static_cast<size_t>(k)]) {
                        CHECK(head.at(q, k) == 0.0f);  // exact zero, not merely small
                    }
                    sum += head.at(q, k);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("PAD content never reaches real positions") {
    const ModelConfig cfg = tiny_config(2, 16, 2, 24, 30, 16);
    const auto params = init_params<float>(cfg);
    Rng rng(5);
    const auto in = random_framed(rng, 5, 12, cfg.vocab_size);

    const auto base = encode_sequence(params, in.ids, in.mask);

    auto altered = in;
    for (size_t t = 0; t < altered.ids.size(); ++t) {
        if (!altered.mask[t]) altered.ids[t] = kNumSpecials + 3;  // arbitrary real token
    }
    const auto changed = encode_sequence(params, altered.ids, altered.mask);

    for (int t = 0; t < base.rows; ++t) {
        if (!in.mask[static_cast<size_t>(t)]) continue;
        CHECK(std::memcmp(base.row(t), changed.row(t),
                          sizeof(float) * static_cast<size_t>(base.cols)) == 0);
    }
}

TEST_CASE("zeroed position embeddings make the encoder permutation-equivariant") {
    const ModelConfig cfg = tiny_config(2, 16, 2, 24, 40, 16);
    auto params = init_params<double>(cfg);
    params.pos_emb.zero();

    std::vector<TokenId> ids = {kClsId, 7, 9, 11, 13, 15, kSepId};
    const std::vector<uint8_t> mask(ids.size(), 1);
    const auto base = encode_sequence(params, ids, mask);

    // swap two interior positions
    std::vector<TokenId> permuted = ids;
    std::swap(permuted[1], permuted[4]);
    const auto swapped = encode_sequence(params, permuted, mask);

    const auto rows_close = [&](int a, int b) {
        for (int j = 0; j < base.cols; ++j) {
            CHECK(base.at(a, j) == doctest::Approx(swapped.at(b, j)).epsilon(1e-9));
        }
    };
    rows_close(0, 0);
    rows_close(1, 4);
    rows_close(4, 1);
    rows_close(2, 2);
    rows_close(6, 6);
}

TEST_CASE("encode_sequence input validation") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg);
    std::vector<TokenId> too_long(static_cast<size_t>(cfg.max_positions) + 1, kClsId);
    const std::vector<uint8_t> mask(too_long.size(), 1);
    CHECK_THROWS_AS(encode_sequence(params, too_long, mask), InputError);

    std::vector<TokenId> ids = {kClsId, 6, kSepId};
    CHECK_THROWS_AS(encode_sequence(params, ids, std::vector<uint8_t>{1, 1}), InputError);
    CHECK_THROWS_AS(encode_sequence(params, ids, std::vector<uint8_t>{0, 0, 0}), InputError);
    CHECK_THROWS_AS(encode_sequence(params, {kClsId, 99, kSepId}, std::vector<uint8_t>{1, 1, 1}),
                    InputError);
}

TEST_CASE("symmetric logits classify at exactly one half") {
    const ModelConfig cfg = tiny_config();
    const auto params = Parameters<float>::shaped(cfg);  // everything zero
    Rng rng(2);
    const auto in = random_framed(rng, 4, 8, cfg.vocab_size);
    CHECK(classify(params, in.ids, in.mask) == 0.5f);
}

TEST_CASE("classification is deterministic in eval mode") {
    const ModelConfig cfg = tiny_config(2, 16, 2, 24, 30, 16, 0.1);
    const auto params = init_params<float>(cfg);
    Rng rng(11);
    const auto in = random_framed(rng, 6, 12, cfg.vocab_size);
    const float a = classify(params, in.ids, in.mask);
    const float b = classify(params, in.ids, in.mask);
    CHECK(a == b);
    CHECK(a > 0.0f);
    CHECK(a < 1.0f);
}

TEST_CASE("uniform logits give ln(V) masked-language-model loss") {
    const ModelConfig cfg = tiny_config(1, 8, 2, 12, 100, 12);
    const auto params = Parameters<float>::shaped(cfg);  // all-zero: uniform logits
    Rng rng(0);
    std::vector<TokenId> ids = {kClsId, 7, 8, 9, kSepId};
    const std::vector<uint8_t> mask(ids.size(), 1);
    const auto result = mlm_loss(params, ids, mask, {1, 3}, {7, 9}, false, rng);
    CHECK(result.loss == doctest::Approx(std::log(100.0)).epsilon(1e-6));
}

TEST_CASE("mlm_loss validates its targets") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg);
    Rng rng(0);
    std::vector<TokenId> ids = {kClsId, 7, kSepId, kPadId};
    const std::vector<uint8_t> mask = {1, 1, 1, 0};
    CHECK_THROWS_AS(mlm_loss(params, ids, mask, {}, {}, false, rng), InputError);
    CHECK_THROWS_AS(mlm_loss(params, ids, mask, {3}, {7}, false, rng), InputError);  // PAD target
    CHECK_THROWS_AS(mlm_loss(params, ids, mask, {9}, {7}, false, rng), InputError);
}

TEST_CASE("uniform classifier loss is ln 2 and batches validate") {
    const ModelConfig cfg = tiny_config();
    const auto zero = Parameters<float>::shaped(cfg);
    Rng rng(0);
    std::vector<LabeledInput<float>> batch;
    Rng gen(4);
    for (int i = 0; i < 3; ++i) {
        const auto in = random_framed(gen, 3, 8, cfg.vocab_size);
        batch.push_back({in.ids, in.mask, i % 2});
    }
    const auto result = classification_loss(zero, batch, false, rng);
    CHECK(result.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(result.prob_positive.size() == 3);

    CHECK_THROWS_AS(classification_loss(zero, {}, false, rng), InputError);
    auto bad = batch;
    bad[0].label = 2;
    CHECK_THROWS_AS(classification_loss(zero, bad, false, rng), InputError);
}

TEST_CASE("duplicating every batch example leaves the loss unchanged") {
    const ModelConfig cfg = tiny_config(1, 8, 2, 12, 20, 10);
    const auto params = init_params<double>(cfg);
    Rng gen(9);
    std::vector<LabeledInput<double>> batch;
    for (int i = 0; i < 4; ++i) {
        const auto in = random_framed(gen, 4, 8, cfg.vocab_size);
        batch.push_back({in.ids, in.mask, i % 2});
    }
    std::vector<LabeledInput<double>> doubled;
    for (const auto& ex : batch) {
        doubled.push_back(ex);
        doubled.push_back(ex);
    }
    Rng rng(0);
    const auto one = classification_loss(params, batch, false, rng);
    const auto two = classification_loss(params, doubled, false, rng);
    CHECK(one.loss == doctest::Approx(two.loss).epsilon(1e-12));
}

TEST_CASE("dropout only acts in train mode") {
    const ModelConfig cfg = tiny_config(1, 8, 2, 12, 20, 10, 0.5);
    const auto params = init_params<float>(cfg);
    Rng gen(14);
    const auto in = random_framed(gen, 4, 8, cfg.vocab_size);

    const auto eval_a = encode_sequence(params, in.ids, in.mask);
    const auto eval_b = encode_sequence(params, in.ids, in.mask);
    CHECK(eval_a.data == eval_b.data);

    Rng r1(100), r2(100), r3(200);
    const auto train_a = encode_sequence(params, in.ids, in.mask, true, r1);
    const auto train_b = encode_sequence(params, in.ids, in.mask, true, r2);
    const auto train_c = encode_sequence(params, in.ids, in.mask, true, r3);
    CHECK(train_a.data == train_b.data);  // same stream, same draw
    CHECK(train_a.data != train_c.data);
    CHECK(train_a.data != eval_a.data);
}

TEST_CASE("model config text round-trips") {
    ModelConfig cfg = tiny_config(3, 24, 4, 48, 55, 20, 0.125);
    cfg.seed = 987654321;
    const ModelConfig back = config_from_kv(config_to_kv(cfg));
    CHECK(back == cfg);

    CHECK_THROWS_AS(config_from_kv("num_layers=2\n"), FormatError);
    CHECK_THROWS_AS(config_from_kv(config_to_kv(cfg) + "bogus=1\n"), FormatError);
}
