#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "clint/errors.hpp"
#include "clint/experiments.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace clint;
using clint::testing::keyword_articles;
using clint::testing::tiny_config;

namespace {

// All-zero model with a biased classifier head: hidden states collapse to
// zero, so the logits equal cls_b and every input gets the same prediction.
Parameters<float> constant_classifier(const ModelConfig& cfg, int predicted_class) {
    auto params = Parameters<float>::shaped(cfg);
    params.cls_b.data[static_cast<size_t>(predicted_class)] = 5.0f;
    return params;
}

bool chunks_contiguous(const std::vector<TokenId>& input, const std::vector<TokenId>& output,
                       int n) {
    // every input chunk must appear contiguously, in order, in the output
    for (size_t s = 0; s < input.size(); s += static_cast<size_t>(n)) {
        const size_t e = std::min(s + static_cast<size_t>(n), input.size());
        const auto it = std::search(output.begin(), output.end(), input.begin() + s,
                                    input.begin() + e);
        if (it == output.end()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("hand-counted confusion table") {
    const Metrics m = Metrics::from_counts(3, 1, 1, 5);
    CHECK(m.precision().value() == doctest::Approx(0.75));
    CHECK(m.recall().value() == doctest::Approx(0.75));
    CHECK(m.accuracy().value() == doctest::Approx(0.8));
    CHECK(m.f1().value() == doctest::Approx(0.75));
}

TEST_CASE("the published precision and recall combine to the published F1") {
    // smallest integer confusion table with precision exactly 0.832 and
    // recall exactly 0.678: tp = 104 * 339
    const Metrics m = Metrics::from_counts(35256, 7119, 16744, 40000);
    CHECK(m.precision().value() == doctest::Approx(0.832).epsilon(1e-12));
    CHECK(m.recall().value() == doctest::Approx(0.678).epsilon(1e-12));
    CHECK(std::abs(m.f1().value() - 0.747) < 0.0005);
}

TEST_CASE("perfect predictions score one") {
    const Metrics m = compute_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
    CHECK(m.accuracy().value() == 1.0);
    CHECK(m.f1().value() == 1.0);
}

TEST_CASE("undefined ratios are absent rather than zero") {
    const Metrics no_positive_preds = compute_metrics({0, 0}, {1, 0});
    CHECK(!no_positive_preds.precision().has_value());
    CHECK(no_positive_preds.recall().has_value());
    CHECK(!no_positive_preds.f1().has_value());

    const Metrics no_positive_labels = compute_metrics({0, 0}, {0, 0});
    CHECK(!no_positive_labels.recall().has_value());

    // precision and recall both zero: F1 is 0/0, absent
    const Metrics all_wrong = Metrics::from_counts(0, 3, 3, 0);
    CHECK(all_wrong.precision().value() == 0.0);
    CHECK(all_wrong.recall().value() == 0.0);
    CHECK(!all_wrong.f1().has_value());
}

TEST_CASE("metric identities hold on random tables") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto tp = static_cast<int64_t>(rng.uniform_int(40));
        const auto fp = static_cast<int64_t>(rng.uniform_int(40));
        const auto fn = static_cast<int64_t>(rng.uniform_int(40));
        const auto tn = static_cast<int64_t>(rng.uniform_int(40));
        if (tp + fp + fn + tn == 0) continue;
        const Metrics m = Metrics::from_counts(tp, fp, fn, tn);
        CHECK(m.accuracy().value() ==
              static_cast<double>(tp + tn) / static_cast<double>(tp + fp + fn + tn));
        if (tp + fp > 0) {
            CHECK(m.precision().value() == static_cast<double>(tp) / static_cast<double>(tp + fp));
        }
        if (tp + fn > 0) {
            CHECK(m.recall().value() == static_cast<double>(tp) / static_cast<double>(tp + fn));
        }
        if (m.f1()) {
            const double p = m.precision().value(), r = m.recall().value();
            CHECK(m.f1().value() == 2.0 * p * r / (p + r));
        }
    }
}

TEST_CASE("compute_metrics validates its inputs") {
    CHECK_THROWS_AS(compute_metrics({1}, {1, 0}), InputError);
    CHECK_THROWS_AS(compute_metrics({}, {}), InputError);
    CHECK_THROWS_AS(compute_metrics({2}, {1}), InputError);
    CHECK_THROWS_AS(Metrics::from_counts(-1, 0, 0, 0), InputError);
}

TEST_CASE("a majority-class model scores the class share") {
    const auto tok = train_bpe({"p q r s u v w y c d e f g h"}, 40, 1);
    const ModelConfig cfg = tiny_config(1, 8, 2, 12, tok.vocab.size(), 16);
    const auto params = constant_classifier(cfg, 0);  // always predicts "not hyperpartisan"

    // 72% negative validation set
    std::vector<Article> articles;
    for (int i = 0; i < 100; ++i) {
        articles.push_back({"v" + std::to_string(i), i % 2 ? "p q r" : "u v w", i >= 72,
                            LabelSource::by_article});
    }
    const Metrics m = evaluate(params, articles, tok, 8);
    CHECK(m.accuracy().value() == doctest::Approx(0.72));

    const Metrics again = evaluate(params, articles, tok, 8);
    CHECK(m == again);
}

TEST_CASE("evaluate rejects unlabeled articles") {
    const auto tok = train_bpe({"p q"}, 16, 1);
    const auto params = constant_classifier(tiny_config(1, 8, 2, 12, tok.vocab.size(), 16), 0);
    std::vector<Article> articles = {{"u1", "p q", std::nullopt, LabelSource::none}};
    CHECK_THROWS_AS(evaluate(params, articles, tok, 8), InputError);
}

TEST_CASE("evaluation with a permutation spanning whole articles changes nothing") {
    const auto tok = train_bpe({"p q r s u v w y"}, 32, 1);
    const ModelConfig cfg = tiny_config(2, 16, 2, 24, tok.vocab.size(), 16, 0.0, 3);
    const auto params = init_params<float>(cfg);
    const auto articles = keyword_articles(20, 3);

    const Metrics plain = evaluate(params, articles, tok, 14);
    const Metrics huge_n = evaluate(params, articles, tok, 14, PermutationSpec{100000, 9});
    CHECK(plain == huge_n);
}

TEST_CASE("permute_ngrams with one chunk is the identity") {
    Rng rng(0);
    const std::vector<TokenId> ids = {1, 2, 3, 4, 5, 6};
    CHECK(permute_ngrams(ids, 6, rng) == ids);
    CHECK(permute_ngrams(ids, 10, rng) == ids);
    CHECK(permute_ngrams({}, 3, rng).empty());
}

TEST_CASE("piece-level permutation preserves the multiset") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TokenId> ids;
        const int len = 1 + static_cast<int>(rng.uniform_int(40));
        for (int i = 0; i < len; ++i) ids.push_back(static_cast<TokenId>(rng.uniform_int(9)));
        const int n = 1 + static_cast<int>(rng.uniform_int(8));

        const auto out = permute_ngrams(ids, n, rng);
        auto a = ids, b = out;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
        CHECK(chunks_contiguous(ids, out, n));
    }
}

TEST_CASE("two-piece chunks stay intact and cover all chunk orders") {
    const std::vector<TokenId> ids = {1, 2, 3, 4, 5, 6};
    // oracle: enumerate the six orderings of chunks [1,2],[3,4],[5,6]
    std::vector<std::vector<TokenId>> chunks = {{1, 2}, {3, 4}, {5, 6}};
    std::sort(chunks.begin(), chunks.end());
    std::set<std::vector<TokenId>> valid;
    do {
        std::vector<TokenId> seq;
        for (const auto& c : chunks) seq.insert(seq.end(), c.begin(), c.end());
        valid.insert(seq);
    } while (std::next_permutation(chunks.begin(), chunks.end()));
    REQUIRE(valid.size() == 6);

    std::set<std::vector<TokenId>> seen;
    for (int draw = 0; draw < 200; ++draw) {
        Rng rng(static_cast<uint64_t>(draw));
        const auto out = permute_ngrams(ids, 2, rng);
        CHECK(valid.count(out) == 1);
        seen.insert(out);
    }
    CHECK(seen.size() == 6);  // the shuffle actually reaches every ordering
}

TEST_CASE("exact tiling slices are consecutive windows") {
    std::vector<TokenId> ids(2500);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
    const auto slices = slice_article(ids, {5, 500});
    REQUIRE(slices.size() == 5);
    for (int s = 0; s < 5; ++s) {
        REQUIRE(slices[static_cast<size_t>(s)].size() == 500);
        CHECK(slices[static_cast<size_t>(s)].front() == s * 500);
        CHECK(slices[static_cast<size_t>(s)].back() == s * 500 + 499);
    }
}

TEST_CASE("short articles get evenly spaced overlapping slices") {
    std::vector<TokenId> ids(600);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
    const auto slices = slice_article(ids, {5, 500});
    REQUIRE(slices.size() == 5);
    const std::vector<TokenId> expected_starts = {0, 25, 50, 75, 100};
    for (size_t s = 0; s < 5; ++s) {
        CHECK(slices[s].size() == 500);
        CHECK(slices[s].front() == expected_starts[s]);
    }
}

TEST_CASE("articles shorter than a slice repeat whole") {
    std::vector<TokenId> ids(50, 7);
    const auto slices = slice_article(ids, {5, 500});
    REQUIRE(slices.size() == 5);
    for (const auto& s : slices) CHECK(s == ids);
    CHECK_THROWS_AS(slice_article({}, {5, 500}), InputError);
}

TEST_CASE("slices are always contiguous windows no longer than slice_len") {
    Rng rng(8);
    for (int trial = 0; trial < 60; ++trial) {
        const int len = 1 + static_cast<int>(rng.uniform_int(400));
        std::vector<TokenId> ids(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i) ids[static_cast<size_t>(i)] = i;
        SliceConfig cfg{1 + static_cast<int>(rng.uniform_int(7)),
                        1 + static_cast<int>(rng.uniform_int(80))};
        const auto slices = slice_article(ids, cfg);
        CHECK(slices.size() == static_cast<size_t>(cfg.num_slices));
        for (const auto& s : slices) {
            REQUIRE(!s.empty());
            CHECK(s.size() <= static_cast<size_t>(cfg.slice_len));
            for (size_t i = 1; i < s.size(); ++i) CHECK(s[i] == s[i - 1] + 1);  // contiguous
        }
    }
}

TEST_CASE("promotion requires strictly more than four agreeing slices") {
    // exhaustive over all 2^5 vote patterns
    for (int pattern = 0; pattern < 32; ++pattern) {
        std::vector<int> votes;
        int ones = 0;
        for (int s = 0; s < 5; ++s) {
            const int v = (pattern >> s) & 1;
            votes.push_back(v);
            ones += v;
        }
        const auto decision = promotion_decision(votes);
        if (ones == 5) {
            REQUIRE(decision.has_value());
            CHECK(*decision == 1);
        } else if (ones == 0) {
            REQUIRE(decision.has_value());
            CHECK(*decision == 0);
        } else {
            CHECK(!decision.has_value());  // 4 of 5 agreeing is not enough
        }
    }
    CHECK_THROWS_AS(promotion_decision({}), InputError);
    CHECK_THROWS_AS(promotion_decision({2, 1, 1, 1, 1}), InputError);
}

TEST_CASE("consistency counts the modal vote share") {
    // classifier separating p-articles from u-articles
    const auto labeled = keyword_articles(32, 41);
    const auto tok = train_bpe(clint::testing::all_texts(labeled), 48, 1);
    ModelConfig cfg = tiny_config(2, 32, 4, 64, tok.vocab.size(), 16, 0.0, 19);
    auto params = init_params<float>(cfg);
    TrainConfig tc;
    tc.epochs = 120;
    tc.learning_rate = 2e-3;
    tc.max_seq_len = 10;
    params = finetune(std::move(params), labeled, tok, tc);
    REQUIRE(evaluate(params, labeled, tok, 10).accuracy().value() == 1.0);

    // 24 positive-looking pieces then 16 negative-looking: slices split 3 / 2
    std::string text;
    for (int i = 0; i < 24; ++i) text += i % 2 ? " q" : "p";
    for (int i = 0; i < 16; ++i) text += i % 2 ? " v" : " u";
    const Article mixed{"mix", text, true, LabelSource::by_article};

    const SliceConfig slice_cfg{5, 8};
    const double agreement = consistency(params, mixed, tok, slice_cfg);

    // independent route: classify each slice by hand and count the modal share
    const auto content = encode(mixed.text, tok.vocab, tok.merges);
    const auto slices = slice_article(content, slice_cfg);
    int64_t ones = 0;
    for (const auto& s : slices) {
        const auto framed = truncate_for_model(s, 10, cfg.max_positions);
        ones += classify(params, framed.ids, framed.mask) > 0.5f ? 1 : 0;
    }
    const double expected =
        static_cast<double>(std::max(ones, static_cast<int64_t>(slices.size()) - ones)) /
        static_cast<double>(slices.size());
    CHECK(agreement == expected);
    CHECK(agreement == doctest::Approx(0.6));  // votes split 3 against 2

    // a constant classifier is perfectly consistent on every article
    const auto constant = constant_classifier(cfg, 1);
    CHECK(consistency(constant, mixed, tok, slice_cfg) == 1.0);
}

TEST_CASE("self-training with a constant classifier promotes every sampled article") {
    const auto labeled = keyword_articles(8, 51);
    const auto tok = train_bpe(clint::testing::all_texts(labeled), 48, 1);
    const ModelConfig cfg = tiny_config(1, 8, 2, 12, tok.vocab.size(), 16);
    const auto params = constant_classifier(cfg, 1);

    std::vector<Article> pool;
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        pool.push_back({"pool" + std::to_string(i), clint::testing::keyword_text(i % 2, rng),
                        std::nullopt, LabelSource::none});
    }

    SelfTrainConfig cfg_st;
    cfg_st.train.epochs = 0;
    cfg_st.train.learning_rate = 1e-6;  // keep the head effectively constant
    cfg_st.train.max_seq_len = 16;
    cfg_st.warmup_epochs = 0;
    cfg_st.self_train_epochs = 2;
    cfg_st.pool_sample = 10;
    cfg_st.slices = {5, 14};

    const auto result = self_train(params, labeled, pool, tok, cfg_st);
    REQUIRE(result.promoted_per_epoch.size() == 2);
    CHECK(result.promoted_per_epoch[0] == 10);  // every sampled article promoted
    CHECK(result.promoted_per_epoch[1] == 10);  // pool exhausted, no duplicates
    CHECK(result.train_set_size[0] == 18);
    CHECK(result.train_set_size[1] == 28);
}

TEST_CASE("self-training validates its pools") {
    const auto labeled = keyword_articles(6, 61);
    const auto tok = train_bpe(clint::testing::all_texts(labeled), 48, 1);
    const auto params = constant_classifier(tiny_config(1, 8, 2, 12, tok.vocab.size(), 16), 1);

    SelfTrainConfig cfg_st;
    cfg_st.train.max_seq_len = 14;
    CHECK_THROWS_AS(self_train(params, labeled, {}, tok, cfg_st), ConfigError);

    std::vector<Article> overlapping = {{labeled[0].id, "p q", std::nullopt, LabelSource::none}};
    CHECK_THROWS_AS(self_train(params, labeled, overlapping, tok, cfg_st), InputError);
}

TEST_CASE("a one-by-one grid equals a single fine-tune and evaluate run") {
    const auto articles = keyword_articles(20, 71);
    const auto tok = train_bpe(clint::testing::all_texts(articles), 48, 1);
    const ModelConfig cfg = tiny_config(1, 16, 2, 24, tok.vocab.size(), 16, 0.1, 5);
    const auto base = init_params<float>(cfg);
    const auto split = split_80_20(articles);

    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 7;

    const auto report = grid_search(base, split, {12}, {1e-3}, tok, tc);
    REQUIRE(report.rows.size() == 1);

    TrainConfig manual = tc;
    manual.max_seq_len = 12;
    manual.learning_rate = 1e-3;
    const auto tuned = finetune(base, split.train, tok, manual);
    const Metrics m = evaluate(tuned, split.validation, tok, 12);

    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", m.accuracy().value());
    CHECK(report.rows[0][0] == "12");
    CHECK(report.rows[0][1] == "0.001");
    CHECK(report.rows[0][2] == acc);
}

TEST_CASE("grids are deterministic, ordered row-major, and parallel-safe") {
    const auto articles = keyword_articles(20, 81);
    const auto tok = train_bpe(clint::testing::all_texts(articles), 48, 1);
    const ModelConfig cfg = tiny_config(1, 16, 2, 24, tok.vocab.size(), 16, 0.1, 6);
    const auto base = init_params<float>(cfg);
    const auto split = split_80_20(articles);

    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 3;

    const auto a = grid_search(base, split, {10, 12}, {1e-3, 5e-4}, tok, tc, 1);
    const auto b = grid_search(base, split, {10, 12}, {1e-3, 5e-4}, tok, tc, 4);
    CHECK(a.to_csv() == b.to_csv());

    REQUIRE(a.rows.size() == 4);
    CHECK(a.header == std::vector<std::string>{"max_seq_len", "learning_rate", "accuracy",
                                               "precision", "recall", "f1"});
    CHECK(a.rows[0][0] == "10");
    CHECK(a.rows[0][1] == "0.001");
    CHECK(a.rows[1][0] == "10");
    CHECK(a.rows[1][1] == "0.0005");
    CHECK(a.rows[2][0] == "12");
    CHECK(a.rows[3][1] == "0.0005");
    for (const auto& row : a.rows) {
        const double acc = std::stod(row[2]);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
    CHECK(a.to_csv().rfind("max_seq_len,learning_rate,accuracy,precision,recall,f1\n", 0) == 0);
}

TEST_CASE("the pre-training ablation produces two cells per sequence length") {
    const auto articles = keyword_articles(20, 91);
    const auto tok = train_bpe(clint::testing::all_texts(articles), 48, 1);
    const ModelConfig cfg = tiny_config(1, 16, 2, 24, tok.vocab.size(), 16, 0.0, 8);
    const auto base = init_params<float>(cfg);
    const auto split = split_80_20(articles);

    TrainConfig ft;
    ft.epochs = 2;
    TrainConfig pre;
    pre.epochs = 1;
    pre.max_seq_len = 14;

    const auto report = pretraining_ablation(base, clint::testing::keyword_corpus(10, 5), split,
                                             {10, 14}, tok, ft, pre, 2);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.header[1] == "pretraining");
    CHECK(report.rows[0][1] == "none");
    CHECK(report.rows[1][1] == "cloze");
    CHECK(report.rows[2][0] == "14");
}

TEST_CASE("permutation ablation rows mirror the requested granularities") {
    const auto articles = keyword_articles(20, 101);
    const auto tok = train_bpe(clint::testing::all_texts(articles), 48, 1);
    const ModelConfig cfg = tiny_config(1, 16, 2, 24, tok.vocab.size(), 16, 0.0, 9);
    const auto base = init_params<float>(cfg);
    DatasetSplit split;
    split.validation = articles;

    TrainConfig tc;
    tc.max_seq_len = 14;
    const auto report = permutation_ablation(base, split, {1, 2, 4, 1000}, tok, tc, 0, 77, 2);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.header[0] == "permute_ngrams");
    CHECK(report.rows[0][0] == "1");
    CHECK(report.rows[3][0] == "1000");

    // N far beyond article length is the identity permutation
    const Metrics plain = evaluate(base, articles, tok, tc.max_seq_len);
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", plain.accuracy().value());
    CHECK(report.rows[3][1] == acc);
}
