#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "langkit/tok.hpp"
#include "bench_text.hpp"

using namespace langkit;

namespace {

const std::vector<std::string>& training_docs() {
    static auto docs = benchtext::thai_docs(48, 400, 11);
    return docs;
}

const tok::SubwordVocab& trained_vocab() {
    static auto vocab = tok::train_bpe(training_docs(), 448, true);
    return vocab;
}

void bm_train_bpe(benchmark::State& state) {
    const auto& docs = training_docs();
    auto target = std::size_t(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(tok::train_bpe(docs, target, true));
    state.SetLabel(std::to_string(docs.size()) + " docs");
}
BENCHMARK(bm_train_bpe)->Arg(320)->Arg(448)->Unit(benchmark::kMillisecond);

void bm_encoder_build(benchmark::State& state) {
    const auto& vocab = trained_vocab();
    for (auto _ : state) {
        tok::Encoder enc(vocab);
        benchmark::DoNotOptimize(enc);
    }
}
BENCHMARK(bm_encoder_build);

void bm_encode(benchmark::State& state) {
    const auto& vocab = trained_vocab();
    tok::Encoder enc(vocab);
    std::mt19937_64 rng(12);
    auto text = benchtext::thai_text(rng, std::size_t(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(enc.encode(text));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(text.size()));
}
BENCHMARK(bm_encode)->Arg(1 << 10)->Arg(1 << 14);

void bm_decode(benchmark::State& state) {
    const auto& vocab = trained_vocab();
    tok::Encoder enc(vocab);
    std::mt19937_64 rng(13);
    auto ids = enc.encode(benchtext::thai_text(rng, 1 << 14));
    for (auto _ : state) benchmark::DoNotOptimize(enc.decode(ids));
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(ids.size()));
}
BENCHMARK(bm_decode);

void bm_merge_vocabs(benchmark::State& state) {
    const auto& base = trained_vocab();
    auto addon = tok::train_bpe(benchtext::thai_docs(48, 400, 14), 448, true);
    for (auto _ : state) benchmark::DoNotOptimize(tok::merge_vocabs(base, addon));
}
BENCHMARK(bm_merge_vocabs);

void bm_token_efficiency(benchmark::State& state) {
    const auto& model = trained_vocab();
    auto reference = tok::train_bpe(benchtext::thai_docs(48, 400, 15), 384, true);
    auto texts = benchtext::thai_docs(std::size_t(state.range(0)), 400, 16);
    std::size_t bytes = 0;
    for (const auto& t : texts) bytes += t.size();
    for (auto _ : state)
        benchmark::DoNotOptimize(tok::token_efficiency(model, reference, texts));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(bytes));
}
BENCHMARK(bm_token_efficiency)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_whitespace_segment(benchmark::State& state) {
    std::mt19937_64 rng(17);
    auto text = benchtext::thai_text(rng, 1 << 14);
    for (auto _ : state) benchmark::DoNotOptimize(tok::whitespace_segment(text));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(text.size()));
}
BENCHMARK(bm_whitespace_segment);

void bm_max_match_segment(benchmark::State& state) {
    // dictionary of short "words"; text stitched from them so matches dominate
    std::mt19937_64 rng(18);
    std::vector<std::string> words;
    for (int i = 0; i < 5000; ++i)
        words.push_back(benchtext::thai_text(rng, 2 + rng() % 5));
    auto lex = tok::make_lexicon(words);
    std::string text;
    for (int i = 0; i < 4000; ++i) text += words[rng() % words.size()];
    for (auto _ : state) benchmark::DoNotOptimize(tok::max_match_segment(text, lex));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(text.size()));
}
BENCHMARK(bm_max_match_segment);

}  // namespace

BENCHMARK_MAIN();
