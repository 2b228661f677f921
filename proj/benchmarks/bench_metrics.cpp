#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "langkit/eval.hpp"
#include "langkit/metrics.hpp"
#include "langkit/tok.hpp"
#include "bench_text.hpp"

using namespace langkit;

namespace {

// Hypothesis/reference pairs that overlap but are not identical: the reference
// is the hypothesis with every ninth word replaced.
std::pair<std::vector<std::string>, std::vector<std::string>> sentence_pairs(
    std::size_t count, std::size_t codepoints) {
    std::mt19937_64 rng(21);
    std::vector<std::string> hyps, refs;
    for (std::size_t i = 0; i < count; ++i) {
        auto hyp = benchtext::thai_text(rng, codepoints);
        auto words = tok::whitespace_segment(hyp);
        for (std::size_t w = 8; w < words.size(); w += 9)
            words[w] = benchtext::thai_text(rng, 6);
        std::string ref;
        for (const auto& w : words) {
            if (!ref.empty()) ref += ' ';
            ref += w;
        }
        hyps.push_back(std::move(hyp));
        refs.push_back(std::move(ref));
    }
    return {std::move(hyps), std::move(refs)};
}

void bm_bleu_corpus(benchmark::State& state) {
    auto [hyps, refs] = sentence_pairs(std::size_t(state.range(0)), 240);
    std::vector<std::vector<std::string>> h, r;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        h.push_back(tok::whitespace_segment(hyps[i]));
        r.push_back(tok::whitespace_segment(refs[i]));
    }
    for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu(h, r, true));
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(bm_bleu_corpus)->Arg(100)->Arg(1000);

void bm_chrf(benchmark::State& state) {
    std::mt19937_64 rng(22);
    auto hyp = benchtext::thai_text(rng, std::size_t(state.range(0)));
    auto ref = benchtext::thai_text(rng, std::size_t(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(metrics::chrf(hyp, ref));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(hyp.size() + ref.size()));
}
BENCHMARK(bm_chrf)->Arg(64)->Arg(512)->Arg(4096);

void bm_rouge(benchmark::State& state) {
    auto [hyps, refs] = sentence_pairs(1, std::size_t(state.range(0)));
    tok::Segmenter seg = tok::whitespace_segment;
    for (auto _ : state)
        benchmark::DoNotOptimize(metrics::rouge(hyps[0], refs[0], seg));
    state.SetBytesProcessed(int64_t(state.iterations()) *
                            int64_t(hyps[0].size() + refs[0].size()));
}
BENCHMARK(bm_rouge)->Arg(240)->Arg(2400);

void bm_qa_f1(benchmark::State& state) {
    std::mt19937_64 rng(23);
    auto pred = benchtext::thai_text(rng, 40);
    std::vector<std::string> golds;
    for (int i = 0; i < 4; ++i) golds.push_back(benchtext::thai_text(rng, 40));
    golds.push_back(pred);
    tok::Segmenter seg = tok::whitespace_segment;
    for (auto _ : state) benchmark::DoNotOptimize(metrics::qa_f1(pred, golds, seg));
}
BENCHMARK(bm_qa_f1);

void bm_perplexity(benchmark::State& state) {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> lp(-12.0, -0.01);
    std::vector<double> logprobs(std::size_t(state.range(0)));
    for (auto& v : logprobs) v = lp(rng);
    for (auto _ : state) benchmark::DoNotOptimize(eval::perplexity(logprobs));
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(bm_perplexity)->Arg(1 << 10)->Arg(1 << 20);

}  // namespace

BENCHMARK_MAIN();
