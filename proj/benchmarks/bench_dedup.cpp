#include <random>
#include <string>
#include <utility>
#include <vector>

#include <benchmark/benchmark.h>

#include "langkit/dedup.hpp"
#include "bench_text.hpp"

using namespace langkit;

namespace {

const dedup::LshParams kParams{16, 8};

// Corpus of `count` documents with every eighth one duplicated near-verbatim,
// so the clustering paths below do real merge work.
std::vector<std::pair<std::string, dedup::ShingleSet>> shingled_corpus(std::size_t count) {
    std::mt19937_64 rng(7);
    std::vector<std::pair<std::string, dedup::ShingleSet>> sets;
    sets.reserve(count);
    std::string prev;
    for (std::size_t i = 0; i < count; ++i) {
        std::string text;
        if (i % 8 == 7) {
            text = prev;
            text += benchtext::thai_text(rng, 30);  // ~3% tail edit
        } else {
            text = benchtext::thai_text(rng, 1000);
            prev = text;
        }
        sets.emplace_back("doc" + std::to_string(i), dedup::shingle(text, 5, 1));
    }
    return sets;
}

std::vector<std::pair<std::string, dedup::MinHashSignature>> signed_corpus(std::size_t count) {
    auto sets = shingled_corpus(count);
    std::vector<std::pair<std::string, dedup::MinHashSignature>> sigs;
    sigs.reserve(sets.size());
    for (auto& [id, s] : sets)
        sigs.emplace_back(id, dedup::minhash_signature(s, 128, 42));
    return sigs;
}

void bm_shingle(benchmark::State& state) {
    std::mt19937_64 rng(1);
    auto text = benchtext::thai_text(rng, std::size_t(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(dedup::shingle(text, 5, 1));
    state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(text.size()));
}
BENCHMARK(bm_shingle)->Arg(1 << 10)->Arg(1 << 13)->Arg(1 << 16);

void bm_minhash_signature(benchmark::State& state) {
    std::mt19937_64 rng(2);
    auto set = dedup::shingle(benchtext::thai_text(rng, 4096), 5, 1);
    auto k = std::uint32_t(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(dedup::minhash_signature(set, k, 42));
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(set.hashes.size()));
}
BENCHMARK(bm_minhash_signature)->Arg(64)->Arg(128)->Arg(256);

void bm_estimate_jaccard(benchmark::State& state) {
    std::mt19937_64 rng(3);
    auto a = dedup::minhash_signature(dedup::shingle(benchtext::thai_text(rng, 4096), 5, 1),
                                      128, 42);
    auto b = dedup::minhash_signature(dedup::shingle(benchtext::thai_text(rng, 4096), 5, 1),
                                      128, 42);
    for (auto _ : state) benchmark::DoNotOptimize(dedup::estimate_jaccard(a, b));
}
BENCHMARK(bm_estimate_jaccard);

void bm_lsh_band_keys(benchmark::State& state) {
    std::mt19937_64 rng(4);
    auto sig = dedup::minhash_signature(dedup::shingle(benchtext::thai_text(rng, 4096), 5, 1),
                                        128, 42);
    for (auto _ : state) benchmark::DoNotOptimize(dedup::lsh_band_keys(sig, kParams));
}
BENCHMARK(bm_lsh_band_keys);

void bm_find_duplicate_clusters(benchmark::State& state) {
    auto sigs = signed_corpus(std::size_t(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(dedup::find_duplicate_clusters(sigs, kParams, 0.8));
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(bm_find_duplicate_clusters)->Arg(256)->Arg(1024)->Arg(4096)
    ->Unit(benchmark::kMillisecond);

// The all-pairs oracle, for sizing how far it stays usable.
void bm_brute_force_clusters(benchmark::State& state) {
    auto sets = shingled_corpus(std::size_t(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(dedup::brute_force_clusters(sets, 0.8));
    state.SetItemsProcessed(int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(bm_brute_force_clusters)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
