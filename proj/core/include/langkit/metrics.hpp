#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "langkit/tok.hpp"

namespace langkit::metrics {

// Corpus-level BLEU over pre-segmented token sequences, one reference per
// hypothesis. Clipped n-gram matches are pooled across segments before the
// precisions are formed; the geometric mean uses fixed 1/max_n weights, with
// orders that have no hypothesis n-grams contributing neutrally. Any genuinely
// zero precision sends the score to 0 unless `smooth` adds one to the n >= 2
// match and total counts.
struct BleuScore {
    double value = 0.0;
    double brevity_penalty = 0.0;
    std::vector<double> precisions;
    std::uint64_t hyp_len = 0;
    std::uint64_t ref_len = 0;
};

BleuScore bleu(const std::vector<std::vector<std::string>>& hypotheses,
               const std::vector<std::vector<std::string>>& references,
               bool smooth = false, int max_n = 4);

// Character n-gram F-score, whitespace stripped, reported on a 0..100 scale.
// Orders up to max(|hyp|, |ref|) - 1 codepoints participate (order 1 always
// does); each contributes an F_beta from multiset precision and recall and the
// score is their unweighted mean.
struct ChrfScore {
    double value = 0.0;
    std::vector<double> f_by_order;
};

ChrfScore chrf(std::string_view hypothesis, std::string_view reference,
               int max_n = 6, double beta = 2.0);

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// ROUGE-1/2 from unigram and bigram multiset overlap, ROUGE-L from the longest
// common subsequence of the segmented word lists.
struct RougeScore {
    PRF r1, r2, rl;
    bool empty_warning = false;  // both segmentations came back empty
    bool no_bigrams = false;     // neither side has two words, so R2 is 0 by fiat
};

RougeScore rouge(std::string_view hypothesis, std::string_view reference,
                 const tok::Segmenter& segmenter);

// Word-overlap F1 against the best-matching gold answer.
struct QaF1Score {
    double value = 0.0;  // F1 of the best gold
    PRF best;
    std::size_t best_gold = 0;
};

QaF1Score qa_f1(std::string_view prediction, const std::vector<std::string>& golds,
                const tok::Segmenter& segmenter);

// Longest common subsequence length of two word lists.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace langkit::metrics
