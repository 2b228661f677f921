#include "langkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "langkit/error.hpp"
#include "langkit/unicode.hpp"

namespace langkit::metrics {

namespace {

using Counts = std::unordered_map<std::string, std::uint64_t>;

// Length-prefixed join so distinct n-grams can never share a key.
std::string gram_key(const std::vector<std::string>& words, std::size_t pos, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        const auto& w = words[pos + i];
        key += std::to_string(w.size());
        key += ':';
        key += w;
    }
    return key;
}

Counts word_ngrams(const std::vector<std::string>& words, int n) {
    Counts c;
    if (static_cast<int>(words.size()) >= n)
        for (std::size_t i = 0; i + n <= words.size(); ++i) ++c[gram_key(words, i, n)];
    return c;
}

std::uint64_t overlap(const Counts& a, const Counts& b) {
    std::uint64_t sum = 0;
    for (const auto& [key, count] : a) {
        auto it = b.find(key);
        if (it != b.end()) sum += std::min(count, it->second);
    }
    return sum;
}

double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

PRF prf_from(std::uint64_t matched, std::uint64_t hyp_total, std::uint64_t ref_total) {
    PRF out;
    out.precision = hyp_total ? double(matched) / double(hyp_total) : 0.0;
    out.recall = ref_total ? double(matched) / double(ref_total) : 0.0;
    out.f1 = f1_of(out.precision, out.recall);
    return out;
}

}  // namespace

BleuScore bleu(const std::vector<std::vector<std::string>>& hypotheses,
               const std::vector<std::vector<std::string>>& references,
               bool smooth, int max_n) {
    if (hypotheses.empty()) throw Error("empty-corpus", "no segments");
    if (hypotheses.size() != references.size())
        throw Error("length-mismatch",
                    std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(references.size()) + " references");
    if (max_n < 1) throw ValidationError("bad-config", "max_n must be positive");

    BleuScore score;
    std::vector<std::uint64_t> matched(max_n, 0), total(max_n, 0);
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& ref = references[i];
        score.hyp_len += hyp.size();
        score.ref_len += ref.size();
        for (int n = 1; n <= max_n; ++n) {
            auto h = word_ngrams(hyp, n);
            auto r = word_ngrams(ref, n);
            matched[n - 1] += overlap(h, r);
            if (hyp.size() >= static_cast<std::size_t>(n)) total[n - 1] += hyp.size() - n + 1;
        }
    }
    if (score.hyp_len == 0) {
        score.precisions.assign(max_n, 0.0);
        return score;  // every hypothesis empty: zero counts, score 0
    }

    score.brevity_penalty =
        score.hyp_len > score.ref_len
            ? 1.0
            : std::exp(1.0 - double(score.ref_len) / double(score.hyp_len));

    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= max_n; ++n) {
        std::uint64_t m = matched[n - 1], t = total[n - 1];
        if (smooth && n >= 2) {
            ++m;
            ++t;
        }
        double p = t ? double(m) / double(t) : 1.0;  // no n-grams at this order: neutral
        score.precisions.push_back(p);
        if (p == 0.0)
            zero = true;
        else
            log_sum += std::log(p) / max_n;
    }
    score.value = zero ? 0.0 : score.brevity_penalty * std::exp(log_sum);
    return score;
}

ChrfScore chrf(std::string_view hypothesis, std::string_view reference, int max_n,
               double beta) {
    if (max_n < 1) throw ValidationError("bad-config", "max_n must be positive");
    auto strip = [](std::string_view s) {
        std::string out;
        for (char32_t cp : uni::to_codepoints(s))
            if (!uni::is_ascii_space(cp)) uni::append_utf8(out, cp);
        return out;
    };
    std::string hyp = strip(hypothesis), ref = strip(reference);
    if (hyp.empty() && ref.empty())
        throw Error("undefined", "chrf needs a non-empty hypothesis or reference");

    auto offsets = [](const std::string& s) {
        std::vector<std::size_t> off;
        std::size_t i = 0;
        while (i < s.size()) {
            off.push_back(i);
            uni::decode_at(s, i);
        }
        off.push_back(s.size());
        return off;
    };
    auto hyp_off = offsets(hyp), ref_off = offsets(ref);
    std::size_t hyp_n = hyp_off.size() - 1, ref_n = ref_off.size() - 1;

    auto grams = [](const std::string& s, const std::vector<std::size_t>& off, int n) {
        Counts c;
        std::size_t chars = off.size() - 1;
        for (std::size_t i = 0; i + n <= chars; ++i)
            ++c[s.substr(off[i], off[i + n] - off[i])];
        return c;
    };

    // participating orders: n up to one below the longer side, order 1 always
    int top = static_cast<int>(std::max(hyp_n, ref_n)) - 1;
    top = std::clamp(top, 1, max_n);

    ChrfScore score;
    double bb = beta * beta;
    for (int n = 1; n <= top; ++n) {
        auto h = grams(hyp, hyp_off, n);
        auto r = grams(ref, ref_off, n);
        std::uint64_t o = overlap(h, r);
        std::uint64_t ht = hyp_n >= std::size_t(n) ? hyp_n - n + 1 : 0;
        std::uint64_t rt = ref_n >= std::size_t(n) ? ref_n - n + 1 : 0;
        double p = ht ? double(o) / double(ht) : 0.0;
        double q = rt ? double(o) / double(rt) : 0.0;
        double f = (p + q > 0 && bb * p + q > 0) ? (1 + bb) * p * q / (bb * p + q) : 0.0;
        score.f_by_order.push_back(f);
    }
    double sum = 0.0;
    for (double f : score.f_by_order) sum += f;
    score.value = 100.0 * sum / double(score.f_by_order.size());
    return score;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore rouge(std::string_view hypothesis, std::string_view reference,
                 const tok::Segmenter& segmenter) {
    auto hyp = segmenter(hypothesis);
    auto ref = segmenter(reference);
    RougeScore score;
    if (hyp.empty() && ref.empty()) {
        score.empty_warning = true;
        return score;
    }
    for (int n = 1; n <= 2; ++n) {
        auto h = word_ngrams(hyp, n);
        auto r = word_ngrams(ref, n);
        std::uint64_t ht = hyp.size() >= std::size_t(n) ? hyp.size() - n + 1 : 0;
        std::uint64_t rt = ref.size() >= std::size_t(n) ? ref.size() - n + 1 : 0;
        (n == 1 ? score.r1 : score.r2) = prf_from(overlap(h, r), ht, rt);
        if (n == 2 && ht == 0 && rt == 0) score.no_bigrams = true;
    }
    score.rl = prf_from(lcs_length(hyp, ref), hyp.size(), ref.size());
    return score;
}

QaF1Score qa_f1(std::string_view prediction, const std::vector<std::string>& golds,
                const tok::Segmenter& segmenter) {
    if (golds.empty()) throw Error("empty-golds", "at least one gold answer is required");
    auto pred = segmenter(prediction);
    auto pred_grams = word_ngrams(pred, 1);

    QaF1Score best;
    for (std::size_t g = 0; g < golds.size(); ++g) {
        auto gold = segmenter(golds[g]);
        PRF prf;
        if (pred.empty() && gold.empty()) {
            prf = {1.0, 1.0, 1.0};
        } else if (!pred.empty() && !gold.empty()) {
            prf = prf_from(overlap(pred_grams, word_ngrams(gold, 1)), pred.size(),
                           gold.size());
        }
        if (g == 0 || prf.f1 > best.best.f1) {
            best.best = prf;
            best.best_gold = g;
        }
    }
    best.value = best.best.f1;
    return best;
}

}  // namespace langkit::metrics
