#include "langkit/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "jsonio.hpp"
#include "langkit/error.hpp"

namespace langkit::eval {

namespace {

using jsonio::ojson;

// Single left-to-right pass, so substituted values are never re-scanned even
// when a model response happens to contain a placeholder of its own.
std::string substitute(
    std::string_view tmpl,
    std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool hit = false;
        if (tmpl[i] == '{') {
            for (const auto& [key, val] : vars) {
                if (tmpl.compare(i, key.size(), key) == 0) {
                    out.append(val);
                    i += key.size();
                    hit = true;
                    break;
                }
            }
        }
        if (!hit) {
            out.push_back(tmpl[i]);
            ++i;
        }
    }
    return out;
}

void require_placeholder(const std::string& tmpl, std::string_view name, const char* what) {
    if (tmpl.find(name) == std::string::npos)
        throw ValidationError("bad-template",
                              std::string(what) + " is missing the " + std::string(name) +
                                  " placeholder");
}

void check_item(const ExamItem& item, const std::string& where) {
    if (item.choices.size() < 4 || item.choices.size() > 5)
        throw ValidationError("bad-item", where + ": expected 4 or 5 choices, got " +
                                              std::to_string(item.choices.size()));
    if (item.answer_index < 0 || std::size_t(item.answer_index) >= item.choices.size())
        throw ValidationError("bad-item", where + ": answer_index " +
                                              std::to_string(item.answer_index) +
                                              " outside the choice range");
}

bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char fold(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool matches_at(std::string_view text, std::size_t pos, std::string_view label) {
    if (label.empty() || pos + label.size() > text.size()) return false;
    for (std::size_t k = 0; k < label.size(); ++k)
        if (fold(text[pos + k]) != fold(label[k])) return false;
    if (pos > 0 && alnum(text[pos - 1])) return false;
    std::size_t end = pos + label.size();
    if (end < text.size() && alnum(text[end])) return false;
    return true;
}

// Worker pool over [0, count). A task that throws ValidationError aborts the
// whole run; the caller decides what other errors mean per item.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& task) {
    int threads = std::clamp(jobs, 1, 64);
    threads = int(std::min<std::size_t>(std::size_t(threads), count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
        for (;;) {
            if (abort.load(std::memory_order_relaxed)) return;
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                task(i);
            } catch (...) {
                {
                    std::lock_guard lock(fatal_mu);
                    if (!fatal) fatal = std::current_exception();
                }
                abort.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (fatal) std::rethrow_exception(fatal);
}

double score_of(Verdict ab, Verdict ba) {
    if (ab == Verdict::prefers_first && ba == Verdict::prefers_second) return 1.0;
    if (ab == Verdict::prefers_second && ba == Verdict::prefers_first) return 0.0;
    return 0.5;
}

Verdict run_judge_pass(const std::string& prompt, const std::string& first,
                       const std::string& second, client::ChatModel& judge,
                       const JudgeSpec& spec) {
    client::CompletionRequest req;
    req.model = spec.model;
    req.messages = {{"user", substitute(spec.tmpl.text, {{"{prompt}", prompt},
                                                         {"{response_a}", first},
                                                         {"{response_b}", second}})}};
    req.temperature = spec.temperature;
    req.max_tokens = spec.max_tokens;
    std::string out;
    try {
        out = judge.complete(req).text;
    } catch (const ValidationError&) {
        throw;
    } catch (const Error&) {
        return Verdict::unparseable;
    }
    static const std::vector<std::string> kVerdictLabels = {"1", "2"};
    auto idx = extract_choice(out, kVerdictLabels, 2);
    if (!idx) return Verdict::unparseable;
    return *idx == 0 ? Verdict::prefers_first : Verdict::prefers_second;
}

std::string generate_final(client::ChatModel& model, const PairwisePrompt& prompt,
                           const std::string& model_name, const PairwiseConfig& config) {
    std::vector<client::Message> messages;
    std::string last;
    for (const auto& turn : prompt.turns) {
        messages.push_back({"user", turn});
        client::CompletionRequest req;
        req.model = model_name;
        req.messages = messages;
        req.temperature = config.gen_temperature;
        req.max_tokens = config.gen_max_tokens;
        last = model.complete(req).text;
        messages.push_back({"assistant", last});
    }
    return last;
}

std::vector<std::string> read_jsonl(const std::string& path, std::vector<int>& linenos) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        lines.push_back(line);
        linenos.push_back(lineno);
    }
    return lines;
}

std::string require_str(const ojson& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get_ref<const std::string&>().empty())
        throw ValidationError("bad-item", where + ": missing or empty \"" + key + "\"");
    return it->get<std::string>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Exams

std::string default_exam_template() {
    return "Answer the following multiple-choice question. Reply with the label of the "
           "correct answer and nothing else.\n\n{question}\n\n{choices}\n\nAnswer:";
}

std::string render_exam_prompt(const ExamItem& item, const std::string& template_text,
                               const std::vector<std::string>& labels) {
    if (labels.size() < item.choices.size())
        throw ValidationError("bad-config", "label scheme provides " +
                                                std::to_string(labels.size()) +
                                                " labels but the item has " +
                                                std::to_string(item.choices.size()) +
                                                " choices");
    require_placeholder(template_text, "{question}", "exam template");
    require_placeholder(template_text, "{choices}", "exam template");
    std::string block;
    for (std::size_t i = 0; i < item.choices.size(); ++i) {
        if (i) block += '\n';
        block += labels[i];
        block += ". ";
        block += item.choices[i];
    }
    return substitute(template_text, {{"{question}", item.question}, {"{choices}", block}});
}

std::optional<int> extract_choice(std::string_view response,
                                  const std::vector<std::string>& labels, int num_choices) {
    int limit = int(std::min<std::size_t>(std::size_t(std::max(num_choices, 0)), labels.size()));
    if (limit == 0) return std::nullopt;
    for (std::size_t pos = 0; pos < response.size(); ++pos)
        for (int k = 0; k < limit; ++k)
            if (matches_at(response, pos, labels[std::size_t(k)])) return k;
    return std::nullopt;
}

ExamResult run_exam(const std::vector<ExamItem>& exam, client::ChatModel& model,
                    const ExamConfig& config) {
    if (exam.empty()) throw ValidationError("empty-dataset", "exam has no items");
    const std::string tmpl =
        config.template_text.empty() ? default_exam_template() : config.template_text;

    // Render everything first so configuration problems surface before any
    // request leaves the process.
    std::vector<client::Message> prefix;
    for (const auto& ex : config.exemplars) {
        check_item(ex, "exemplar " + ex.id);
        prefix.push_back({"user", render_exam_prompt(ex, tmpl, config.labels)});
        prefix.push_back({"assistant", config.labels[std::size_t(ex.answer_index)]});
    }
    std::vector<std::vector<client::Message>> messages(exam.size());
    for (std::size_t i = 0; i < exam.size(); ++i) {
        check_item(exam[i], "item " + exam[i].id);
        messages[i] = prefix;
        messages[i].push_back({"user", render_exam_prompt(exam[i], tmpl, config.labels)});
    }

    struct Slot {
        std::optional<int> extracted;
        bool correct = false;
        bool errored = false;
    };
    std::vector<Slot> slots(exam.size());
    parallel_for(exam.size(), config.jobs, [&](std::size_t i) {
        client::CompletionRequest req;
        req.model = config.model;
        req.messages = messages[i];
        req.temperature = config.temperature;
        req.max_tokens = config.max_tokens;
        try {
            auto resp = model.complete(req);
            slots[i].extracted =
                extract_choice(resp.text, config.labels, int(exam[i].choices.size()));
            slots[i].correct = slots[i].extracted.has_value() &&
                               *slots[i].extracted == exam[i].answer_index;
        } catch (const ValidationError&) {
            throw;
        } catch (const Error&) {
            slots[i].errored = true;
        }
    });

    ExamResult result;
    std::size_t errored = 0;
    std::map<std::string, std::pair<int, int>> tally;  // subject -> (correct, total)
    for (std::size_t i = 0; i < exam.size(); ++i) {
        const auto& slot = slots[i];
        if (slot.errored) ++errored;
        if (!slot.errored && !slot.extracted) ++result.unparsed_count;
        auto& [hits, total] = tally[exam[i].subject];
        total += 1;
        if (slot.correct) hits += 1;
        result.item_log.push_back({exam[i].id, slot.extracted, slot.correct, slot.errored});
    }
    if (errored * 2 > exam.size())
        throw Error("too-many-errors", std::to_string(errored) + " of " +
                                           std::to_string(exam.size()) + " items errored");

    double sum = 0.0;
    for (const auto& [subject, counts] : tally) {
        double acc = double(counts.first) / double(counts.second);
        result.per_subject_accuracy[subject] = acc;
        sum += acc;
    }
    result.macro_average = sum / double(tally.size());
    return result;
}

std::vector<ExamItem> load_exam_items(const std::string& path) {
    std::vector<int> linenos;
    auto lines = read_jsonl(path, linenos);
    std::vector<ExamItem> items;
    items.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string where = path + " line " + std::to_string(linenos[i]);
        auto j = jsonio::parse(lines[i], where);
        ExamItem item;
        item.id = require_str(j, "id", where);
        item.subject = require_str(j, "subject", where);
        item.question = require_str(j, "question", where);
        auto ch = j.find("choices");
        if (ch == j.end() || !ch->is_array())
            throw ValidationError("bad-item", where + ": \"choices\" must be an array");
        for (const auto& c : *ch) {
            if (!c.is_string())
                throw ValidationError("bad-item", where + ": choices must be strings");
            item.choices.push_back(c.get<std::string>());
        }
        auto ai = j.find("answer_index");
        if (ai == j.end() || !ai->is_number_integer())
            throw ValidationError("bad-item", where + ": \"answer_index\" must be an integer");
        item.answer_index = ai->get<int>();
        if (auto meta = j.find("meta"); meta != j.end() && meta->is_object())
            for (const auto& [k, v] : meta->items())
                item.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
        check_item(item, where);
        items.push_back(std::move(item));
    }
    return items;
}

// ---------------------------------------------------------------------------
// Pairwise judging

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::prefers_first: return "prefers_first";
        case Verdict::prefers_second: return "prefers_second";
        case Verdict::unparseable: return "unparseable";
    }
    return "unparseable";
}

JudgeTemplate judge_template_from_text(std::string text) {
    require_placeholder(text, "{prompt}", "judge template");
    require_placeholder(text, "{response_a}", "judge template");
    require_placeholder(text, "{response_b}", "judge template");
    return JudgeTemplate{std::move(text)};
}

JudgeTemplate load_judge_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io-open", "cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return judge_template_from_text(std::move(text));
}

JudgedComparison judge_pair_symmetric(const std::string& prompt_id, const std::string& prompt,
                                      const std::string& candidate, const std::string& reference,
                                      client::ChatModel& judge, const JudgeSpec& spec) {
    JudgedComparison cmp;
    cmp.prompt_id = prompt_id;
    cmp.verdict_ab = run_judge_pass(prompt, candidate, reference, judge, spec);
    cmp.verdict_ba = run_judge_pass(prompt, reference, candidate, judge, spec);
    cmp.score = score_of(cmp.verdict_ab, cmp.verdict_ba);
    return cmp;
}

std::string render_transcript(const std::vector<std::string>& turns) {
    if (turns.size() == 1) return turns[0];
    std::string out;
    for (const auto& turn : turns) {
        if (!out.empty()) out += "\n\n";
        out += "User: ";
        out += turn;
    }
    return out;
}

PairwiseResult run_pairwise_eval(const std::vector<PairwisePrompt>& prompts,
                                 client::ChatModel* candidate, client::ChatModel* reference,
                                 client::ChatModel& judge, const PairwiseConfig& config) {
    if (prompts.empty())
        throw ValidationError("empty-dataset", "pairwise dataset has no prompts");
    for (const auto& p : prompts) {
        if (p.turns.empty())
            throw ValidationError("bad-item", "prompt " + p.id + " has no turns");
        if (!p.candidate_response && !candidate)
            throw ValidationError("missing-response",
                                  "prompt " + p.id +
                                      " has no candidate_response and no candidate client");
        if (!p.reference_response && !reference)
            throw ValidationError("missing-response",
                                  "prompt " + p.id +
                                      " has no reference_response and no reference client");
    }

    PairwiseResult result;
    result.comparisons.resize(prompts.size());
    parallel_for(prompts.size(), config.jobs, [&](std::size_t i) {
        const auto& p = prompts[i];
        std::string cand_text, ref_text;
        try {
            cand_text = p.candidate_response
                            ? *p.candidate_response
                            : generate_final(*candidate, p, config.candidate_model, config);
            ref_text = p.reference_response
                           ? *p.reference_response
                           : generate_final(*reference, p, config.reference_model, config);
        } catch (const ValidationError&) {
            throw;
        } catch (const Error&) {
            // A response that never arrived cannot be judged either way.
            result.comparisons[i] = {p.id, Verdict::unparseable, Verdict::unparseable, 0.5};
            return;
        }
        result.comparisons[i] = judge_pair_symmetric(p.id, render_transcript(p.turns),
                                                     cand_text, ref_text, judge, config.judge);
    });

    double sum = 0.0;
    for (const auto& c : result.comparisons) sum += c.score;
    result.win_rate = 100.0 * sum / double(prompts.size());
    return result;
}

std::vector<PairwisePrompt> load_pairwise_prompts(const std::string& path) {
    std::vector<int> linenos;
    auto lines = read_jsonl(path, linenos);
    std::vector<PairwisePrompt> prompts;
    prompts.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string where = path + " line " + std::to_string(linenos[i]);
        auto j = jsonio::parse(lines[i], where);
        PairwisePrompt p;
        p.id = require_str(j, "id", where);
        auto turns = j.find("turns");
        if (turns == j.end() || !turns->is_array() || turns->empty())
            throw ValidationError("bad-item", where + ": \"turns\" must be a non-empty array");
        for (const auto& t : *turns) {
            if (!t.is_string())
                throw ValidationError("bad-item", where + ": turns must be strings");
            p.turns.push_back(t.get<std::string>());
        }
        if (auto it = j.find("candidate_response"); it != j.end() && it->is_string())
            p.candidate_response = it->get<std::string>();
        if (auto it = j.find("reference_response"); it != j.end() && it->is_string())
            p.reference_response = it->get<std::string>();
        prompts.push_back(std::move(p));
    }
    return prompts;
}

// ---------------------------------------------------------------------------
// Perplexity

double perplexity(const std::vector<double>& token_logprobs) {
    if (token_logprobs.empty())
        throw ValidationError("undefined", "perplexity of an empty sequence is undefined");
    double sum = 0.0;
    for (double v : token_logprobs) {
        if (v > 0.0)
            throw ValidationError("invalid-logprob",
                                  "logprob " + std::to_string(v) + " is positive");
        sum += v;
    }
    return std::exp(-sum / double(token_logprobs.size()));
}

// ---------------------------------------------------------------------------
// Reports

std::string exam_result_json(const ExamResult& result) {
    ojson j;
    j["macro_average"] = result.macro_average;
    j["unparsed_count"] = result.unparsed_count;
    j["items"] = result.item_log.size();
    j["per_subject_accuracy"] = ojson::object();
    for (const auto& [subject, acc] : result.per_subject_accuracy)
        j["per_subject_accuracy"][subject] = acc;
    return j.dump(2);
}

std::string exam_item_log_jsonl(const ExamResult& result) {
    std::string out;
    for (const auto& entry : result.item_log) {
        ojson j;
        j["id"] = entry.id;
        if (entry.extracted)
            j["extracted"] = *entry.extracted;
        else
            j["extracted"] = nullptr;
        j["correct"] = entry.correct;
        j["errored"] = entry.errored;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string pairwise_result_json(const PairwiseResult& result) {
    ojson j;
    j["win_rate"] = result.win_rate;
    j["items"] = result.comparisons.size();
    return j.dump(2);
}

std::string pairwise_log_jsonl(const PairwiseResult& result) {
    std::string out;
    for (const auto& c : result.comparisons) {
        ojson j;
        j["id"] = c.prompt_id;
        j["verdict_ab"] = to_string(c.verdict_ab);
        j["verdict_ba"] = to_string(c.verdict_ba);
        j["score"] = c.score;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace langkit::eval
