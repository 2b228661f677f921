#pragma once

// Model evaluation harness: multiple-choice exam scoring, symmetric pairwise
// judge comparisons, and perplexity from token logprobs.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langkit/client.hpp"

namespace langkit::eval {

// ---------------------------------------------------------------------------
// Multiple-choice exams

struct ExamItem {
    std::string id;
    std::string subject;
    std::string question;
    std::vector<std::string> choices;  // 4 or 5 entries
    int answer_index = 0;              // 0-based key into choices
    std::map<std::string, std::string> meta;
};

struct ExamItemLog {
    std::string id;
    std::optional<int> extracted;  // parsed answer index, absent when unparsable
    bool correct = false;
    bool errored = false;  // transport failure after retries
};

struct ExamResult {
    std::map<std::string, double> per_subject_accuracy;
    double macro_average = 0.0;  // unweighted mean over subjects
    int unparsed_count = 0;
    std::vector<ExamItemLog> item_log;  // input order
};

struct ExamConfig {
    std::string model;  // identifier sent with each request
    std::string template_text;  // defaults to default_exam_template()
    std::vector<std::string> labels = {"A", "B", "C", "D", "E"};
    std::vector<ExamItem> exemplars;  // few-shot examples, prepended in order
    double temperature = 0.0;
    int max_tokens = 32;
    int jobs = 1;
};

// Built-in prompt skeleton with {question} and {choices} placeholders.
std::string default_exam_template();

// Instantiates the template for one item. The choices block labels each
// choice in order. Throws "bad-config" when the label scheme is too short
// and "bad-template" when a required placeholder is absent.
std::string render_exam_prompt(const ExamItem& item, const std::string& template_text,
                               const std::vector<std::string>& labels);

// Index of the first standalone label occurrence in the response, where
// standalone means the match is not flanked by ASCII alphanumerics. Only the
// first num_choices labels participate. Latin labels match case-insensitively.
std::optional<int> extract_choice(std::string_view response,
                                  const std::vector<std::string>& labels, int num_choices);

// Sends every item once, grades the extracted answers, and aggregates
// accuracy per subject plus the unweighted macro average. Items whose
// requests still fail after client retries are scored incorrect; the run
// aborts with "too-many-errors" when more than half the items errored.
ExamResult run_exam(const std::vector<ExamItem>& exam, client::ChatModel& model,
                    const ExamConfig& config);

// JSONL rows of {"id","subject","question","choices","answer_index"} with an
// optional "meta" object of string values.
std::vector<ExamItem> load_exam_items(const std::string& path);

// ---------------------------------------------------------------------------
// Pairwise judged comparisons

enum class Verdict { prefers_first, prefers_second, unparseable };

std::string to_string(Verdict v);

struct JudgedComparison {
    std::string prompt_id;
    Verdict verdict_ab = Verdict::unparseable;  // pass 1: candidate shown first
    Verdict verdict_ba = Verdict::unparseable;  // pass 2: reference shown first
    double score = 0.5;  // for the candidate: 1.0 win, 0.0 loss, 0.5 draw
};

// Judge prompt with {prompt}, {response_a}, {response_b} placeholders. The
// text instructs the judge to reply "1" or "2".
struct JudgeTemplate {
    std::string text;
};

JudgeTemplate judge_template_from_text(std::string text);  // validates placeholders
JudgeTemplate load_judge_template(const std::string& path);

struct JudgeSpec {
    JudgeTemplate tmpl;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 16;
};

// Two judging passes with the responses swapped between them. The candidate
// scores 1.0 only when both passes prefer it; disagreement, including any
// unparsable or failed pass, is a 0.5 draw.
JudgedComparison judge_pair_symmetric(const std::string& prompt_id, const std::string& prompt,
                                      const std::string& candidate, const std::string& reference,
                                      client::ChatModel& judge, const JudgeSpec& spec);

struct PairwisePrompt {
    std::string id;
    std::vector<std::string> turns;  // user turns, in order
    std::optional<std::string> candidate_response;  // pre-generated, skips the client
    std::optional<std::string> reference_response;
};

struct PairwiseConfig {
    JudgeSpec judge;
    std::string candidate_model;
    std::string reference_model;
    double gen_temperature = 0.0;
    int gen_max_tokens = 512;
    int jobs = 1;
};

struct PairwiseResult {
    double win_rate = 0.0;  // 100 * mean per-item score
    std::vector<JudgedComparison> comparisons;  // input order
};

// Collects both models' final responses (live turn-by-turn generation, or the
// pre-generated ones when present), judges each pair symmetrically, and
// reports the candidate win-rate. candidate/reference may be null when every
// prompt carries the matching pre-generated response.
PairwiseResult run_pairwise_eval(const std::vector<PairwisePrompt>& prompts,
                                 client::ChatModel* candidate, client::ChatModel* reference,
                                 client::ChatModel& judge, const PairwiseConfig& config);

// JSONL rows of {"id","turns"} with optional "candidate_response" and
// "reference_response" strings.
std::vector<PairwisePrompt> load_pairwise_prompts(const std::string& path);

// The text the judge sees in place of {prompt}: the bare text for a single
// turn, a "User:"-prefixed transcript when there are several.
std::string render_transcript(const std::vector<std::string>& turns);

// ---------------------------------------------------------------------------
// Perplexity

// exp of the negated mean of natural-log token probabilities. Rejects empty
// input ("undefined") and positive entries ("invalid-logprob").
double perplexity(const std::vector<double>& token_logprobs);

// ---------------------------------------------------------------------------
// Report serialization (JSON text)

std::string exam_result_json(const ExamResult& result);        // summary object
std::string exam_item_log_jsonl(const ExamResult& result);     // one line per item
std::string pairwise_result_json(const PairwiseResult& result);
std::string pairwise_log_jsonl(const PairwiseResult& result);

}  // namespace langkit::eval
